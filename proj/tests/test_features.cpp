#include "airhold/error.hpp"
#include "airhold/features.hpp"

#include <doctest.h>

#include <cmath>

using namespace airhold;

namespace {

FlightRecord flight(const std::string& o, const std::string& d) {
    static const std::map<std::string, std::array<double, 3>> geo = {
        {"SP", {-23.5, -46.6, 760}}, {"RJ", {-22.9, -43.2, 3}}, {"MG", {-19.9, -43.9, 850}}, {"BA", {-12.9, -38.3, 20}}};
    FlightRecord r;
    r.origin = o;
    r.destination = d;
    r.lat_src = geo.at(o)[0];
    r.lon_src = geo.at(o)[1];
    r.alt_src_m = geo.at(o)[2];
    r.lat_dst = geo.at(d)[0];
    r.lon_dst = geo.at(d)[1];
    r.alt_dst_m = geo.at(d)[2];
    r.geodesic_km = geodesic_km(r.lat_src, r.lon_src, r.lat_dst, r.lon_dst);
    r.visibility_m = 9000;
    return r;
}

std::vector<FlightRecord> train_set() {
    return {flight("SP", "RJ"), flight("SP", "RJ"), flight("SP", "RJ"), flight("RJ", "SP"),
            flight("RJ", "MG"), flight("MG", "SP")};
}

}  // namespace

TEST_CASE("standard registry") {
    const auto reg = FeatureRegistry::standard();
    CHECK(reg.size() == 28);
    CHECK(reg.only(FeatureKind::graph).size() == 6);
    CHECK(reg.only(FeatureKind::indicator).names() == std::vector<std::string>{"unseen_route"});
    CHECK(FeatureRegistry::from_json(reg.to_json()) == reg);
    CHECK_THROWS_AS(FeatureRegistry({{"bogus", FeatureKind::tabular}}), Error);
    CHECK_THROWS_AS(FeatureRegistry({{"betweenness", FeatureKind::tabular}}), Error);
    CHECK_THROWS_AS(FeatureRegistry({{"visibility_m", FeatureKind::tabular}, {"visibility_m", FeatureKind::tabular}}),
                    Error);
}

TEST_CASE("graph features join onto flights by route") {
    const auto train = train_set();
    std::vector<FlightRecord> all = train;
    all.push_back(flight("MG", "RJ"));  // route never flown in training
    all.push_back(flight("SP", "RJ"));

    const auto aug = attach_graph_features(train, all);
    REQUIRE(aug.size() == all.size());

    const auto expected = compute_all_edge_features_map(build_flight_graph(train));
    for (std::size_t i = 0; i < train.size(); ++i) {
        CHECK_FALSE(aug[i].unseen_route);
        CHECK(aug[i].graph == expected.at({train[i].origin, train[i].destination}));
    }
    CHECK(aug[0].graph == aug[1].graph);
    CHECK(aug[6].unseen_route);
    CHECK(aug[6].graph == EdgeGraphFeatures{});
    CHECK(aug.back().graph == aug[0].graph);

    const auto m = build_matrix(aug, FeatureRegistry::standard());
    const auto col = [&](const std::string& n) {
        return static_cast<std::size_t>(std::find(m.names.begin(), m.names.end(), n) - m.names.begin());
    };
    CHECK(m.at(6, col("unseen_route")) == 1.0);
    for (const auto& s : FeatureRegistry::standard().only(FeatureKind::graph).specs()) CHECK(m.at(6, col(s.name)) == 0.0);
    CHECK(m.at(0, col("unseen_route")) == 0.0);
    CHECK(m.at(0, col("dd_dst")) == 3.0 - 2.0);  // RJ: in 3, out 2
}

TEST_CASE("graph features ignore non-training records") {
    const auto train = train_set();
    std::vector<FlightRecord> all = train;
    for (int i = 0; i < 5; ++i) all.push_back(flight("BA", "SP"));
    const auto with_test = attach_graph_features(train, all);
    const auto train_only = attach_graph_features(train, std::span<const FlightRecord>(train));
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(with_test[i].graph == train_only[i].graph);
    CHECK(with_test.back().unseen_route);
}

TEST_CASE("flight graph rejects conflicting airport coordinates") {
    auto train = train_set();
    train[2].lat_src += 1.0;
    CHECK_THROWS_AS(build_flight_graph(train), Error);
}

TEST_CASE("wind direction is encoded on the circle") {
    auto a = flight("SP", "RJ");
    auto b = a;
    a.wind_dir_deg = 0;
    b.wind_dir_deg = 360;
    const auto reg = FeatureRegistry({{"wind_dir_sin", FeatureKind::tabular}, {"wind_dir_cos", FeatureKind::tabular}});
    const auto ra = encode_row(AugmentedRecord{a, {}, false}, reg);
    const auto rb = encode_row(AugmentedRecord{b, {}, false}, reg);
    CHECK(ra == rb);
    CHECK(ra == std::vector<double>{0.0, 1.0});
}

TEST_CASE("matrix shape, labels and csv dump") {
    const auto reg = FeatureRegistry::standard();
    const auto empty = build_matrix(std::span<const AugmentedRecord>{}, reg);
    CHECK(empty.rows == 0);
    CHECK(empty.names == reg.names());
    const auto empty_csv = matrix_to_csv(empty);
    CHECK(std::count(empty_csv.begin(), empty_csv.end(), '\n') == 1);

    auto train = train_set();
    train[1].holding = true;
    train[1].holding_seconds = 420;
    const auto aug = attach_graph_features(train, train);
    const auto m = build_matrix(aug, reg);
    CHECK(m.rows == train.size());
    CHECK(m.values.size() == m.rows * reg.size());
    CHECK(m.labels_cls == std::vector<int>{0, 1, 0, 0, 0, 0});
    CHECK(m.labels_reg[1] == 420.0);

    const auto csv = matrix_to_csv(m);
    const auto header = csv.substr(0, csv.find('\n'));
    std::string expected;
    for (const auto& n : reg.names()) expected += n + ',';
    CHECK(header == expected + "label_holding,label_holding_seconds");

    const auto back = matrix_from_csv(csv);
    CHECK(back.names == m.names);
    CHECK(back.values == m.values);
    CHECK(back.labels_cls == m.labels_cls);
    CHECK(back.labels_reg == m.labels_reg);
    CHECK(matrix_to_csv(back) == csv);
    CHECK(matrix_to_csv(build_matrix(attach_graph_features(train, train), reg)) == csv);
}

TEST_CASE("non-finite values are rejected with row and feature") {
    auto r = flight("SP", "RJ");
    AugmentedRecord a{r, {}, false};
    a.graph.betweenness = std::nan("");
    std::vector<AugmentedRecord> rows{AugmentedRecord{r, {}, false}, a};
    try {
        build_matrix(rows, FeatureRegistry::standard());
        FAIL("expected error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);
        CHECK(msg.find("betweenness") != std::string::npos);
    }
}
