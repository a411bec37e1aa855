#include "airhold/error.hpp"
#include "airhold/features.hpp"
#include "airhold/gbdt.hpp"
#include "airhold/service.hpp"
#include "airhold/util.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

using namespace airhold;
using nlohmann::json;

namespace {

struct Fixture {
    Dataset data;
    std::vector<FlightRecord> train;
    FeatureMatrix matrix;
    std::shared_ptr<const ModelSnapshot> snap;
    EdgeKey dropped;
};

// Small planted dataset; one route is held out of training so the snapshot
// has an unseen route between two known airports.
const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture fx;
        fx.data = synth_generate({5, 6000, 300, 8});
        fx.dropped = {fx.data.records[0].origin, fx.data.records[0].destination};
        for (const auto& r : fx.data.records)
            if (EdgeKey{r.origin, r.destination} != fx.dropped) fx.train.push_back(r);
        auto graph = build_flight_graph(fx.train);
        const auto reg = FeatureRegistry::standard();
        fx.matrix = build_matrix(attach_graph_features(RouteFeatureTable(graph), fx.train), reg);
        TrainConfig cfg;
        cfg.rounds = 40;
        auto cls = train_classifier(fx.matrix, cfg);
        auto rg = train_regressor(fx.matrix, cfg);
        fx.snap = make_snapshot(std::move(graph), reg, std::move(cls), std::move(rg));
        return fx;
    }();
    return f;
}

json scenario_json(const FlightRecord& r) { return json::parse(scenario_to_json(scenario_from_record(r))); }

struct Running {
    Service svc;
    httplib::Client cli;
    explicit Running(std::shared_ptr<const ModelSnapshot> s)
        : svc(std::move(s)), cli("127.0.0.1", svc.bind("127.0.0.1", 0)) {
        svc.start();
    }
};

}  // namespace

TEST_CASE("scenario parsing") {
    const auto& fx = fixture();
    const auto body = scenario_to_json(scenario_from_record(fx.train[3]));
    const auto req = parse_scenario(body);
    CHECK(req.inputs.origin == fx.train[3].origin);
    CHECK(req.inputs.visibility_m == fx.train[3].visibility_m);
    CHECK_FALSE(req.id);

    auto j = json::parse(body);
    j.erase("visibility_m");
    j["holding"] = true;
    j["wind_speed_kt"] = "fast";
    j["colour"] = 1;
    try {
        parse_scenario(j.dump());
        FAIL("expected request error");
    } catch (const RequestError& e) {
        std::set<std::string> fields;
        for (const auto& f : e.fields()) fields.insert(f.field);
        CHECK(fields == std::set<std::string>{"visibility_m", "holding", "wind_speed_kt", "colour"});
    }
    CHECK_THROWS_AS(parse_scenario("{not json"), RequestError);
    CHECK_THROWS_AS(parse_scenario("[]"), RequestError);
}

TEST_CASE("predict_scenario matches the batch path exactly") {
    const auto& fx = fixture();
    const auto batch = predict_all(fx.snap->classifier, fx.matrix);
    const auto delay = predict_all(fx.snap->regressor, fx.matrix);
    for (std::size_t i = 0; i < fx.train.size(); i += 7) {
        const auto resp = predict_scenario(*fx.snap, parse_scenario(scenario_to_json(scenario_from_record(fx.train[i]))));
        CHECK(resp.holding_probability == batch[i]);
        CHECK(resp.predicted_delay_s == delay[i]);
        CHECK_FALSE(resp.unseen_route);
    }
}

TEST_CASE("planted visibility signal and unseen routes") {
    const auto& fx = fixture();
    auto base = scenario_from_record(fx.train[0]);
    base.inputs.visibility_m = 9999;
    base.inputs.fc_visibility_m = 9999;
    auto fog = base;
    fog.inputs.visibility_m = 300;
    fog.inputs.fc_visibility_m = 300;
    CHECK(predict_scenario(*fx.snap, fog).holding_probability > predict_scenario(*fx.snap, base).holding_probability);

    auto unseen = base;
    unseen.inputs.origin = fx.dropped.first;
    unseen.inputs.destination = fx.dropped.second;
    const auto r = predict_scenario(*fx.snap, unseen);
    CHECK(r.unseen_route);
    CHECK(r.graph_features == EdgeGraphFeatures{});
    CHECK((r.holding_probability >= 0 && r.holding_probability <= 1));

    auto unknown = base;
    unknown.inputs.origin = "ZZZZ";
    CHECK_THROWS_AS(predict_scenario(*fx.snap, unknown), UnknownNodeError);
    auto bad = base;
    bad.inputs.visibility_m = -5;
    CHECK_THROWS_AS(predict_scenario(*fx.snap, bad), RequestError);
}

TEST_CASE("http endpoints") {
    const auto& fx = fixture();
    Running run(fx.snap);
    auto& cli = run.cli;

    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
    const auto hj = json::parse(health->body);
    CHECK(hj["status"] == "ok");
    CHECK(hj["model_versions"]["classifier"] == fx.snap->classifier_version);

    const auto net = json::parse(cli.Get("/network")->body);
    CHECK(net["nodes"].size() == fx.snap->table.graph().node_count());
    CHECK(net["edges"].size() == fx.snap->table.graph().edge_count());
    CHECK(net["edges"][0].contains("features"));

    const auto imp = json::parse(cli.Get("/importances")->body)["importances"];
    double total = 0;
    for (const auto& [k, v] : imp.items()) total += v.get<double>();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    auto s1 = scenario_json(fx.train[10]);
    s1["id"] = "a";
    auto s2 = scenario_json(fx.train[20]);
    const auto p1 = cli.Post("/predict", s1.dump(), "application/json");
    const auto p1b = cli.Post("/predict", s1.dump(), "application/json");
    const auto p2 = cli.Post("/predict", s2.dump(), "application/json");
    REQUIRE(p1);
    CHECK(p1->status == 200);
    CHECK(p1->body == p1b->body);
    CHECK(json::parse(p1->body)["id"] == "a");
    const auto sim = cli.Post("/simulate", json::array({s1, s2}).dump(), "application/json");
    REQUIRE(sim);
    CHECK(sim->status == 200);
    const auto sj = json::parse(sim->body);
    REQUIRE(sj.size() == 2);
    CHECK(sj[0] == json::parse(p1->body));
    CHECK(sj[1] == json::parse(p2->body));

    auto unknown = s1;
    unknown["destination"] = "QQQQ";
    const auto u = cli.Post("/predict", unknown.dump(), "application/json");
    CHECK(u->status == 422);
    CHECK(json::parse(u->body)["error"] == "unknown_airport");
    CHECK(cli.Post("/simulate", json::array({s1, unknown}).dump(), "application/json")->status == 422);

    const auto bad = cli.Post("/predict", "{\"origin\": ", "application/json");
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["fields"][0]["field"] == "body");
    auto partial = s1;
    partial.erase("flight_hour");
    const auto pb = cli.Post("/simulate", json::array({s2, partial}).dump(), "application/json");
    CHECK(pb->status == 400);
    CHECK(json::parse(pb->body)["fields"][0]["field"] == "[1].flight_hour");

    std::string body = "[";
    for (std::size_t i = 0; i <= kMaxSimulateBatch; ++i) body += i ? ",{}" : "{}";
    body += "]";
    CHECK(cli.Post("/simulate", body, "application/json")->status == 413);
    CHECK(cli.Post("/simulate", "[]", "application/json")->body == "[]");

    const auto pre = cli.Options("/predict");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("concurrent identical requests see the same snapshot") {
    const auto& fx = fixture();
    Running run(fx.snap);
    const auto body = scenario_json(fx.train[42]).dump();
    const auto expected = handle_predict(*fx.snap, body).body;
    std::atomic<int> mismatches{0}, failures{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < 8; ++t)
        workers.emplace_back([&] {
            httplib::Client c("127.0.0.1", run.svc.port());
            c.set_keep_alive(true);
            c.set_tcp_nodelay(true);
            for (int i = 0; i < 1250; ++i) {
                auto r = c.Post("/predict", body, "application/json");
                if (!r || r->status != 200)
                    ++failures;
                else if (r->body != expected)
                    ++mismatches;
            }
        });
    for (auto& w : workers) w.join();
    CHECK(failures == 0);
    CHECK(mismatches == 0);
}

TEST_CASE("startup errors and model directory round trip") {
    const auto& fx = fixture();
    Running run(fx.snap);
    Service second(fx.snap);
    CHECK_THROWS_AS(second.bind("127.0.0.1", run.svc.port()), Error);

    const auto dir = std::filesystem::temp_directory_path() / "airhold_service_test";
    std::filesystem::create_directories(dir);
    save_model_dir(dir.string(), fx.snap->registry, fx.snap->classifier, fx.snap->regressor);
    write_file((dir / "graph.json").string(), graph_to_json(fx.snap->table.graph()));
    const auto loaded = load_snapshot(dir.string(), (dir / "graph.json").string());
    const auto body = scenario_json(fx.train[5]).dump();
    CHECK(handle_predict(*loaded, body).body == handle_predict(*fx.snap, body).body);
    std::filesystem::remove_all(dir);

    auto reg = fx.snap->regressor;
    reg.feature_names.pop_back();
    CHECK_THROWS_AS(make_snapshot(fx.snap->table.graph(), fx.snap->registry, fx.snap->classifier, reg), Error);
}
