#include "airhold/error.hpp"
#include "airhold/eval.hpp"
#include "airhold/util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

using namespace airhold;

namespace {

// Counts values in [edge_b, edge_b+1) by walking a sorted copy; the final
// bin also takes values equal to hi.
std::vector<std::size_t> sorted_binning(std::vector<double> v, double lo, double hi, std::size_t bins) {
    std::sort(v.begin(), v.end());
    std::vector<std::size_t> out(bins, 0);
    std::size_t b = 0;
    for (double x : v) {
        while (b + 1 < bins && x >= lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(bins)) ++b;
        ++out[b];
    }
    return out;
}

}  // namespace

TEST_CASE("classification metrics examples") {
    const std::vector<int> y{1, 0, 1, 0, 0};
    const std::vector<double> p{0.9, 0.1, 0.8, 0.3, 0.49};
    const auto m = classification_metrics(y, p);
    CHECK(m.tp == 2);
    CHECK(m.tn == 3);
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);

    // 720 positives among 42,336 flights, everything predicted positive.
    std::vector<int> yy(42336, 0);
    std::fill(yy.begin(), yy.begin() + 720, 1);
    const std::vector<double> ones(yy.size(), 1.0);
    const auto all = classification_metrics(yy, ones);
    CHECK(all.recall == 1.0);
    CHECK(all.accuracy == doctest::Approx(720.0 / 42336.0).epsilon(1e-15));
    CHECK(std::abs(all.accuracy - 0.017) < 0.0005);
    CHECK(all.precision == all.accuracy);

    const std::vector<double> zeros(yy.size(), 0.0);
    const auto none = classification_metrics(yy, zeros);
    CHECK(none.precision_undefined);
    CHECK(none.precision == 0.0);
    CHECK(none.f1_undefined);
    CHECK_FALSE(none.recall_undefined);

    const std::vector<int> neg(3, 0);
    const std::vector<double> low(3, 0.2);
    CHECK(classification_metrics(neg, low).recall_undefined);

    CHECK_THROWS_AS(classification_metrics(y, std::vector<double>{0.5}), Error);
    CHECK_THROWS_AS(classification_metrics(std::vector<int>{1}, std::vector<double>{1.2}), Error);
    CHECK_THROWS_AS(classification_metrics(std::vector<int>{1}, std::vector<double>{NAN}), Error);
}

TEST_CASE("classification metric identities on random data") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(300);
        std::vector<int> y(n);
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.2);
            p[i] = rng.uniform();
        }
        double prev_recall = 2.0;
        for (double th : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            const auto m = classification_metrics(y, p, th);
            CHECK(m.n() == n);
            CHECK(m.accuracy == static_cast<double>(m.tp + m.tn) / static_cast<double>(n));
            if (m.precision + m.recall > 0)
                CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-15));
            CHECK(m.recall <= prev_recall);
            prev_recall = m.recall;
        }
    }
}

TEST_CASE("regression metrics") {
    const std::vector<double> y{0, 100, 250, 900, 1200.5};
    const auto same = regression_metrics(y, y, 10);
    CHECK(same.mse == 0.0);
    CHECK(same.mae == 0.0);
    CHECK(same.predicted == same.actual);

    double mean = 0;
    for (double v : y) mean += v;
    mean /= y.size();
    double var = 0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= y.size();
    const std::vector<double> flat(y.size(), mean);
    CHECK(regression_metrics(y, flat).mse == doctest::Approx(var).epsilon(1e-12));

    Rng rng(5);
    std::vector<double> t(5000), p(5000);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = 600 * std::exp(0.5 * rng.normal());
        p[i] = std::max(0.0, t[i] + 150 * rng.normal());
    }
    const auto r = regression_metrics(t, p, 50);
    CHECK(r.lo == 0.0);
    CHECK(r.actual == sorted_binning(t, r.lo, r.hi, 50));
    CHECK(r.predicted == sorted_binning(p, r.lo, r.hi, 50));
    std::size_t total = 0;
    for (auto c : r.actual) total += c;
    CHECK(total == t.size());

    CHECK_THROWS_AS(regression_metrics(y, std::vector<double>{1.0}), Error);
    CHECK_THROWS_AS(regression_metrics(std::vector<double>{-1.0}, std::vector<double>{1.0}), Error);
    CHECK_THROWS_AS(regression_metrics(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("reported table rows are internally consistent") {
    const auto res = table_consistency(reference_table());
    REQUIRE(res.size() == 6);
    for (const auto& r : res) {
        CAPTURE(r.model);
        CHECK(r.pass);
    }
    CHECK(res[0].f1_recomputed == doctest::Approx(0.1558).epsilon(1e-3));
    CHECK(res[4].f1_recomputed == doctest::Approx(0.032).epsilon(1e-9));

    const std::vector<TableRow> bad{{"x", 0.5, 0.5, 0.5, 0.9}};
    CHECK_FALSE(table_consistency(bad)[0].pass);
}

TEST_CASE("report formats") {
    const std::vector<int> y{1, 0, 1};
    const std::vector<double> p{0.9, 0.6, 0.2};
    const auto m = classification_metrics(y, p);
    const auto j = nlohmann::json::parse(metrics_to_json(m));
    CHECK(j["tp"] == 1);
    CHECK(j["fp"] == 1);
    CHECK(j["fn"] == 1);
    CHECK(j["precision"] == 0.5);
    CHECK(table_csv_row("gbdt", m) == "gbdt,0.3333,0.5000,0.5000,0.5000");
    CHECK(std::count(kTableCsvHeader, kTableCsvHeader + std::string(kTableCsvHeader).size(), ',') == 4);
}
