#include "airhold/error.hpp"
#include "airhold/gat.hpp"
#include "airhold/features.hpp"
#include "airhold/util.hpp"

#include "gat_fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace airhold;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double elu(double x) { return x > 0 ? x : std::exp(x) - 1.0; }

// Dense evaluation of one layer on a simple digraph: score matrix over
// (destination, source) pairs with the self pair always present, masked row
// softmax, then ELU of the attention-weighted transformed features.
MatrixXd dense_layer(const GatConfig& cfg, const GatParameters& p, const GraphBatch& b, const MatrixXd& H, int layer) {
    const int n = static_cast<int>(b.node_count());
    const int d = cfg.hidden_dim;
    const bool last = layer == cfg.layers - 1;
    MatrixXd out = MatrixXd::Zero(n, last ? d : d * cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
        const auto& hd = p.layers[static_cast<std::size_t>(layer)][static_cast<std::size_t>(h)];
        const MatrixXd Z = H * hd.W.transpose();
        MatrixXd S = MatrixXd::Constant(n, n, -INFINITY);
        for (int i = 0; i < n; ++i) {
            const double self = hd.a.segment(0, d).dot(Z.row(i)) + hd.a.segment(d, d).dot(Z.row(i));
            S(i, i) = self > 0 ? self : cfg.leaky_slope * self;
        }
        for (std::size_t k = 0; k < b.edge_count(); ++k) {
            const int i = b.dst[k], j = b.src[k];
            const VectorXd we = hd.W2 * b.edge_features.row(static_cast<Eigen::Index>(k)).transpose();
            const double r = hd.a.segment(0, d).dot(Z.row(i)) + hd.a.segment(d, d).dot(Z.row(j)) +
                             hd.a.segment(2 * d, d).dot(we);
            S(i, j) = r > 0 ? r : cfg.leaky_slope * r;
        }
        MatrixXd A = MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            double z = 0;
            for (int j = 0; j < n; ++j)
                if (std::isfinite(S(i, j))) z += std::exp(S(i, j));
            for (int j = 0; j < n; ++j)
                if (std::isfinite(S(i, j))) A(i, j) = std::exp(S(i, j)) / z;
        }
        const MatrixXd act = (A * Z).unaryExpr(&elu);
        if (last)
            out += act / cfg.heads;
        else
            out.middleCols(h * d, d) = act;
    }
    return out;
}

GraphBatch permuted(const GraphBatch& b, const std::vector<int>& perm) {
    GraphBatch q = b;
    for (std::size_t i = 0; i < b.node_count(); ++i) {
        q.codes[static_cast<std::size_t>(perm[i])] = b.codes[i];
        q.node_features.row(perm[i]) = b.node_features.row(static_cast<Eigen::Index>(i));
    }
    for (std::size_t k = 0; k < b.edge_count(); ++k) {
        q.src[k] = perm[static_cast<std::size_t>(b.src[k])];
        q.dst[k] = perm[static_cast<std::size_t>(b.dst[k])];
    }
    return q;
}

GraphBatch single_destination(int parallel, bool identical) {
    GraphBatch b;
    b.codes = {"SBRJ", "SBSP"};
    b.node_features = MatrixXd::Random(2, 5);
    b.edge_features = MatrixXd::Zero(parallel, 3);
    for (int k = 0; k < parallel; ++k) {
        b.src.push_back(1);
        b.dst.push_back(0);
        b.labels.push_back(k % 2);
        b.edge_features.row(k) << 0.3, -1.2, identical ? 0.7 : 0.7 + k;
    }
    return b;
}

}  // namespace

TEST_CASE("config validation") {
    GatConfig c;
    CHECK_NOTHROW(c.validate());
    c.layers = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.layers = 65;
    CHECK_THROWS_AS(c.validate(), Error);
    c.layers = 30;
    c.heads = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("attention weights") {
    const auto cfg = oracle::small_config(3, 5);
    const auto b = oracle::random_batch(1, 12, 40, 5);
    const auto p = init_parameters(cfg);
    const auto m = b.edge_count();
    for (int l = 0; l < cfg.layers; ++l)
        for (int h = 0; h < cfg.heads; ++h) {
            const auto alpha = attention_scores(cfg, p, b, l, h);
            REQUIRE(alpha.size() == static_cast<Eigen::Index>(m + b.node_count()));
            std::vector<double> sum(b.node_count(), 0.0);
            for (std::size_t k = 0; k < m; ++k) sum[static_cast<std::size_t>(b.dst[k])] += alpha[static_cast<Eigen::Index>(k)];
            for (std::size_t i = 0; i < b.node_count(); ++i) sum[i] += alpha[static_cast<Eigen::Index>(m + i)];
            for (double s : sum) CHECK(std::abs(s - 1.0) <= 1e-12);
            for (Eigen::Index k = 0; k < alpha.size(); ++k) CHECK((alpha[k] > 0 && alpha[k] <= 1));
        }

    SUBCASE("a node without incoming flights attends only to itself") {
        auto one = single_destination(1, true);
        auto c = cfg;
        c.edge_dim = 3;
        const auto alpha = attention_scores(c, init_parameters(c), one, 0, 0);
        CHECK(alpha[2] == 1.0);  // self-loop of SBSP
        CHECK(alpha[0] + alpha[1] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("identical parallel flights share attention equally") {
        auto three = single_destination(3, true);
        auto c = cfg;
        c.edge_dim = 3;
        const auto pp = init_parameters(c);
        for (int h = 0; h < c.heads; ++h) {
            const auto alpha = attention_scores(c, pp, three, 0, h);
            CHECK(alpha[0] == alpha[1]);
            CHECK(alpha[1] == alpha[2]);
            CHECK(3 * alpha[0] + alpha[3] == doctest::Approx(1.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("layer forward matches a dense evaluation") {
    SUBCASE("two nodes, one flight") {
        auto cfg = oracle::small_config(1, 3);
        GraphBatch b;
        b.codes = {"A", "B"};
        b.node_features = MatrixXd::Random(2, 5);
        b.src = {0};
        b.dst = {1};
        b.labels = {1};
        b.edge_features = MatrixXd::Random(1, 3);
        const auto p = init_parameters(cfg);
        const MatrixXd got = layer_forward(cfg, p, b, 0, b.node_features);
        const MatrixXd want = dense_layer(cfg, p, b, b.node_features, 0);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("random simple digraphs, stacked layers") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed);
            auto cfg = oracle::small_config(3, 4);
            cfg.seed = seed;
            GraphBatch b;
            const int n = 7;
            for (int i = 0; i < n; ++i) b.codes.push_back("N" + std::to_string(i));
            b.node_features = MatrixXd::Random(n, 5);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j && rng.bernoulli(0.35)) {
                        b.src.push_back(j);
                        b.dst.push_back(i);
                        b.labels.push_back(0);
                    }
            b.edge_features = MatrixXd::Random(static_cast<Eigen::Index>(b.src.size()), 4);
            const auto p = init_parameters(cfg);
            MatrixXd h = b.node_features, hd = b.node_features;
            for (int l = 0; l < cfg.layers; ++l) {
                h = layer_forward(cfg, p, b, l, h);
                hd = dense_layer(cfg, p, b, hd, l);
                CHECK((h - hd).cwiseAbs().maxCoeff() <= 1e-12);
            }
            CHECK((embed_nodes(cfg, p, b) - h).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("zero parameters give zero embeddings") {
        auto cfg = oracle::small_config(2, 5);
        cfg.init = GatInit::zero;
        const auto b = oracle::random_batch(3, 10, 30, 5);
        CHECK(embed_nodes(cfg, init_parameters(cfg), b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("relabeling nodes permutes embeddings and keeps predictions") {
    const auto cfg = oracle::small_config(3, 5);
    const auto b = oracle::random_batch(7, 15, 45, 5);
    const auto p = init_parameters(cfg);
    std::vector<int> perm(b.node_count());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(99);
    rng.shuffle(perm);
    const auto q = permuted(b, perm);
    const MatrixXd hb = embed_nodes(cfg, p, b), hq = embed_nodes(cfg, p, q);
    for (std::size_t i = 0; i < b.node_count(); ++i)
        CHECK((hb.row(static_cast<Eigen::Index>(i)) - hq.row(perm[i])).cwiseAbs().maxCoeff() <= 1e-12);
    const auto yb = edge_predict(cfg, p, b), yq = edge_predict(cfg, p, q);
    for (std::size_t k = 0; k < yb.size(); ++k) CHECK(yb[k] == doctest::Approx(yq[k]).epsilon(1e-12));
}

TEST_CASE("edge predictions") {
    auto cfg = oracle::small_config(2, 3);
    const auto p = init_parameters(cfg);
    const auto same = edge_predict(cfg, p, single_destination(4, true));
    CHECK(same.size() == 4);
    for (double y : same) CHECK(y == same[0]);
    const auto diff = edge_predict(cfg, p, single_destination(4, false));
    CHECK(diff[0] != diff[1]);

    const auto b = oracle::random_batch(5, 20, 60, 3);
    for (double y : edge_predict(cfg, p, b)) CHECK((y > 0 && y < 1));

    cfg.init = GatInit::zero;
    for (double y : edge_predict(cfg, init_parameters(cfg), b)) CHECK(y == 0.5);

    auto wrong = cfg;
    wrong.edge_dim = 4;
    CHECK_THROWS_AS(edge_predict(wrong, init_parameters(wrong), b), Error);
}

TEST_CASE("gradient check") {
    const auto b = oracle::random_batch(21, 20, 60, 4);
    for (int layers : {1, 3, 5}) {
        auto cfg = oracle::small_config(layers, 4);
        cfg.heads = 4;
        cfg.hidden_dim = 8;
        const auto p = init_parameters(cfg);
        const double err = gradient_check(cfg, p, b, 3.0);
        CAPTURE(layers);
        CHECK(err < 1e-4);
        if (layers == 1) CHECK(gradient_check(cfg, p, b, 3.0, 1e-1) > 10 * err);
    }

    SUBCASE("blocked output head zeroes every upstream gradient on both sides") {
        auto cfg = oracle::small_config(2, 4);
        auto p = init_parameters(cfg);
        p.m2.setZero();
        const auto g = gat_gradient(cfg, p, b, 1.0);
        for (const auto& layer : g.layers)
            for (const auto& hd : layer) {
                CHECK(hd.W.cwiseAbs().maxCoeff() == 0.0);
                CHECK(hd.a.cwiseAbs().maxCoeff() == 0.0);
            }
        CHECK(gradient_check(cfg, p, b) < 1e-6);
    }
}

TEST_CASE("training") {
    const auto b = oracle::random_batch(31, 30, 90, 4);
    auto cfg = oracle::small_config(2, 4);
    cfg.epochs = 60;
    cfg.learning_rate = 0.2;

    SUBCASE("loss decreases and is reproducible") {
        const auto r = train_gat(b, cfg);
        REQUIRE(r.loss.size() == 61);
        CHECK(r.loss.back() < r.loss.front());
        const auto again = train_gat(b, cfg);
        CHECK(again.loss == r.loss);
        // Regression baseline from this fixture.
        CHECK(r.loss.front() == doctest::Approx(0.8090343918497898).epsilon(1e-9));
        CHECK(r.loss.back() == doctest::Approx(0.29243447608163303).epsilon(1e-9));
    }
    SUBCASE("zero learning rate leaves parameters alone") {
        cfg.learning_rate = 0.0;
        const auto r = train_gat(b, cfg);
        for (double l : r.loss) CHECK(l == r.loss.front());
        CHECK(save_gat({cfg, r.params, {}}) == save_gat({cfg, init_parameters(cfg), {}}));
    }
    SUBCASE("zero init starts at ln 2") {
        cfg.init = GatInit::zero;
        CHECK(train_gat(b, cfg).loss.front() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    SUBCASE("errors") {
        auto one = b;
        std::fill(one.labels.begin(), one.labels.end(), 0);
        CHECK_THROWS_AS(train_gat(one, cfg), Error);
        cfg.learning_rate = 1e200;
        try {
            train_gat(b, cfg);
            FAIL("expected divergence");
        } catch (const Error& e) {
            CHECK(e.kind() == "divergence");
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        }
    }
}

TEST_CASE("model file round trip") {
    auto cfg = oracle::small_config(3, 4);
    const auto p = init_parameters(cfg);
    GatModel m{cfg, p, {{1, 2, 3, 4, 5}, {1, 1, 1, 1, 2}, {0, 0, 0, 0}, {1, 1, 1, 1}}};
    const auto text = save_gat(m);
    const auto back = load_gat(text);
    CHECK(save_gat(back) == text);
    const auto b = oracle::random_batch(4, 10, 25, 4);
    CHECK(edge_predict(back.config, back.params, b) == edge_predict(cfg, p, b));
    CHECK_THROWS_AS(load_gat(text.substr(0, 100)), Error);
    auto bad = text;
    bad.replace(bad.find(kGatModelVersion), std::string(kGatModelVersion).size(), "airhold-gat/0");
    try {
        load_gat(bad);
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(e.kind() == "model_version");
    }
}

TEST_CASE("batches from flight records keep every flight") {
    SynthConfig sc;
    sc.n = 600;
    sc.positives = 30;
    sc.airports = 8;
    const auto ds = synth_generate(sc);
    const auto [train, test] = stratified_split(ds, 0.2, 3);
    const std::string gone = ds.records[0].destination;
    std::vector<FlightRecord> tr = train.records;
    tr.erase(std::remove_if(tr.begin(), tr.end(), [&](const FlightRecord& r) { return r.destination == gone || r.origin == gone; }),
             tr.end());
    const auto net = build_flight_graph(tr);
    const auto st = fit_standardizer(net, tr);
    const auto b = make_batch(net, tr, st);
    CHECK(b.edge_count() == tr.size());
    CHECK(b.edge_features.cols() == static_cast<Eigen::Index>(gat_edge_feature_names().size()));
    for (Eigen::Index j = 0; j < b.edge_features.cols(); ++j) CHECK(std::abs(b.edge_features.col(j).mean()) < 1e-9);

    // Airports missing from the training network still get a node.
    const auto full = make_batch(net, ds.records, st);
    CHECK(full.node_count() == b.node_count() + 1);
    CHECK(full.edge_count() == ds.records.size());
}
