#include "airhold/gat.hpp"

#include "airhold/error.hpp"
#include "airhold/features.hpp"
#include "airhold/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace airhold {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void GatConfig::validate() const {
    if (layers < 1 || layers > 64) throw Error("config", "layers must be in [1, 64]");
    if (heads < 1) throw Error("config", "heads must be >= 1");
    if (node_dim < 1 || hidden_dim < 1 || mlp_hidden < 1) throw Error("config", "dimensions must be >= 1");
    if (edge_dim < 0) throw Error("config", "edge_dim must be >= 0");
    if (!(leaky_slope > 0.0) || !(leaky_slope < 1.0)) throw Error("config", "leaky_slope must be in (0, 1)");
    if (positive_class_weight && !(*positive_class_weight > 0.0))
        throw Error("config", "positive_class_weight must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("config", "learning_rate must be >= 0");
    if (epochs < 0) throw Error("config", "epochs must be >= 0");
}

int GatConfig::input_width(int l) const {
    if (l == 0) return node_dim;
    if (l == layers) return hidden_dim;
    return hidden_dim * heads;
}

namespace {

using TensorVisitor = std::function<void(const std::string&, Eigen::Index, Eigen::Index, double*)>;

template <class Params, class F>
void visit(Params& p, F&& f) {
    for (std::size_t l = 0; l < p.layers.size(); ++l)
        for (std::size_t h = 0; h < p.layers[l].size(); ++h) {
            auto& hd = p.layers[l][h];
            const std::string prefix = "layer" + std::to_string(l) + ".head" + std::to_string(h) + ".";
            f(prefix + "W", hd.W.rows(), hd.W.cols(), hd.W.data());
            f(prefix + "W2", hd.W2.rows(), hd.W2.cols(), hd.W2.data());
            f(prefix + "a", hd.a.rows(), Eigen::Index{1}, hd.a.data());
        }
    f("mlp.M1", p.M1.rows(), p.M1.cols(), p.M1.data());
    f("mlp.b1", p.b1.rows(), Eigen::Index{1}, p.b1.data());
    f("mlp.m2", p.m2.rows(), Eigen::Index{1}, p.m2.data());
    f("mlp.b2", Eigen::Index{1}, Eigen::Index{1}, &p.b2);
}

}  // namespace

void GatParameters::for_each(const TensorVisitor& f) { visit(*this, f); }

void GatParameters::for_each(
    const std::function<void(const std::string&, Eigen::Index, Eigen::Index, const double*)>& f) const {
    visit(*this, f);
}

GatParameters init_parameters(const GatConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const bool zero = cfg.init == GatInit::zero;
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
        MatrixXd m = MatrixXd::Zero(rows, cols);
        if (zero) return m;
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-limit, limit);
        return m;
    };
    GatParameters p;
    const int d = cfg.hidden_dim;
    for (int l = 0; l < cfg.layers; ++l) {
        std::vector<GatHead> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            GatHead hd;
            hd.W = glorot(d, cfg.input_width(l));
            hd.W2 = glorot(d, cfg.edge_dim);
            hd.a = glorot(3 * d, 1);
            heads.push_back(std::move(hd));
        }
        p.layers.push_back(std::move(heads));
    }
    const int f = cfg.input_width(cfg.layers);
    p.M1 = glorot(cfg.mlp_hidden, 2 * f + cfg.edge_dim);
    p.b1 = VectorXd::Zero(cfg.mlp_hidden);
    p.m2 = glorot(cfg.mlp_hidden, 1);
    p.b2 = 0.0;
    return p;
}

void GraphBatch::validate() const {
    const auto n = static_cast<int>(codes.size());
    if (node_features.rows() != n) throw Error("batch", "node_features rows != node count");
    if (dst.size() != src.size() || labels.size() != src.size())
        throw Error("batch", "src, dst and labels must have equal length");
    if (edge_features.rows() != static_cast<Eigen::Index>(src.size()))
        throw Error("batch", "edge_features rows != edge count");
    for (std::size_t k = 0; k < src.size(); ++k)
        if (src[k] < 0 || src[k] >= n || dst[k] < 0 || dst[k] >= n)
            throw Error("batch", "edge " + std::to_string(k) + " endpoint out of range");
    if (!node_features.allFinite() || !edge_features.allFinite()) throw Error("batch", "non-finite feature");
}

std::vector<std::string> gat_edge_feature_names() { return FeatureRegistry::standard().only(FeatureKind::tabular).names(); }

namespace {

std::vector<double> node_row(const AirportNode& n, Strengths s) {
    return {n.lat, n.lon, n.altitude, static_cast<double>(s.in), static_cast<double>(s.out)};
}

void mean_std(const std::vector<std::vector<double>>& rows, std::size_t width, std::vector<double>& mean,
              std::vector<double>& sd) {
    mean.assign(width, 0.0);
    sd.assign(width, 1.0);
    if (rows.empty()) return;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t j = 0; j < width; ++j) mean[j] += r[j];
    for (auto& m : mean) m /= n;
    std::vector<double> var(width, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < width; ++j) var[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
    for (std::size_t j = 0; j < width; ++j) {
        const double s = std::sqrt(var[j] / n);
        sd[j] = s > 1e-12 ? s : 1.0;
    }
}

std::vector<std::vector<double>> edge_rows(std::span<const FlightRecord> flights) {
    const auto reg = FeatureRegistry::standard().only(FeatureKind::tabular);
    std::vector<std::vector<double>> rows;
    rows.reserve(flights.size());
    for (const auto& f : flights) rows.push_back(encode_row(AugmentedRecord{f, {}, false}, reg));
    return rows;
}

}  // namespace

GatStandardizer fit_standardizer(const WeightedDigraph& network, std::span<const FlightRecord> flights) {
    GatStandardizer s;
    std::vector<std::vector<double>> nodes;
    for (std::size_t v = 0; v < network.node_count(); ++v) nodes.push_back(node_row(network.node(v), strengths(network, v)));
    mean_std(nodes, 5, s.node_mean, s.node_std);
    mean_std(edge_rows(flights), gat_edge_feature_names().size(), s.edge_mean, s.edge_std);
    return s;
}

GraphBatch make_batch(const WeightedDigraph& network, std::span<const FlightRecord> flights,
                      const GatStandardizer& standardizer) {
    std::map<std::string, std::vector<double>> raw;
    for (std::size_t v = 0; v < network.node_count(); ++v)
        raw[network.node(v).code] = node_row(network.node(v), strengths(network, v));
    for (const auto& f : flights) {
        raw.try_emplace(f.origin, std::vector<double>{f.lat_src, f.lon_src, f.alt_src_m, 0.0, 0.0});
        raw.try_emplace(f.destination, std::vector<double>{f.lat_dst, f.lon_dst, f.alt_dst_m, 0.0, 0.0});
    }
    GraphBatch b;
    b.node_features.resize(static_cast<Eigen::Index>(raw.size()), 5);
    std::map<std::string, int> index;
    for (const auto& [code, row] : raw) {
        const auto i = static_cast<Eigen::Index>(b.codes.size());
        index[code] = static_cast<int>(i);
        b.codes.push_back(code);
        for (std::size_t j = 0; j < 5; ++j)
            b.node_features(i, static_cast<Eigen::Index>(j)) = (row[j] - standardizer.node_mean[j]) / standardizer.node_std[j];
    }
    const auto rows = edge_rows(flights);
    const std::size_t de = standardizer.edge_mean.size();
    b.edge_features.resize(static_cast<Eigen::Index>(flights.size()), static_cast<Eigen::Index>(de));
    for (std::size_t k = 0; k < flights.size(); ++k) {
        b.src.push_back(index.at(flights[k].origin));
        b.dst.push_back(index.at(flights[k].destination));
        b.labels.push_back(flights[k].holding ? 1 : 0);
        for (std::size_t j = 0; j < de; ++j)
            b.edge_features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
                (rows[k][j] - standardizer.edge_mean[j]) / standardizer.edge_std[j];
    }
    b.validate();
    return b;
}

namespace {

double elu(double x) { return x > 0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0 ? 1.0 : std::exp(x); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

// Flights first, then one self-loop per node with a zero edge feature vector.
struct ExtendedEdges {
    std::vector<int> src, dst;
    int flights = 0;
};

ExtendedEdges extend(const GraphBatch& b) {
    ExtendedEdges e{b.src, b.dst, static_cast<int>(b.src.size())};
    for (int i = 0; i < static_cast<int>(b.node_count()); ++i) {
        e.src.push_back(i);
        e.dst.push_back(i);
    }
    return e;
}

struct HeadCache {
    MatrixXd Z;    // input * W^T
    VectorXd r;    // raw scores before LeakyReLU
    VectorXd alpha;
    MatrixXd pre;  // aggregated messages before ELU
};

struct LayerCache {
    MatrixXd input;
    std::vector<HeadCache> heads;
};

struct Forward {
    std::vector<LayerCache> layers;
    MatrixXd H;  // final embeddings
    MatrixXd X;  // MLP inputs per flight
    MatrixXd U;  // MLP pre-activations
    VectorXd z;
    VectorXd prob;
};

HeadCache head_forward(const GatConfig& cfg, const GatHead& hd, const GraphBatch& b, const ExtendedEdges& ee,
                       const MatrixXd& input) {
    const int d = cfg.hidden_dim;
    const auto n = static_cast<Eigen::Index>(b.node_count());
    HeadCache c;
    c.Z = input * hd.W.transpose();
    const VectorXd sd = c.Z * hd.a.segment(0, d);
    const VectorXd ss = c.Z * hd.a.segment(d, d);
    const VectorXd ce = hd.W2.transpose() * hd.a.segment(2 * d, d);
    const VectorXd se = b.edge_features * ce;
    const auto m = static_cast<Eigen::Index>(ee.src.size());
    c.r.resize(m);
    VectorXd s(m);
    VectorXd mx = VectorXd::Constant(n, -INFINITY);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto i = ee.dst[static_cast<std::size_t>(k)], j = ee.src[static_cast<std::size_t>(k)];
        c.r[k] = sd[i] + ss[j] + (k < ee.flights ? se[k] : 0.0);
        s[k] = c.r[k] > 0 ? c.r[k] : cfg.leaky_slope * c.r[k];
        mx[i] = std::max(mx[i], s[k]);
    }
    VectorXd denom = VectorXd::Zero(n);
    c.alpha.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto i = ee.dst[static_cast<std::size_t>(k)];
        c.alpha[k] = std::exp(s[k] - mx[i]);
        denom[i] += c.alpha[k];
    }
    c.pre = MatrixXd::Zero(n, d);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto i = ee.dst[static_cast<std::size_t>(k)], j = ee.src[static_cast<std::size_t>(k)];
        c.alpha[k] /= denom[i];
        c.pre.row(i) += c.alpha[k] * c.Z.row(j);
    }
    return c;
}

MatrixXd combine(const GatConfig& cfg, int layer, const std::vector<HeadCache>& heads) {
    const int d = cfg.hidden_dim;
    const bool last = layer == cfg.layers - 1;
    const auto n = heads.front().pre.rows();
    MatrixXd out = MatrixXd::Zero(n, last ? d : d * cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
        const MatrixXd act = heads[static_cast<std::size_t>(h)].pre.unaryExpr(&elu);
        if (last)
            out += act / cfg.heads;
        else
            out.middleCols(h * d, d) = act;
    }
    return out;
}

void check_shapes(const GatConfig& cfg, const GatParameters& p, const GraphBatch& b) {
    cfg.validate();
    b.validate();
    if (b.node_features.cols() != cfg.node_dim) throw Error("dimension", "node features do not match node_dim");
    if (b.edge_features.cols() != cfg.edge_dim) throw Error("dimension", "edge features do not match edge_dim");
    if (static_cast<int>(p.layers.size()) != cfg.layers) throw Error("dimension", "parameter layer count mismatch");
    for (int l = 0; l < cfg.layers; ++l) {
        if (static_cast<int>(p.layers[static_cast<std::size_t>(l)].size()) != cfg.heads)
            throw Error("dimension", "parameter head count mismatch");
        for (const auto& hd : p.layers[static_cast<std::size_t>(l)])
            if (hd.W.rows() != cfg.hidden_dim || hd.W.cols() != cfg.input_width(l) || hd.W2.rows() != cfg.hidden_dim ||
                hd.W2.cols() != cfg.edge_dim || hd.a.size() != 3 * cfg.hidden_dim)
                throw Error("dimension", "layer " + std::to_string(l) + " tensor shape mismatch");
    }
    const int f = cfg.input_width(cfg.layers);
    if (p.M1.rows() != cfg.mlp_hidden || p.M1.cols() != 2 * f + cfg.edge_dim || p.b1.size() != cfg.mlp_hidden ||
        p.m2.size() != cfg.mlp_hidden)
        throw Error("dimension", "MLP tensor shape mismatch");
}

Forward forward(const GatConfig& cfg, const GatParameters& p, const GraphBatch& b, int stop_after = -1) {
    check_shapes(cfg, p, b);
    const auto ee = extend(b);
    Forward fw;
    MatrixXd h = b.node_features;
    const int last = stop_after < 0 ? cfg.layers - 1 : stop_after;
    for (int l = 0; l <= last; ++l) {
        LayerCache lc;
        lc.input = h;
        for (const auto& hd : p.layers[static_cast<std::size_t>(l)]) lc.heads.push_back(head_forward(cfg, hd, b, ee, h));
        h = combine(cfg, l, lc.heads);
        fw.layers.push_back(std::move(lc));
    }
    fw.H = h;
    if (stop_after >= 0) return fw;

    const auto m = static_cast<Eigen::Index>(b.edge_count());
    const auto f = fw.H.cols();
    fw.X.resize(m, 2 * f + cfg.edge_dim);
    for (Eigen::Index k = 0; k < m; ++k) {
        fw.X.row(k).segment(0, f) = fw.H.row(b.src[static_cast<std::size_t>(k)]);
        fw.X.row(k).segment(f, f) = fw.H.row(b.dst[static_cast<std::size_t>(k)]);
        fw.X.row(k).segment(2 * f, cfg.edge_dim) = b.edge_features.row(k);
    }
    fw.U = (fw.X * p.M1.transpose()).rowwise() + p.b1.transpose();
    fw.z = (fw.U.unaryExpr(&elu) * p.m2).array() + p.b2;
    fw.prob = fw.z.unaryExpr(&sigmoid);
    return fw;
}

double loss_of(const GraphBatch& b, const VectorXd& z, double pw) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < b.labels.size(); ++k) {
        const double w = b.labels[k] ? pw : 1.0;
        const double zk = z[static_cast<Eigen::Index>(k)];
        num += w * (b.labels[k] ? softplus(-zk) : softplus(zk));
        den += w;
    }
    return den > 0 ? num / den : 0.0;
}

GatParameters zeros_like(const GatParameters& p) {
    GatParameters g = p;
    g.for_each([](const std::string&, Eigen::Index r, Eigen::Index c, double* d) { std::fill(d, d + r * c, 0.0); });
    return g;
}

}  // namespace

Eigen::VectorXd attention_scores(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch, int layer,
                                 int head) {
    if (layer < 0 || layer >= cfg.layers || head < 0 || head >= cfg.heads)
        throw Error("dimension", "layer or head out of range");
    const auto fw = forward(cfg, params, batch, layer);
    return fw.layers[static_cast<std::size_t>(layer)].heads[static_cast<std::size_t>(head)].alpha;
}

Eigen::MatrixXd layer_forward(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch, int layer,
                              const Eigen::MatrixXd& input) {
    check_shapes(cfg, params, batch);
    if (layer < 0 || layer >= cfg.layers) throw Error("dimension", "layer out of range");
    if (input.rows() != static_cast<Eigen::Index>(batch.node_count()) || input.cols() != cfg.input_width(layer))
        throw Error("dimension", "layer input shape mismatch");
    const auto ee = extend(batch);
    std::vector<HeadCache> heads;
    for (const auto& hd : params.layers[static_cast<std::size_t>(layer)])
        heads.push_back(head_forward(cfg, hd, batch, ee, input));
    return combine(cfg, layer, heads);
}

Eigen::MatrixXd embed_nodes(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch) {
    return forward(cfg, params, batch, cfg.layers - 1).H;
}

std::vector<double> edge_predict(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch) {
    const auto fw = forward(cfg, params, batch);
    return {fw.prob.data(), fw.prob.data() + fw.prob.size()};
}

double gat_loss(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch, double positive_weight) {
    return loss_of(batch, forward(cfg, params, batch).z, positive_weight);
}

GatParameters gat_gradient(const GatConfig& cfg, const GatParameters& p, const GraphBatch& b, double pw,
                           double* loss) {
    const auto fw = forward(cfg, p, b);
    if (loss) *loss = loss_of(b, fw.z, pw);
    GatParameters g = zeros_like(p);
    const auto m = static_cast<Eigen::Index>(b.edge_count());
    double total = 0.0;
    for (int y : b.labels) total += y ? pw : 1.0;
    if (m == 0 || total <= 0) return g;

    VectorXd dz(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const int y = b.labels[static_cast<std::size_t>(k)];
        dz[k] = (y ? pw : 1.0) * (fw.prob[k] - y) / total;
    }
    const MatrixXd V = fw.U.unaryExpr(&elu);
    g.m2 = V.transpose() * dz;
    g.b2 = dz.sum();
    const MatrixXd dU = (dz * p.m2.transpose()).cwiseProduct(fw.U.unaryExpr(&elu_grad));
    g.M1 = dU.transpose() * fw.X;
    g.b1 = dU.colwise().sum().transpose();
    const MatrixXd dX = dU * p.M1;

    const auto f = fw.H.cols();
    MatrixXd dH = MatrixXd::Zero(fw.H.rows(), f);
    for (Eigen::Index k = 0; k < m; ++k) {
        dH.row(b.src[static_cast<std::size_t>(k)]) += dX.row(k).segment(0, f);
        dH.row(b.dst[static_cast<std::size_t>(k)]) += dX.row(k).segment(f, f);
    }

    const auto ee = extend(b);
    const auto me = static_cast<Eigen::Index>(ee.src.size());
    const auto n = static_cast<Eigen::Index>(b.node_count());
    const int d = cfg.hidden_dim;
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const auto& lc = fw.layers[static_cast<std::size_t>(l)];
        const bool last = l == cfg.layers - 1;
        MatrixXd dIn = MatrixXd::Zero(lc.input.rows(), lc.input.cols());
        for (int h = 0; h < cfg.heads; ++h) {
            const auto& c = lc.heads[static_cast<std::size_t>(h)];
            const auto& hd = p.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
            auto& gh = g.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
            const MatrixXd dO = last ? MatrixXd(dH / cfg.heads) : MatrixXd(dH.middleCols(h * d, d));
            const MatrixXd dpre = dO.cwiseProduct(c.pre.unaryExpr(&elu_grad));

            MatrixXd dZ = MatrixXd::Zero(n, d);
            VectorXd dalpha(me);
            VectorXd weighted = VectorXd::Zero(n);
            for (Eigen::Index k = 0; k < me; ++k) {
                const auto i = ee.dst[static_cast<std::size_t>(k)], j = ee.src[static_cast<std::size_t>(k)];
                dalpha[k] = dpre.row(i).dot(c.Z.row(j));
                dZ.row(j) += c.alpha[k] * dpre.row(i);
                weighted[i] += c.alpha[k] * dalpha[k];
            }
            VectorXd dsd = VectorXd::Zero(n), dss = VectorXd::Zero(n);
            VectorXd dre = VectorXd::Zero(b.edge_features.rows());
            for (Eigen::Index k = 0; k < me; ++k) {
                const auto i = ee.dst[static_cast<std::size_t>(k)], j = ee.src[static_cast<std::size_t>(k)];
                const double ds = c.alpha[k] * (dalpha[k] - weighted[i]);
                const double dr = ds * (c.r[k] > 0 ? 1.0 : cfg.leaky_slope);
                dsd[i] += dr;
                dss[j] += dr;
                if (k < ee.flights) dre[k] = dr;
            }
            const VectorXd gE = b.edge_features.transpose() * dre;
            gh.a.segment(0, d) = c.Z.transpose() * dsd;
            gh.a.segment(d, d) = c.Z.transpose() * dss;
            gh.a.segment(2 * d, d) = hd.W2 * gE;
            gh.W2 = hd.a.segment(2 * d, d) * gE.transpose();
            dZ += dsd * hd.a.segment(0, d).transpose() + dss * hd.a.segment(d, d).transpose();
            gh.W = dZ.transpose() * lc.input;
            dIn += dZ * hd.W;
        }
        dH = std::move(dIn);
    }
    return g;
}

GatTrainResult train_gat(const GraphBatch& batch, const GatConfig& cfg) {
    cfg.validate();
    std::size_t pos = 0;
    for (int y : batch.labels) pos += y == 1;
    const std::size_t neg = batch.labels.size() - pos;
    if (pos == 0 || neg == 0) throw Error("train", "training batch must contain both classes");
    GatTrainResult res;
    res.positive_weight = cfg.positive_class_weight.value_or(static_cast<double>(neg) / static_cast<double>(pos));
    res.params = init_parameters(cfg);
    for (int e = 0; e <= cfg.epochs; ++e) {
        double loss = 0.0;
        const auto grad = gat_gradient(cfg, res.params, batch, res.positive_weight, &loss);
        if (!std::isfinite(loss)) throw Error("divergence", "non-finite loss at epoch " + std::to_string(e));
        res.loss.push_back(loss);
        if (e == cfg.epochs) break;
        std::vector<const double*> gd;
        grad.for_each([&](const std::string&, Eigen::Index, Eigen::Index, const double* d) { gd.push_back(d); });
        std::size_t t = 0;
        res.params.for_each([&](const std::string&, Eigen::Index r, Eigen::Index c, double* d) {
            const double* gp = gd[t++];
            for (Eigen::Index q = 0; q < r * c; ++q) d[q] -= cfg.learning_rate * gp[q];
        });
    }
    return res;
}

double gradient_check(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch,
                      double positive_weight, double epsilon) {
    const auto ga = gat_gradient(cfg, params, batch, positive_weight);
    std::vector<std::vector<double>> analytic;
    ga.for_each([&](const std::string&, Eigen::Index r, Eigen::Index c, const double* d) {
        analytic.emplace_back(d, d + r * c);
    });
    GatParameters probe = params;
    double worst = 0.0;
    std::size_t t = 0;
    probe.for_each([&](const std::string&, Eigen::Index r, Eigen::Index c, double* d) {
        const auto& a = analytic[t++];
        double diff2 = 0.0, na2 = 0.0, nn2 = 0.0;
        for (Eigen::Index q = 0; q < r * c; ++q) {
            const double saved = d[q];
            d[q] = saved + epsilon;
            const double lp = gat_loss(cfg, probe, batch, positive_weight);
            d[q] = saved - epsilon;
            const double lm = gat_loss(cfg, probe, batch, positive_weight);
            d[q] = saved;
            const double gn = (lp - lm) / (2 * epsilon);
            const double gq = a[static_cast<std::size_t>(q)];
            diff2 += (gq - gn) * (gq - gn);
            na2 += gq * gq;
            nn2 += gn * gn;
        }
        worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(na2) + std::sqrt(nn2), 1e-8));
    });
    return worst;
}

namespace {

using nlohmann::json;

json config_json(const GatConfig& c) {
    json j = {{"layers", c.layers},         {"heads", c.heads},
              {"node_dim", c.node_dim},     {"edge_dim", c.edge_dim},
              {"hidden_dim", c.hidden_dim}, {"mlp_hidden", c.mlp_hidden},
              {"leaky_slope", c.leaky_slope}, {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},         {"seed", c.seed},
              {"init", c.init == GatInit::zero ? "zero" : "glorot"}};
    j["positive_class_weight"] = c.positive_class_weight ? json(*c.positive_class_weight) : json(nullptr);
    return j;
}

GatConfig config_from(const json& j) {
    GatConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.node_dim = j.at("node_dim").get<int>();
    c.edge_dim = j.at("edge_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto init = j.at("init").get<std::string>();
    if (init != "zero" && init != "glorot") throw Error("model_corrupt", "unknown init '" + init + "'");
    c.init = init == "zero" ? GatInit::zero : GatInit::glorot;
    if (!j.at("positive_class_weight").is_null()) c.positive_class_weight = j.at("positive_class_weight").get<double>();
    c.validate();
    return c;
}

}  // namespace

std::string save_gat(const GatModel& model) {
    json tensors = json::object();
    model.params.for_each([&](const std::string& name, Eigen::Index r, Eigen::Index c, const double* d) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < r; ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < c; ++j) row.push_back(d[j * r + i]);
            rows.push_back(std::move(row));
        }
        tensors[name] = std::move(rows);
    });
    const auto& s = model.standardizer;
    json doc = {{"version", kGatModelVersion},
                {"config", config_json(model.config)},
                {"tensors", std::move(tensors)},
                {"standardizer",
                 {{"node_mean", s.node_mean}, {"node_std", s.node_std}, {"edge_mean", s.edge_mean}, {"edge_std", s.edge_std}}}};
    return doc.dump(1) + "\n";
}

GatModel load_gat(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error("model_corrupt", std::string("invalid json: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("version") || doc["version"] != kGatModelVersion)
        throw Error("model_version", "unsupported GAT model version");
    try {
        GatModel m;
        m.config = config_from(doc.at("config"));
        m.params = init_parameters([&] {
            auto c = m.config;
            c.init = GatInit::zero;
            return c;
        }());
        const auto& tensors = doc.at("tensors");
        m.params.for_each([&](const std::string& name, Eigen::Index r, Eigen::Index c, double* d) {
            const auto& rows = tensors.at(name);
            if (rows.size() != static_cast<std::size_t>(r)) throw Error("model_corrupt", "tensor " + name + " has wrong shape");
            for (Eigen::Index i = 0; i < r; ++i) {
                const auto& row = rows.at(static_cast<std::size_t>(i));
                if (row.size() != static_cast<std::size_t>(c))
                    throw Error("model_corrupt", "tensor " + name + " has wrong shape");
                for (Eigen::Index j = 0; j < c; ++j) d[j * r + i] = row.at(static_cast<std::size_t>(j)).get<double>();
            }
        });
        const auto& s = doc.at("standardizer");
        m.standardizer = {s.at("node_mean").get<std::vector<double>>(), s.at("node_std").get<std::vector<double>>(),
                          s.at("edge_mean").get<std::vector<double>>(), s.at("edge_std").get<std::vector<double>>()};
        return m;
    } catch (const json::exception& e) {
        throw Error("model_corrupt", std::string("malformed GAT model: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == "model_corrupt") throw;
        throw Error("model_corrupt", e.what());
    }
}

}  // namespace airhold
