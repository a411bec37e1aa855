#include "airhold/gbdt.hpp"

#include "airhold/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace airhold {

void TrainConfig::validate() const {
    if (rounds < 0) throw Error("config", "rounds must be >= 0");
    if (max_depth < 1) throw Error("config", "max_depth must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("config", "learning_rate must be positive");
    if (min_samples_leaf < 1) throw Error("config", "min_samples_leaf must be >= 1");
    if (class_weight_positive && !(*class_weight_positive > 0.0))
        throw Error("config", "class_weight_positive must be positive");
    if (!(lambda_l2 > 0.0)) throw Error("config", "lambda_l2 must be positive");
}

std::size_t Tree::leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] < nodes[i].threshold ? nodes[i].left
                                                                                                          : nodes[i].right);
    return i;
}

double Tree::eval(std::span<const double> x) const { return nodes[leaf_index(x)].value; }

namespace {

double sigmoid(double m) { return 1.0 / (1.0 + std::exp(-m)); }

// log(1 + e^m) without overflow.
double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

struct NodeStats {
    double G = 0.0, H = 0.0;
    std::size_t n = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& X, const std::vector<std::vector<std::uint32_t>>& order, const TrainConfig& cfg)
        : X_(X), order_(order), cfg_(cfg), node_of_(X.rows) {}

    // Grows one tree on (g, h); leaves node_of_ pointing at each sample's leaf.
    Tree build(const std::vector<double>& g, const std::vector<double>& h) {
        Tree tree;
        const std::size_t n = X_.rows;
        const std::size_t p = X_.cols();
        std::fill(node_of_.begin(), node_of_.end(), 0);
        NodeStats root;
        for (std::size_t i = 0; i < n; ++i) {
            root.G += g[i];
            root.H += h[i];
        }
        root.n = n;
        tree.nodes.push_back({});
        std::vector<NodeStats> stats{root};
        std::vector<int> frontier{0};

        for (int depth = 0; depth < cfg_.max_depth && !frontier.empty(); ++depth) {
            // slot_of maps tree node -> position in frontier, -1 if closed.
            std::vector<int> slot_of(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < frontier.size(); ++s)
                if (stats[static_cast<std::size_t>(frontier[s])].n >= 2 * cfg_.min_samples_leaf)
                    slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

            std::vector<SplitCandidate> best(frontier.size());
            std::vector<NodeStats> left(frontier.size());
            std::vector<double> last(frontier.size());
            for (std::size_t j = 0; j < p; ++j) {
                std::fill(left.begin(), left.end(), NodeStats{});
                for (std::uint32_t i : order_[j]) {
                    const int slot = slot_of[static_cast<std::size_t>(node_of_[i])];
                    if (slot < 0) continue;
                    const auto s = static_cast<std::size_t>(slot);
                    const double v = X_.at(i, j);
                    NodeStats& L = left[s];
                    const NodeStats& T = stats[static_cast<std::size_t>(frontier[s])];
                    if (L.n >= cfg_.min_samples_leaf && T.n - L.n >= cfg_.min_samples_leaf && v != last[s]) {
                        const double GR = T.G - L.G, HR = T.H - L.H;
                        const double gain = 0.5 * (L.G * L.G / (L.H + cfg_.lambda_l2) + GR * GR / (HR + cfg_.lambda_l2) -
                                                   T.G * T.G / (T.H + cfg_.lambda_l2));
                        if (gain > best[s].gain) {
                            double thr = 0.5 * (last[s] + v);
                            if (!(thr > last[s] && thr <= v)) thr = v;
                            best[s] = {gain, static_cast<int>(j), thr};
                        }
                    }
                    L.G += g[i];
                    L.H += h[i];
                    ++L.n;
                    last[s] = v;
                }
            }

            std::vector<int> next;
            std::vector<int> remap(tree.nodes.size(), -1);  // split node -> left child id
            for (std::size_t s = 0; s < frontier.size(); ++s) {
                if (best[s].feature < 0) continue;
                const int id = frontier[s];
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                auto& node = tree.nodes[static_cast<std::size_t>(id)];
                node.feature = best[s].feature;
                node.threshold = best[s].threshold;
                node.gain = best[s].gain;
                node.left = l;
                node.right = l + 1;
                remap[static_cast<std::size_t>(id)] = l;
                next.push_back(l);
                next.push_back(l + 1);
            }
            if (next.empty()) break;
            stats.resize(tree.nodes.size());
            for (int id : next) stats[static_cast<std::size_t>(id)] = {};
            for (std::size_t i = 0; i < n; ++i) {
                const int cur = node_of_[i];
                const int l = remap[static_cast<std::size_t>(cur)];
                if (l < 0) continue;
                const auto& node = tree.nodes[static_cast<std::size_t>(cur)];
                const int child = X_.at(i, static_cast<std::size_t>(node.feature)) < node.threshold ? l : l + 1;
                node_of_[i] = child;
                auto& st = stats[static_cast<std::size_t>(child)];
                st.G += g[i];
                st.H += h[i];
                ++st.n;
            }
            frontier = std::move(next);
        }

        for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
            auto& node = tree.nodes[id];
            if (node.is_leaf()) node.value = -stats[id].G / (stats[id].H + cfg_.lambda_l2);
        }
        return tree;
    }

    int leaf_of(std::size_t i) const { return node_of_[i]; }

private:
    const FeatureMatrix& X_;
    const std::vector<std::vector<std::uint32_t>>& order_;
    const TrainConfig& cfg_;
    std::vector<int> node_of_;
};

std::vector<std::vector<std::uint32_t>> presort(const FeatureMatrix& X) {
    std::vector<std::vector<std::uint32_t>> order(X.cols());
    for (std::size_t j = 0; j < X.cols(); ++j) {
        auto& o = order[j];
        o.resize(X.rows);
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X.at(a, j) < X.at(b, j); });
    }
    return order;
}

void check_shape(const FeatureMatrix& X, bool need_cls) {
    if (X.rows < 2) throw Error("train", "need at least 2 samples");
    if (X.values.size() != X.rows * X.cols()) throw Error("train", "feature matrix shape mismatch");
    if (X.labels_reg.size() != X.rows || (need_cls && X.labels_cls.size() != X.rows))
        throw Error("train", "label count does not match rows");
    if (X.rows > std::numeric_limits<std::uint32_t>::max()) throw Error("train", "too many rows");
}

}  // namespace

GbdtModel train_classifier(const FeatureMatrix& X, const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    check_shape(X, true);
    const std::size_t n = X.rows;
    const auto n_pos = static_cast<std::size_t>(std::count(X.labels_cls.begin(), X.labels_cls.end(), 1));
    if (n_pos == 0 || n_pos == n) throw Error("train", "classification needs both classes in the labels");

    GbdtModel model;
    model.task = Task::classification;
    model.learning_rate = cfg.learning_rate;
    model.feature_names = X.names;
    model.class_weight_positive =
        cfg.class_weight_positive.value_or(static_cast<double>(n - n_pos) / static_cast<double>(n_pos));

    std::vector<double> w(n);
    double w_pos = 0, w_neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = X.labels_cls[i] ? model.class_weight_positive : 1.0;
        (X.labels_cls[i] ? w_pos : w_neg) += w[i];
    }
    const double w_total = w_pos + w_neg;
    model.base_score = std::log(w_pos / w_neg);

    std::vector<double> margin(n, model.base_score), g(n), h(n);
    auto loss = [&] {
        double l = 0;
        for (std::size_t i = 0; i < n; ++i) l += w[i] * (softplus(margin[i]) - X.labels_cls[i] * margin[i]);
        return l / w_total;
    };
    if (log) log->loss = {loss()};

    const auto order = presort(X);
    TreeBuilder builder(X, order, cfg);
    for (int round = 0; round < cfg.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = w[i] * (p - X.labels_cls[i]);
            h[i] = w[i] * p * (1.0 - p);
        }
        model.trees.push_back(builder.build(g, h));
        const auto& tree = model.trees.back();
        for (std::size_t i = 0; i < n; ++i)
            margin[i] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(builder.leaf_of(i))].value;
        if (log) log->loss.push_back(loss());
    }
    return model;
}

GbdtModel train_regressor(const FeatureMatrix& X, const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    check_shape(X, false);
    const std::size_t n = X.rows;

    GbdtModel model;
    model.task = Task::regression;
    model.learning_rate = cfg.learning_rate;
    model.feature_names = X.names;
    model.base_score = std::accumulate(X.labels_reg.begin(), X.labels_reg.end(), 0.0) / static_cast<double>(n);

    std::vector<double> pred(n, model.base_score), g(n), h(n, 1.0);
    auto loss = [&] {
        double l = 0;
        for (std::size_t i = 0; i < n; ++i) l += (pred[i] - X.labels_reg[i]) * (pred[i] - X.labels_reg[i]);
        return l / static_cast<double>(n);
    };
    if (log) log->loss = {loss()};

    const auto order = presort(X);
    TreeBuilder builder(X, order, cfg);
    for (int round = 0; round < cfg.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) g[i] = pred[i] - X.labels_reg[i];
        model.trees.push_back(builder.build(g, h));
        const auto& tree = model.trees.back();
        for (std::size_t i = 0; i < n; ++i)
            pred[i] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(builder.leaf_of(i))].value;
        if (log) log->loss.push_back(loss());
    }
    return model;
}

double predict_margin(const GbdtModel& model, std::span<const double> x) {
    if (x.size() != model.feature_names.size())
        throw Error("dimension", "expected " + std::to_string(model.feature_names.size()) + " features, got " +
                                     std::to_string(x.size()));
    double m = model.base_score;
    for (const auto& t : model.trees) m += model.learning_rate * t.eval(x);
    return m;
}

double predict(const GbdtModel& model, std::span<const double> x) {
    const double m = predict_margin(model, x);
    return model.task == Task::classification ? sigmoid(m) : std::max(0.0, m);
}

std::vector<double> predict_all(const GbdtModel& model, const FeatureMatrix& X) {
    std::vector<double> out(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) out[i] = predict(model, X.row(i));
    return out;
}

std::map<std::string, double> feature_importance(const GbdtModel& model) {
    std::vector<double> gain(model.feature_names.size(), 0.0);
    for (const auto& t : model.trees)
        for (const auto& node : t.nodes)
            if (!node.is_leaf()) gain[static_cast<std::size_t>(node.feature)] += node.gain;
    const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
    if (!(total > 0.0)) throw Error("model", "model has no splits; train it before asking for importances");
    std::map<std::string, double> out;
    for (std::size_t j = 0; j < gain.size(); ++j) out[model.feature_names[j]] = gain[j] / total;
    return out;
}

std::string save_model(const GbdtModel& model) {
    nlohmann::json j;
    j["version"] = kGbdtModelVersion;
    j["task"] = model.task == Task::classification ? "classification" : "regression";
    j["base_score"] = model.base_score;
    j["learning_rate"] = model.learning_rate;
    j["class_weight_positive"] = model.class_weight_positive;
    j["feature_names"] = model.feature_names;
    auto trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        auto nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"leaf", n.value}});
            else
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"gain", n.gain}});
        }
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j.dump();
}

GbdtModel load_model(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("model_corrupt", std::string("model payload is not valid json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("version") || !j["version"].is_string())
        throw Error("model_corrupt", "model payload has no version tag");
    if (j["version"].get<std::string>() != kGbdtModelVersion)
        throw Error("model_version", "unsupported model version '" + j["version"].get<std::string>() + "'");
    try {
        GbdtModel m;
        const auto task = j.at("task").get<std::string>();
        if (task == "classification") m.task = Task::classification;
        else if (task == "regression") m.task = Task::regression;
        else throw Error("model_corrupt", "unknown task '" + task + "'");
        m.base_score = j.at("base_score").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        m.class_weight_positive = j.at("class_weight_positive").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const int p = static_cast<int>(m.feature_names.size());
        for (const auto& jt : j.at("trees")) {
            Tree t;
            for (const auto& jn : jt) {
                TreeNode n;
                if (jn.contains("leaf")) {
                    n.value = jn.at("leaf").get<double>();
                } else {
                    n.feature = jn.at("feature").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.left = jn.at("left").get<int>();
                    n.right = jn.at("right").get<int>();
                    n.gain = jn.at("gain").get<double>();
                }
                t.nodes.push_back(n);
            }
            const int size = static_cast<int>(t.nodes.size());
            if (size == 0) throw Error("model_corrupt", "empty tree");
            for (int id = 0; id < size; ++id) {
                const auto& n = t.nodes[static_cast<std::size_t>(id)];
                if (n.is_leaf()) continue;
                if (n.feature >= p || n.left <= id || n.right <= id || n.left >= size || n.right >= size)
                    throw Error("model_corrupt", "tree node references out of range");
            }
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error("model_corrupt", std::string("malformed model payload: ") + e.what());
    }
}

}  // namespace airhold
