#pragma once

#include "airhold/graph.hpp"
#include "airhold/records.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace airhold {

enum class GatInit { glorot, zero };

struct GatConfig {
    int layers = 1;
    int heads = 4;
    int node_dim = 5;
    int edge_dim = 21;
    int hidden_dim = 8;  // per head
    int mlp_hidden = 16;
    double leaky_slope = 0.2;
    // Weight of each positive flight in the loss; unset means N_neg / N_pos.
    std::optional<double> positive_class_weight;
    double learning_rate = 0.05;
    int epochs = 100;
    std::uint64_t seed = 1;
    GatInit init = GatInit::glorot;

    // Throws Error("config").
    void validate() const;
    // Width of the node embeddings entering layer l (l == layers gives the
    // final embedding width).
    int input_width(int l) const;
};

// One attention head. a = [a_dst ; a_src ; a_edge], each hidden_dim long.
struct GatHead {
    Eigen::MatrixXd W;   // hidden_dim x input width
    Eigen::MatrixXd W2;  // hidden_dim x edge_dim
    Eigen::VectorXd a;   // 3 * hidden_dim
};

struct GatParameters {
    std::vector<std::vector<GatHead>> layers;  // [layer][head]
    Eigen::MatrixXd M1;                        // mlp_hidden x (2 * final width + edge_dim)
    Eigen::VectorXd b1;
    Eigen::VectorXd m2;
    double b2 = 0.0;

    // Visits every tensor as (name, rows, cols, column-major data).
    void for_each(const std::function<void(const std::string&, Eigen::Index, Eigen::Index, double*)>& f);
    void for_each(const std::function<void(const std::string&, Eigen::Index, Eigen::Index, const double*)>& f) const;
};

GatParameters init_parameters(const GatConfig& cfg);

// Directed multigraph of flights. Parallel edges are kept.
struct GraphBatch {
    std::vector<std::string> codes;  // node i is codes[i]
    Eigen::MatrixXd node_features;   // nodes x node_dim
    std::vector<int> src;
    std::vector<int> dst;
    Eigen::MatrixXd edge_features;   // flights x edge_dim
    std::vector<int> labels;

    std::size_t node_count() const { return codes.size(); }
    std::size_t edge_count() const { return src.size(); }
    // Throws Error("batch") on inconsistent sizes or out-of-range endpoints.
    void validate() const;
};

// Column means and deviations from the training side, reused on test data.
struct GatStandardizer {
    std::vector<double> node_mean, node_std;
    std::vector<double> edge_mean, edge_std;
};

// Node features: lat, lon, altitude, in-strength, out-strength. Edge
// features: the tabular registry columns.
std::vector<std::string> gat_edge_feature_names();
GatStandardizer fit_standardizer(const WeightedDigraph& network, std::span<const FlightRecord> flights);
// Nodes are the network's airports plus any airport only seen in flights
// (zero strength); strengths always come from network.
GraphBatch make_batch(const WeightedDigraph& network, std::span<const FlightRecord> flights,
                      const GatStandardizer& standardizer);

// Attention weights of one layer and head over the batch flights followed by
// one self-loop per node (edge_count() + node_count() entries).
Eigen::VectorXd attention_scores(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch,
                                 int layer, int head);
// Node embeddings after the given layer, from that layer's input embeddings.
Eigen::MatrixXd layer_forward(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch, int layer,
                              const Eigen::MatrixXd& input);
// Final node embeddings.
Eigen::MatrixXd embed_nodes(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch);
// Holding probability per flight.
std::vector<double> edge_predict(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch);

// Class-weighted binary cross-entropy divided by the total weight.
double gat_loss(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch, double positive_weight);
// Analytic gradient of gat_loss, same shapes as params.
GatParameters gat_gradient(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch,
                           double positive_weight, double* loss = nullptr);

struct GatTrainResult {
    GatParameters params;
    std::vector<double> loss;  // epochs + 1 entries, loss[e] after e updates
    double positive_weight = 1.0;
};

// Full-batch gradient descent. Throws Error("train") on a single-class batch
// and Error("divergence") naming the epoch on a non-finite loss.
GatTrainResult train_gat(const GraphBatch& batch, const GatConfig& cfg);

// Largest per-tensor ||g_a - g_n|| / max(||g_a|| + ||g_n||, 1e-8) against
// central differences.
double gradient_check(const GatConfig& cfg, const GatParameters& params, const GraphBatch& batch,
                      double positive_weight = 1.0, double epsilon = 1e-5);

inline constexpr const char* kGatModelVersion = "airhold-gat/1";

struct GatModel {
    GatConfig config;
    GatParameters params;
    GatStandardizer standardizer;
};

std::string save_gat(const GatModel& model);
// Throws Error("model_version") or Error("model_corrupt").
GatModel load_gat(const std::string& text);

}  // namespace airhold
