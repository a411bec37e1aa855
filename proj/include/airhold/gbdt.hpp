#pragma once

#include "airhold/features.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace airhold {

enum class Task { classification, regression };

struct TrainConfig {
    int rounds = 200;
    int max_depth = 6;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 20;
    // Weight of each positive sample; unset means N_neg / N_pos.
    std::optional<double> class_weight_positive;
    double lambda_l2 = 1.0;
    std::uint64_t seed = 0;

    // Throws Error("config").
    void validate() const;
};

// Internal nodes send x[feature] < threshold to the left child.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output before shrinkage
    double gain = 0.0;   // split gain, 0 on leaves

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double eval(std::span<const double> x) const;
    // Index of the leaf reached by x.
    std::size_t leaf_index(std::span<const double> x) const;
};

struct GbdtModel {
    Task task = Task::classification;
    double base_score = 0.0;  // log-odds of the weighted positive rate, or the label mean
    double learning_rate = 0.1;
    double class_weight_positive = 1.0;
    std::vector<Tree> trees;
    std::vector<std::string> feature_names;
};

// Loss after 0, 1, ..., rounds trees (weighted log loss or MSE).
struct TrainLog {
    std::vector<double> loss;
};

// Second-order boosting on class-weighted logistic loss with exact greedy
// splits. Throws Error("train") when only one class is present.
GbdtModel train_classifier(const FeatureMatrix& X, const TrainConfig& cfg, TrainLog* log = nullptr);
// Squared-error boosting on labels_reg.
GbdtModel train_regressor(const FeatureMatrix& X, const TrainConfig& cfg, TrainLog* log = nullptr);

// Base score plus shrunk tree outputs, before the link function.
double predict_margin(const GbdtModel& model, std::span<const double> x);
// Probability for classification, non-negative delay for regression.
// Throws Error("dimension") if x does not match the model's features.
double predict(const GbdtModel& model, std::span<const double> x);
std::vector<double> predict_all(const GbdtModel& model, const FeatureMatrix& X);

// Total split gain per feature normalized to sum 1; throws Error("model")
// when the model has no splits.
std::map<std::string, double> feature_importance(const GbdtModel& model);

inline constexpr const char* kGbdtModelVersion = "airhold-gbdt/1";

std::string save_model(const GbdtModel& model);
// Throws Error("model_version") or Error("model_corrupt").
GbdtModel load_model(const std::string& text);

}  // namespace airhold
