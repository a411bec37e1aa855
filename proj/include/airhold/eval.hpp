#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace airhold {

// Confusion counts and the derived rates. A rate whose denominator is zero is
// reported as 0 and flagged.
struct MetricsReport {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double threshold = 0.5;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;

    std::size_t n() const { return tp + fp + tn + fn; }
};

// Predicted positive iff prob >= threshold. Throws Error("length") on a size
// mismatch and Error("range") on a probability outside [0, 1].
MetricsReport classification_metrics(std::span<const int> y_true, std::span<const double> y_prob, double threshold = 0.5);

// Histograms of predicted and actual values over one shared range [lo, hi]
// split into equal bins; the last bin is closed.
struct RegressionReport {
    std::size_t n = 0;
    double mse = 0.0;
    double mae = 0.0;
    double lo = 0.0, hi = 0.0;
    std::vector<std::size_t> predicted;
    std::vector<std::size_t> actual;
};

// Throws Error("length") on a size mismatch or no samples, Error("range") on
// negative or non-finite targets.
RegressionReport regression_metrics(std::span<const double> y_true, std::span<const double> y_pred, std::size_t bins = 50);

struct TableRow {
    std::string model;
    double accuracy, precision, recall, f1;
};

struct ConsistencyResult {
    std::string model;
    double f1_reported = 0.0;
    double f1_recomputed = 0.0;
    bool pass = false;
};

// Recomputes F1 from the reported precision and recall and passes iff it is
// within tolerance of the reported F1. The default tolerance absorbs the
// two-decimal rounding of P and R.
std::vector<ConsistencyResult> table_consistency(std::span<const TableRow> rows, double tolerance = 0.015);

// Published holding-prediction results: a boosted-tree model with graph
// features and graph attention networks of 1, 3, 5, 10 and 30 layers.
const std::vector<TableRow>& reference_table();

std::string metrics_to_json(const MetricsReport& m);
std::string regression_to_json(const RegressionReport& r);
inline constexpr const char* kTableCsvHeader = "model,accuracy,precision,recall,f1";
// One data row in kTableCsvHeader order, four decimals.
std::string table_csv_row(const std::string& model, const MetricsReport& m);

}  // namespace airhold
