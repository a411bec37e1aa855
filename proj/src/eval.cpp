#include "airhold/eval.hpp"

#include "airhold/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace airhold {

MetricsReport classification_metrics(std::span<const int> y_true, std::span<const double> y_prob, double threshold) {
    if (y_true.size() != y_prob.size())
        throw Error("length", "y_true has " + std::to_string(y_true.size()) + " entries, y_prob " +
                                  std::to_string(y_prob.size()));
    MetricsReport m;
    m.threshold = threshold;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (!(y_prob[i] >= 0.0 && y_prob[i] <= 1.0))
            throw Error("range", "probability at index " + std::to_string(i) + " is outside [0, 1]");
        const bool pred = y_prob[i] >= threshold;
        if (y_true[i])
            ++(pred ? m.tp : m.fn);
        else
            ++(pred ? m.fp : m.tn);
    }
    const auto d = [](std::size_t v) { return static_cast<double>(v); };
    if (m.n() > 0) m.accuracy = d(m.tp + m.tn) / d(m.n());
    if (m.tp + m.fp > 0)
        m.precision = d(m.tp) / d(m.tp + m.fp);
    else
        m.precision_undefined = true;
    if (m.tp + m.fn > 0)
        m.recall = d(m.tp) / d(m.tp + m.fn);
    else
        m.recall_undefined = true;
    if (m.precision + m.recall > 0)
        m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
    else
        m.f1_undefined = true;
    return m;
}

RegressionReport regression_metrics(std::span<const double> y_true, std::span<const double> y_pred, std::size_t bins) {
    if (y_true.size() != y_pred.size())
        throw Error("length", "y_true has " + std::to_string(y_true.size()) + " entries, y_pred " +
                                  std::to_string(y_pred.size()));
    if (y_true.empty()) throw Error("length", "no samples");
    if (bins == 0) throw Error("range", "bins must be positive");
    RegressionReport r;
    r.n = y_true.size();
    double hi = 0.0;
    for (std::size_t i = 0; i < r.n; ++i) {
        if (!(y_true[i] >= 0.0) || !std::isfinite(y_true[i]))
            throw Error("range", "target at index " + std::to_string(i) + " must be finite and >= 0");
        if (!std::isfinite(y_pred[i])) throw Error("range", "prediction at index " + std::to_string(i) + " is not finite");
        const double e = y_pred[i] - y_true[i];
        r.mse += e * e;
        r.mae += std::abs(e);
        hi = std::max({hi, y_true[i], y_pred[i]});
    }
    r.mse /= static_cast<double>(r.n);
    r.mae /= static_cast<double>(r.n);
    r.lo = std::min(0.0, *std::min_element(y_pred.begin(), y_pred.end()));
    r.hi = hi > r.lo ? hi : r.lo + 1.0;
    r.predicted.assign(bins, 0);
    r.actual.assign(bins, 0);
    const double width = (r.hi - r.lo) / static_cast<double>(bins);
    auto bin = [&](double v) {
        const auto b = static_cast<std::size_t>((v - r.lo) / width);
        return std::min(b, bins - 1);
    };
    for (std::size_t i = 0; i < r.n; ++i) {
        ++r.actual[bin(y_true[i])];
        ++r.predicted[bin(y_pred[i])];
    }
    return r;
}

std::vector<ConsistencyResult> table_consistency(std::span<const TableRow> rows, double tolerance) {
    std::vector<ConsistencyResult> out;
    for (const auto& row : rows) {
        ConsistencyResult c{row.model, row.f1, 0.0, false};
        if (row.precision + row.recall > 0)
            c.f1_recomputed = 2 * row.precision * row.recall / (row.precision + row.recall);
        c.pass = std::abs(c.f1_recomputed - c.f1_reported) <= tolerance;
        out.push_back(c);
    }
    return out;
}

const std::vector<TableRow>& reference_table() {
    static const std::vector<TableRow> rows{
        {"gbdt_graph_features", 0.90, 0.09, 0.58, 0.16},
        {"gat_1_layer", 0.95, 0.03, 0.06, 0.04},
        {"gat_3_layers", 0.52, 0.01, 0.40, 0.03},
        {"gat_5_layers", 0.57, 0.01, 0.30, 0.02},
        {"gat_10_layers", 0.91, 0.02, 0.08, 0.03},
        {"gat_30_layers", 0.02, 0.02, 0.99, 0.03},
    };
    return rows;
}

std::string metrics_to_json(const MetricsReport& m) {
    nlohmann::json j = {{"tp", m.tp},
                        {"fp", m.fp},
                        {"tn", m.tn},
                        {"fn", m.fn},
                        {"n", m.n()},
                        {"threshold", m.threshold},
                        {"accuracy", m.accuracy},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"undefined", {{"precision", m.precision_undefined}, {"recall", m.recall_undefined}, {"f1", m.f1_undefined}}}};
    return j.dump(2);
}

std::string regression_to_json(const RegressionReport& r) {
    nlohmann::json j = {{"n", r.n},   {"mse", r.mse},   {"mae", r.mae},
                        {"lo", r.lo}, {"hi", r.hi},     {"bins", r.actual.size()},
                        {"histogram", {{"predicted", r.predicted}, {"actual", r.actual}}}};
    return j.dump(2);
}

std::string table_csv_row(const std::string& model, const MetricsReport& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f,%.4f", m.accuracy, m.precision, m.recall, m.f1);
    return model + buf;
}

}  // namespace airhold
