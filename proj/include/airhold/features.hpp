#pragma once

#include "airhold/centrality.hpp"
#include "airhold/graph.hpp"
#include "airhold/records.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace airhold {

struct AugmentedRecord {
    FlightRecord record;
    EdgeGraphFeatures graph;
    bool unseen_route = false;
};

enum class FeatureKind { tabular, graph, indicator };

struct FeatureSpec {
    std::string name;
    FeatureKind kind;
    bool operator==(const FeatureSpec&) const = default;
};

// Ordered list of model inputs. Column order of every matrix, model file and
// service request is defined here.
class FeatureRegistry {
public:
    FeatureRegistry() = default;
    // Throws Error("registry") on duplicate or unknown names.
    explicit FeatureRegistry(std::vector<FeatureSpec> specs);

    // All known features: tabular encodings, the six graph metrics, and the
    // unseen-route indicator.
    static FeatureRegistry standard();

    std::size_t size() const { return specs_.size(); }
    const std::vector<FeatureSpec>& specs() const { return specs_; }
    std::vector<std::string> names() const;
    // Subset of one kind, in registry order.
    FeatureRegistry only(FeatureKind kind) const;

    std::string to_json() const;
    static FeatureRegistry from_json(const std::string& text);

    bool operator==(const FeatureRegistry&) const = default;

private:
    std::vector<FeatureSpec> specs_;
};

// Per-route graph metrics of the training network.
class RouteFeatureTable {
public:
    RouteFeatureTable() = default;
    explicit RouteFeatureTable(WeightedDigraph graph, const KernelOptions& opt = {});

    const WeightedDigraph& graph() const { return graph_; }
    const std::vector<EdgeGraphFeatures>& features() const { return features_; }
    // nullopt for a route that is not an edge of the graph.
    std::optional<EdgeGraphFeatures> lookup(const std::string& origin, const std::string& destination) const;

private:
    WeightedDigraph graph_;
    std::vector<EdgeGraphFeatures> features_;
};

// Collapsed flight network of the given records. Airport coordinates come
// from the records; conflicting coordinates for one code throw Error("graph").
WeightedDigraph build_flight_graph(std::span<const FlightRecord> records);

AugmentedRecord augment(const RouteFeatureTable& table, const FlightRecord& record);
std::vector<AugmentedRecord> attach_graph_features(const RouteFeatureTable& table,
                                                   std::span<const FlightRecord> records);
// Graph built from train_records only, applied to every record in all_records.
std::vector<AugmentedRecord> attach_graph_features(std::span<const FlightRecord> train_records,
                                                   std::span<const FlightRecord> all_records);

struct FeatureMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<double> values;  // row-major, rows x names.size()
    std::vector<int> labels_cls;
    std::vector<double> labels_reg;

    std::size_t cols() const { return names.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
};

// One encoded row; throws Error("feature") naming the feature on a
// non-finite value.
std::vector<double> encode_row(const AugmentedRecord& r, const FeatureRegistry& registry);

// Booleans as 0/1, wind directions as a (sin, cos) pair. Throws
// Error("feature") naming the row and feature on a non-finite value.
FeatureMatrix build_matrix(std::span<const AugmentedRecord> records, const FeatureRegistry& registry);

// Registry columns followed by label_holding,label_holding_seconds.
std::string matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix matrix_from_csv(std::string_view csv);

}  // namespace airhold
