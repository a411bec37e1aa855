#pragma once

#include "airhold/eval.hpp"
#include "airhold/features.hpp"
#include "airhold/gat.hpp"
#include "airhold/gbdt.hpp"
#include "airhold/records.hpp"

#include <map>
#include <optional>
#include <string>

namespace airhold {

struct PipelineConfig {
    std::uint64_t seed = 7;
    std::size_t records = 42336;
    std::size_t positives = 720;
    std::size_t airports = 20;
    double test_fraction = 0.2;
    TrainConfig gbdt;
    // Layer counts of the GAT runs; empty skips the GAT.
    std::vector<int> gat_layers{1};
    GatConfig gat;
    unsigned threads = 0;
};

// Every intermediate of one end-to-end run.
struct PipelineRun {
    PipelineConfig config;
    Dataset data, train, test;
    RouteFeatureTable table;
    FeatureRegistry registry;
    FeatureMatrix train_matrix, test_matrix;
    GbdtModel classifier, regressor;
    TrainLog classifier_log;
    MetricsReport gbdt_metrics;
    RegressionReport delay_metrics;
    std::map<std::string, double> importances;
    std::map<int, MetricsReport> gat_metrics;  // by layer count
};

// Positives-only delay regression: rows of X whose classification label is 1.
FeatureMatrix holding_rows(const FeatureMatrix& X);

// GAT on the train/test split: graph and standardization from the training
// flights, test flights scored inductively. Returns test-set metrics.
MetricsReport evaluate_gat(std::span<const FlightRecord> train, std::span<const FlightRecord> test, const GatConfig& cfg,
                           GatModel* model = nullptr);

// synth -> split -> training graph -> features -> GBDT (+ GAT) -> metrics.
PipelineRun run_pipeline(const PipelineConfig& cfg);

// Deterministic JSON report of a run; identical runs give identical bytes.
std::string pipeline_report(const PipelineRun& run);

}  // namespace airhold
