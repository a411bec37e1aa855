#include "airhold/pipeline.hpp"

#include "airhold/util.hpp"

#include <json.hpp>

namespace airhold {

FeatureMatrix holding_rows(const FeatureMatrix& X) {
    FeatureMatrix out;
    out.names = X.names;
    for (std::size_t i = 0; i < X.rows; ++i) {
        if (X.labels_cls[i] != 1) continue;
        const auto r = X.row(i);
        out.values.insert(out.values.end(), r.begin(), r.end());
        out.labels_cls.push_back(1);
        out.labels_reg.push_back(X.labels_reg[i]);
        ++out.rows;
    }
    return out;
}

MetricsReport evaluate_gat(std::span<const FlightRecord> train, std::span<const FlightRecord> test, const GatConfig& cfg,
                           GatModel* model) {
    const auto network = build_flight_graph(train);
    const auto st = fit_standardizer(network, train);
    const auto train_batch = make_batch(network, train, st);
    const auto test_batch = make_batch(network, test, st);
    auto c = cfg;
    c.edge_dim = static_cast<int>(st.edge_mean.size());
    c.node_dim = 5;
    const auto res = train_gat(train_batch, c);
    const auto prob = edge_predict(c, res.params, test_batch);
    if (model) *model = GatModel{c, res.params, st};
    return classification_metrics(test_batch.labels, prob);
}

PipelineRun run_pipeline(const PipelineConfig& cfg) {
    PipelineRun run;
    run.config = cfg;
    run.data = synth_generate({cfg.seed, cfg.records, cfg.positives, cfg.airports});
    std::tie(run.train, run.test) = stratified_split(run.data, cfg.test_fraction, cfg.seed);

    run.table = RouteFeatureTable(build_flight_graph(run.train.records), KernelOptions{cfg.threads});
    run.registry = FeatureRegistry::standard();
    run.train_matrix = build_matrix(attach_graph_features(run.table, run.train.records), run.registry);
    run.test_matrix = build_matrix(attach_graph_features(run.table, run.test.records), run.registry);

    auto gcfg = cfg.gbdt;
    gcfg.seed = cfg.seed;
    run.classifier = train_classifier(run.train_matrix, gcfg, &run.classifier_log);
    run.gbdt_metrics = classification_metrics(run.test_matrix.labels_cls, predict_all(run.classifier, run.test_matrix));
    run.importances = feature_importance(run.classifier);

    const auto reg_train = holding_rows(run.train_matrix);
    const auto reg_test = holding_rows(run.test_matrix);
    run.regressor = train_regressor(reg_train, gcfg);
    run.delay_metrics = regression_metrics(reg_test.labels_reg, predict_all(run.regressor, reg_test));

    for (int layers : cfg.gat_layers) {
        auto g = cfg.gat;
        g.layers = layers;
        g.seed = cfg.seed;
        run.gat_metrics[layers] = evaluate_gat(run.train.records, run.test.records, g);
    }
    return run;
}

std::string pipeline_report(const PipelineRun& run) {
    using nlohmann::json;
    const auto& c = run.config;
    json rows = json::array();
    rows.push_back(table_csv_row("gbdt_graph_features", run.gbdt_metrics));
    for (const auto& [layers, m] : run.gat_metrics) rows.push_back(table_csv_row("gat_" + std::to_string(layers) + "_layers", m));
    json gat = json::object();
    for (const auto& [layers, m] : run.gat_metrics) gat[std::to_string(layers)] = json::parse(metrics_to_json(m));
    json doc = {
        {"seed", c.seed},
        {"dataset", {{"records", run.data.records.size()}, {"positives", run.data.positives()}, {"airports", c.airports}}},
        {"split",
         {{"test_fraction", c.test_fraction},
          {"train", run.train.records.size()},
          {"test", run.test.records.size()},
          {"train_positives", run.train.positives()},
          {"test_positives", run.test.positives()}}},
        {"graph", {{"nodes", run.table.graph().node_count()}, {"edges", run.table.graph().edge_count()}}},
        {"gbdt",
         {{"rounds", c.gbdt.rounds},
          {"max_depth", c.gbdt.max_depth},
          {"learning_rate", c.gbdt.learning_rate},
          {"class_weight_positive", run.classifier.class_weight_positive},
          {"train_loss_first", run.classifier_log.loss.front()},
          {"train_loss_last", run.classifier_log.loss.back()},
          {"classifier_sha256", sha256_hex(save_model(run.classifier))},
          {"regressor_sha256", sha256_hex(save_model(run.regressor))}}},
        {"classification", json::parse(metrics_to_json(run.gbdt_metrics))},
        {"delay_regression", json::parse(regression_to_json(run.delay_metrics))},
        {"importances", run.importances},
        {"gat", gat},
        {"table", {{"header", kTableCsvHeader}, {"rows", rows}}},
    };
    return doc.dump(2) + "\n";
}

}  // namespace airhold
