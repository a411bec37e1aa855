// airhold: command-line front end for the holding-prediction pipeline.
#include "airhold/error.hpp"
#include "airhold/eval.hpp"
#include "airhold/features.hpp"
#include "airhold/gat.hpp"
#include "airhold/gbdt.hpp"
#include "airhold/pipeline.hpp"
#include "airhold/records.hpp"
#include "airhold/service.hpp"
#include "airhold/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace airhold;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Seed, file digests and a config digest for one invocation. Written next to
// the primary output as <output>.manifest.json (or manifest.json in a
// directory output).
class RunManifest {
public:
    RunManifest(std::string command, json config) : command_(std::move(command)), config_(std::move(config)), started_(utc_now()) {}

    void seed(std::uint64_t s) { seed_ = s; }
    void input(const std::string& path) { inputs_.push_back(path); }
    void output(const std::string& path) { outputs_.push_back(path); }

    void write(const std::string& path) const {
        auto digests = [](const std::vector<std::string>& paths) {
            json out = json::array();
            for (const auto& p : paths) out.push_back({{"path", p}, {"sha256", sha256_hex(read_file(p))}});
            return out;
        };
        json doc = {{"command", command_},
                    {"config", config_},
                    {"config_sha256", sha256_hex(config_.dump())},
                    {"inputs", digests(inputs_)},
                    {"outputs", digests(outputs_)},
                    {"started_at", started_},
                    {"finished_at", utc_now()}};
        doc["seed"] = seed_ ? json(*seed_) : json(nullptr);
        write_file(path, doc.dump(2) + "\n");
        spdlog::info("manifest written to {}", path);
    }

private:
    std::string command_;
    json config_;
    std::string started_;
    std::optional<std::uint64_t> seed_;
    std::vector<std::string> inputs_, outputs_;
};

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void save(const std::string& path, std::string_view text) {
    ensure_parent(path);
    write_file(path, text);
}

// Registry whose columns follow the given names, kinds from the standard set.
FeatureRegistry registry_for(const std::vector<std::string>& names) {
    const auto standard = FeatureRegistry::standard().specs();
    std::vector<FeatureSpec> specs;
    for (const auto& n : names) {
        auto it = std::find_if(standard.begin(), standard.end(), [&](const FeatureSpec& s) { return s.name == n; });
        if (it == standard.end()) throw Error("registry", "unknown feature column '" + n + "'");
        specs.push_back(*it);
    }
    return FeatureRegistry(std::move(specs));
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("airhold");
    logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("AIRHOLD_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

struct SynthOpts {
    SynthConfig cfg;
    std::string out, train_out, test_out;
    double test_fraction = 0.2;
};

void run_synth(const SynthOpts& o) {
    RunManifest m("synth", {{"records", o.cfg.n}, {"positives", o.cfg.positives}, {"airports", o.cfg.airports},
                            {"test_fraction", o.test_fraction}});
    m.seed(o.cfg.seed);
    const auto ds = synth_generate(o.cfg);
    save(o.out, serialize_records(ds));
    m.output(o.out);
    spdlog::info("{} records, {} holdings", ds.records.size(), ds.positives());
    if (!o.train_out.empty() || !o.test_out.empty()) {
        if (o.train_out.empty() || o.test_out.empty()) throw Error("usage", "--train-out and --test-out go together");
        const auto [train, test] = stratified_split(ds, o.test_fraction, o.cfg.seed);
        save(o.train_out, serialize_records(train));
        save(o.test_out, serialize_records(test));
        m.output(o.train_out);
        m.output(o.test_out);
    }
    m.write(o.out + ".manifest.json");
}

struct GraphOpts {
    std::string data, out, edge_features;
    unsigned threads = 0;
};

void run_build_graph(const GraphOpts& o) {
    RunManifest m("build-graph", {{"threads", o.threads}});
    m.input(o.data);
    const auto ds = parse_records(read_file(o.data));
    const auto g = build_flight_graph(ds.records);
    spdlog::info("graph: {} airports, {} routes, strongly connected: {}", g.node_count(), g.edge_count(),
                 !g.empty() && is_strongly_connected(g));
    save(o.out, graph_to_json(g));
    m.output(o.out);
    if (!o.edge_features.empty()) {
        save(o.edge_features, features_to_csv(g, compute_all_edge_features(g, {o.threads})));
        m.output(o.edge_features);
    }
    m.write(o.out + ".manifest.json");
}

struct FeatureOpts {
    std::string data, graph, out;
    unsigned threads = 0;
};

void run_features(const FeatureOpts& o) {
    RunManifest m("features", {{"threads", o.threads}});
    m.input(o.data);
    m.input(o.graph);
    const auto ds = parse_records(read_file(o.data));
    const RouteFeatureTable table(graph_from_json(read_file(o.graph)), {o.threads});
    const auto X = build_matrix(attach_graph_features(table, ds.records), FeatureRegistry::standard());
    save(o.out, matrix_to_csv(X));
    m.output(o.out);
    m.write(o.out + ".manifest.json");
}

struct GbdtOpts {
    std::string train, model_dir, task, model_out, config;
    TrainConfig cfg;
    double class_weight = 0.0;  // 0 = N_neg / N_pos
    CLI::App* cmd = nullptr;
};

// Values from a --config JSON file, except those given explicitly as flags.
void apply_config_file(GbdtOpts& o) {
    const auto j = json::parse(read_file(o.config));
    auto take = [&](const char* key, const char* flag, auto& field) {
        if (j.contains(key) && o.cmd->count(flag) == 0) j.at(key).get_to(field);
    };
    take("rounds", "--rounds", o.cfg.rounds);
    take("max_depth", "--max-depth", o.cfg.max_depth);
    take("learning_rate", "--lr", o.cfg.learning_rate);
    take("min_samples_leaf", "--min-leaf", o.cfg.min_samples_leaf);
    take("lambda_l2", "--lambda", o.cfg.lambda_l2);
    take("seed", "--seed", o.cfg.seed);
    if (j.contains("class_weight_positive") && !j["class_weight_positive"].is_null() && o.cmd->count("--class-weight") == 0)
        o.class_weight = j["class_weight_positive"].get<double>();
}

void run_train_gbdt(GbdtOpts o) {
    if (o.model_dir.empty() == (o.task.empty() || o.model_out.empty()))
        throw Error("usage", "give either --model-dir, or --task with --model-out");
    if (!o.config.empty()) apply_config_file(o);
    if (o.class_weight > 0) o.cfg.class_weight_positive = o.class_weight;
    json cfg = {{"rounds", o.cfg.rounds},
                {"max_depth", o.cfg.max_depth},
                {"learning_rate", o.cfg.learning_rate},
                {"min_samples_leaf", o.cfg.min_samples_leaf},
                {"lambda_l2", o.cfg.lambda_l2},
                {"class_weight_positive", o.class_weight > 0 ? json(o.class_weight) : json(nullptr)}};
    RunManifest m("train-gbdt", cfg);
    m.seed(o.cfg.seed);
    m.input(o.train);
    if (!o.config.empty()) m.input(o.config);
    const auto X = matrix_from_csv(read_file(o.train));
    if (!o.task.empty()) {
        const auto model = o.task == "cls" ? train_classifier(X, o.cfg) : train_regressor(holding_rows(X), o.cfg);
        save(o.model_out, save_model(model));
        m.output(o.model_out);
        m.write(o.model_out + ".manifest.json");
        return;
    }
    const auto registry = registry_for(X.names);
    TrainLog log;
    const auto cls = train_classifier(X, o.cfg, &log);
    spdlog::info("classifier loss {} -> {}", log.loss.front(), log.loss.back());
    const auto reg = train_regressor(holding_rows(X), o.cfg);
    save_model_dir(o.model_dir, registry, cls, reg);
    for (const char* f : {"/classifier.json", "/regressor.json", "/registry.json"}) m.output(o.model_dir + f);
    m.write(o.model_dir + "/manifest.json");
}

struct GatOpts {
    std::string train, test, out, model_prefix;
    std::vector<int> layers{1};
    GatConfig cfg;
    double class_weight = 0.0;
};

void run_train_gat(GatOpts o) {
    if (o.class_weight > 0) o.cfg.positive_class_weight = o.class_weight;
    json cfg = {{"layers", o.layers},           {"heads", o.cfg.heads},       {"hidden_dim", o.cfg.hidden_dim},
                {"mlp_hidden", o.cfg.mlp_hidden}, {"epochs", o.cfg.epochs}, {"learning_rate", o.cfg.learning_rate},
                {"class_weight_positive", o.class_weight > 0 ? json(o.class_weight) : json(nullptr)}};
    RunManifest m("train-gat", cfg);
    m.seed(o.cfg.seed);
    m.input(o.train);
    m.input(o.test);
    const auto train = parse_records(read_file(o.train));
    const auto test = parse_records(read_file(o.test));
    std::string csv = std::string(kTableCsvHeader) + "\n";
    for (int layers : o.layers) {
        auto c = o.cfg;
        c.layers = layers;
        GatModel model;
        const auto metrics = evaluate_gat(train.records, test.records, c, &model);
        const auto name = "gat_" + std::to_string(layers) + "_layers";
        csv += table_csv_row(name, metrics) + "\n";
        spdlog::info("{}: f1 {}", name, metrics.f1);
        if (!o.model_prefix.empty()) {
            const auto path = o.model_prefix + std::to_string(layers) + ".json";
            save(path, save_gat(model));
            m.output(path);
        }
    }
    save(o.out, csv);
    std::cout << csv;
    m.output(o.out);
    m.write(o.out + ".manifest.json");
}

struct EvalOpts {
    std::string model, data, report, csv, name = "gbdt_graph_features";
    double threshold = 0.5;
};

void run_evaluate(const EvalOpts& o) {
    RunManifest m("evaluate", {{"threshold", o.threshold}, {"name", o.name}});
    m.input(o.model);
    m.input(o.data);
    const auto model = load_model(read_file(o.model));
    const auto X = matrix_from_csv(read_file(o.data));
    if (X.names != model.feature_names) throw Error("dimension", "data columns do not match the model features");
    if (model.task == Task::classification) {
        const auto mr = classification_metrics(X.labels_cls, predict_all(model, X), o.threshold);
        save(o.report, metrics_to_json(mr) + "\n");
        const auto row = table_csv_row(o.name, mr);
        std::cout << kTableCsvHeader << "\n" << row << "\n";
        if (!o.csv.empty()) {
            save(o.csv, std::string(kTableCsvHeader) + "\n" + row + "\n");
            m.output(o.csv);
        }
    } else {
        const auto rows = holding_rows(X);
        save(o.report, regression_to_json(regression_metrics(rows.labels_reg, predict_all(model, rows))) + "\n");
    }
    m.output(o.report);
    m.write(o.report + ".manifest.json");
}

struct ServeOpts {
    std::string model_dir, graph, bind = "127.0.0.1:8080";
    unsigned threads = 0;
};

void run_serve(const ServeOpts& o) {
    const auto colon = o.bind.rfind(':');
    std::int64_t port = -1;
    if (colon == std::string::npos || !parse_int(std::string_view(o.bind).substr(colon + 1), port) || port < 0 || port > 65535)
        throw Error("usage", "--bind expects host:port");
    RunManifest m("serve", {{"bind", o.bind}});
    m.input(o.model_dir + "/classifier.json");
    m.input(o.model_dir + "/regressor.json");
    m.input(o.model_dir + "/registry.json");
    m.input(o.graph);
    Service svc(load_snapshot(o.model_dir, o.graph, {o.threads}));
    const int bound = svc.bind(o.bind.substr(0, colon), static_cast<int>(port));
    m.write(o.model_dir + "/serve.manifest.json");
    std::cout << "listening on " << o.bind.substr(0, colon) << ":" << bound << std::endl;
    svc.run();
}

struct PipelineOpts {
    PipelineConfig cfg;
    std::string out;
};

void run_pipeline_cmd(const PipelineOpts& o) {
    const auto& c = o.cfg;
    json cfg = {{"records", c.records},       {"positives", c.positives},     {"airports", c.airports},
                {"test_fraction", c.test_fraction}, {"rounds", c.gbdt.rounds}, {"max_depth", c.gbdt.max_depth},
                {"learning_rate", c.gbdt.learning_rate}, {"gat_layers", c.gat_layers}, {"gat_epochs", c.gat.epochs}};
    RunManifest m("pipeline", cfg);
    m.seed(c.seed);
    const auto run = run_pipeline(c);
    fs::create_directories(o.out);
    const auto put = [&](const std::string& name, std::string_view text) {
        const auto path = (fs::path(o.out) / name).string();
        save(path, text);
        m.output(path);
    };
    put("train.csv", serialize_records(run.train));
    put("test.csv", serialize_records(run.test));
    put("graph.json", graph_to_json(run.table.graph()));
    put("edge_features.csv", features_to_csv(run.table.graph(), run.table.features()));
    put("models/classifier.json", save_model(run.classifier));
    put("models/regressor.json", save_model(run.regressor));
    put("models/registry.json", run.registry.to_json());
    std::string table = std::string(kTableCsvHeader) + "\n" + table_csv_row("gbdt_graph_features", run.gbdt_metrics) + "\n";
    for (const auto& [layers, mr] : run.gat_metrics)
        table += table_csv_row("gat_" + std::to_string(layers) + "_layers", mr) + "\n";
    put("table.csv", table);
    const auto report = pipeline_report(run);
    put("report.json", report);
    m.write((fs::path(o.out) / "manifest.json").string());
    std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Flight holding prediction on airport networks"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SynthOpts synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic flight dataset");
    s->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();
    s->add_option("--records,--n", synth.cfg.n, "Number of flights")->capture_default_str();
    s->add_option("--positives", synth.cfg.positives, "Number of holdings")->capture_default_str();
    s->add_option("--airports", synth.cfg.airports, "Number of airports")->capture_default_str();
    s->add_option("--out", synth.out, "Output records CSV")->required();
    s->add_option("--test-fraction", synth.test_fraction, "Test share for --train-out/--test-out")->capture_default_str();
    s->add_option("--train-out", synth.train_out, "Stratified training split CSV");
    s->add_option("--test-out", synth.test_out, "Stratified test split CSV");
    s->callback([&] { run_synth(synth); });

    GraphOpts graph;
    auto* g = app.add_subcommand("build-graph", "Collapse flights into the weighted route network");
    g->add_option("--data", graph.data, "Records CSV")->required()->check(CLI::ExistingFile);
    g->add_option("--out", graph.out, "Graph JSON")->required();
    g->add_option("--edge-features", graph.edge_features, "Optional per-route graph features CSV");
    g->add_option("--threads", graph.threads, "Worker threads (0 = all cores)");
    g->callback([&] { run_build_graph(graph); });

    FeatureOpts feat;
    auto* f = app.add_subcommand("features", "Join graph features onto flights and encode a matrix");
    f->add_option("--data", feat.data, "Records CSV")->required()->check(CLI::ExistingFile);
    f->add_option("--graph", feat.graph, "Training graph JSON")->required()->check(CLI::ExistingFile);
    f->add_option("--out", feat.out, "Feature matrix CSV")->required();
    f->add_option("--threads", feat.threads, "Worker threads (0 = all cores)");
    f->callback([&] { run_features(feat); });

    GbdtOpts gb;
    auto* tg = app.add_subcommand("train-gbdt", "Train the holding classifier and the delay regressor");
    tg->add_option("--train", gb.train, "Training feature matrix CSV")->required()->check(CLI::ExistingFile);
    gb.cmd = tg;
    tg->add_option("--model-dir", gb.model_dir, "Output directory for classifier, regressor and registry");
    tg->add_option("--task", gb.task, "Train a single model: cls or reg (regression uses holding rows)")
        ->check(CLI::IsMember({"cls", "reg"}));
    tg->add_option("--model-out", gb.model_out, "Model JSON for --task");
    tg->add_option("--config", gb.config, "JSON training config; explicit flags take precedence")->check(CLI::ExistingFile);
    tg->add_option("--rounds", gb.cfg.rounds)->capture_default_str();
    tg->add_option("--max-depth", gb.cfg.max_depth)->capture_default_str();
    tg->add_option("--lr", gb.cfg.learning_rate)->capture_default_str();
    tg->add_option("--min-leaf", gb.cfg.min_samples_leaf)->capture_default_str();
    tg->add_option("--lambda", gb.cfg.lambda_l2)->capture_default_str();
    tg->add_option("--class-weight", gb.class_weight, "Positive weight (default N_neg/N_pos)");
    tg->add_option("--seed", gb.cfg.seed)->capture_default_str();
    tg->callback([&] { run_train_gbdt(gb); });

    GatOpts ga;
    auto* tt = app.add_subcommand("train-gat", "Train graph attention networks and print one metrics row per layer count");
    tt->add_option("--train", ga.train, "Training records CSV")->required()->check(CLI::ExistingFile);
    tt->add_option("--test", ga.test, "Test records CSV")->required()->check(CLI::ExistingFile);
    tt->add_option("--out", ga.out, "Metrics CSV")->required();
    tt->add_option("--layers", ga.layers, "Layer counts, e.g. 1 3 5 10 30")->check(CLI::Range(1, 64))->capture_default_str();
    tt->add_option("--heads", ga.cfg.heads)->capture_default_str();
    tt->add_option("--hidden", ga.cfg.hidden_dim)->capture_default_str();
    tt->add_option("--mlp-hidden", ga.cfg.mlp_hidden)->capture_default_str();
    tt->add_option("--epochs", ga.cfg.epochs)->capture_default_str();
    tt->add_option("--lr", ga.cfg.learning_rate)->capture_default_str();
    tt->add_option("--class-weight", ga.class_weight, "Positive weight (default N_neg/N_pos)");
    tt->add_option("--seed", ga.cfg.seed)->capture_default_str();
    tt->add_option("--model-prefix", ga.model_prefix, "Save parameters to <prefix><layers>.json");
    tt->callback([&] { run_train_gat(ga); });

    EvalOpts ev;
    auto* e = app.add_subcommand("evaluate", "Score a model on a feature matrix");
    e->add_option("--model", ev.model, "GBDT model JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--data", ev.data, "Feature matrix CSV")->required()->check(CLI::ExistingFile);
    e->add_option("--report", ev.report, "Metrics report JSON")->required();
    e->add_option("--csv", ev.csv, "Table-shaped CSV row");
    e->add_option("--name", ev.name, "Model name in the CSV row")->capture_default_str();
    e->add_option("--threshold", ev.threshold)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    e->callback([&] { run_evaluate(ev); });

    ServeOpts sv;
    auto* srv = app.add_subcommand("serve", "Serve predictions over HTTP");
    srv->add_option("--model-dir", sv.model_dir, "Directory written by train-gbdt")->required()->check(CLI::ExistingDirectory);
    srv->add_option("--graph", sv.graph, "Training graph JSON")->required()->check(CLI::ExistingFile);
    srv->add_option("--bind", sv.bind, "host:port")->capture_default_str();
    srv->add_option("--threads", sv.threads, "Worker threads for graph features (0 = all cores)");
    srv->callback([&] { run_serve(sv); });

    PipelineOpts pl;
    auto* p = app.add_subcommand("pipeline", "Run synth, graph, features, training and evaluation end to end");
    p->add_option("--seed", pl.cfg.seed)->capture_default_str();
    p->add_option("--out", pl.out, "Output directory")->required();
    p->add_option("--records", pl.cfg.records)->capture_default_str();
    p->add_option("--positives", pl.cfg.positives)->capture_default_str();
    p->add_option("--airports", pl.cfg.airports)->capture_default_str();
    p->add_option("--test-fraction", pl.cfg.test_fraction)->capture_default_str();
    p->add_option("--rounds", pl.cfg.gbdt.rounds)->capture_default_str();
    p->add_option("--max-depth", pl.cfg.gbdt.max_depth)->capture_default_str();
    p->add_option("--gat-layers", pl.cfg.gat_layers, "GAT layer counts; 0 skips the GAT")->capture_default_str();
    p->add_option("--gat-epochs", pl.cfg.gat.epochs)->capture_default_str();
    p->add_option("--threads", pl.cfg.threads, "Worker threads (0 = all cores)");
    p->callback([&] {
        std::erase(pl.cfg.gat_layers, 0);
        run_pipeline_cmd(pl);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 2;
    } catch (const Error& ex) {
        std::cerr << json{{"error", ex.kind()}, {"message", ex.what()}}.dump() << std::endl;
        return ex.kind() == "usage" ? 2 : 1;
    } catch (const std::exception& ex) {
        std::cerr << json{{"error", "internal"}, {"message", ex.what()}}.dump() << std::endl;
        return 1;
    }
    return 0;
}
