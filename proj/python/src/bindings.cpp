#include "airhold/centrality.hpp"
#include "airhold/error.hpp"
#include "airhold/eval.hpp"
#include "airhold/features.hpp"
#include "airhold/gat.hpp"
#include "airhold/gbdt.hpp"
#include "airhold/graph.hpp"
#include "airhold/pipeline.hpp"
#include "airhold/records.hpp"
#include "airhold/service.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace airhold;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

FeatureMatrix to_matrix(const Array& X, const std::vector<std::string>& names, const std::vector<int>& y_cls,
                        const std::vector<double>& y_reg) {
    if (X.ndim() != 2) throw Error("dimension", "X must be two-dimensional");
    if (static_cast<std::size_t>(X.shape(1)) != names.size()) throw Error("dimension", "X columns != len(names)");
    FeatureMatrix m;
    m.names = names;
    m.rows = static_cast<std::size_t>(X.shape(0));
    m.values.assign(X.data(), X.data() + X.size());
    m.labels_cls = y_cls.empty() ? std::vector<int>(m.rows, 0) : y_cls;
    m.labels_reg = y_reg.empty() ? std::vector<double>(m.rows, 0.0) : y_reg;
    if (m.labels_cls.size() != m.rows || m.labels_reg.size() != m.rows) throw Error("dimension", "label length != rows");
    return m;
}

Array from_matrix(const FeatureMatrix& m) {
    Array a({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols())});
    std::copy(m.values.begin(), m.values.end(), a.mutable_data());
    return a;
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["tn"] = m.tn;
    d["fn"] = m.fn;
    d["accuracy"] = m.accuracy;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f1"] = m.f1;
    d["precision_undefined"] = m.precision_undefined;
    d["recall_undefined"] = m.recall_undefined;
    d["f1_undefined"] = m.f1_undefined;
    return d;
}

template <class V>
py::dict edge_map(const WeightedDigraph& g, const std::vector<V>& values) {
    py::dict d;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const auto k = g.key(g.edges()[e]);
        d[py::make_tuple(k.first, k.second)] = values[e];
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_airhold, m) {
    m.doc() = "Flight holding prediction on airport networks";

    static py::exception<Error> base(m, "AirholdError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(base, (e.kind() + ": " + e.what()).c_str());
        }
    });

    py::class_<FlightRecord>(m, "FlightRecord")
        .def(py::init<>())
        .def_readwrite("origin", &FlightRecord::origin)
        .def_readwrite("destination", &FlightRecord::destination)
        .def_readwrite("flight_hour", &FlightRecord::flight_hour)
        .def_readwrite("wind_dir_deg", &FlightRecord::wind_dir_deg)
        .def_readwrite("wind_speed_kt", &FlightRecord::wind_speed_kt)
        .def_readwrite("visibility_m", &FlightRecord::visibility_m)
        .def_readwrite("temperature_c", &FlightRecord::temperature_c)
        .def_readwrite("cloud_cover_octas", &FlightRecord::cloud_cover_octas)
        .def_readwrite("fc_wind_dir_deg", &FlightRecord::fc_wind_dir_deg)
        .def_readwrite("fc_wind_speed_kt", &FlightRecord::fc_wind_speed_kt)
        .def_readwrite("fc_visibility_m", &FlightRecord::fc_visibility_m)
        .def_readwrite("fc_temperature_c", &FlightRecord::fc_temperature_c)
        .def_readwrite("geodesic_km", &FlightRecord::geodesic_km)
        .def_readwrite("alt_src_m", &FlightRecord::alt_src_m)
        .def_readwrite("alt_dst_m", &FlightRecord::alt_dst_m)
        .def_readwrite("lat_src", &FlightRecord::lat_src)
        .def_readwrite("lon_src", &FlightRecord::lon_src)
        .def_readwrite("lat_dst", &FlightRecord::lat_dst)
        .def_readwrite("lon_dst", &FlightRecord::lon_dst)
        .def_readwrite("runway_head_change", &FlightRecord::runway_head_change)
        .def_readwrite("runway_config_change", &FlightRecord::runway_config_change)
        .def_readwrite("holding", &FlightRecord::holding)
        .def_readwrite("holding_seconds", &FlightRecord::holding_seconds)
        .def("__eq__", [](const FlightRecord& a, const FlightRecord& b) { return a == b; })
        .def("__repr__", [](const FlightRecord& r) {
            return "<FlightRecord " + r.origin + "->" + r.destination + (r.holding ? " holding>" : ">");
        });

    m.def("parse_records", [](const std::string& csv) { return parse_records(csv).records; }, py::arg("csv"));
    m.def(
        "serialize_records", [](std::vector<FlightRecord> recs) { return serialize_records({std::move(recs), {}}); },
        py::arg("records"));
    m.def(
        "synth",
        [](std::uint64_t seed, std::size_t records, std::size_t positives, std::size_t airports) {
            return synth_generate({seed, records, positives, airports}).records;
        },
        py::arg("seed") = 1, py::arg("records") = 42336, py::arg("positives") = 720, py::arg("airports") = 20);
    m.def(
        "stratified_split",
        [](std::vector<FlightRecord> recs, double frac, std::uint64_t seed) {
            auto [a, b] = stratified_split({std::move(recs), {}}, frac, seed);
            return py::make_tuple(a.records, b.records);
        },
        py::arg("records"), py::arg("test_fraction") = 0.2, py::arg("seed") = 1);
    m.def("geodesic_km", &geodesic_km, py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

    py::class_<WeightedDigraph>(m, "WeightedDigraph")
        .def(py::init([](const std::vector<std::tuple<std::string, double, double, double>>& nodes,
                         const std::map<EdgeKey, std::int64_t>& weights) {
                 std::vector<AirportNode> ns;
                 for (const auto& [c, lat, lon, alt] : nodes) ns.push_back({c, lat, lon, alt});
                 return WeightedDigraph(std::move(ns), weights);
             }),
             py::arg("nodes"), py::arg("weights"))
        .def_property_readonly("node_count", &WeightedDigraph::node_count)
        .def_property_readonly("edge_count", &WeightedDigraph::edge_count)
        .def("codes",
             [](const WeightedDigraph& g) {
                 std::vector<std::string> out;
                 for (const auto& n : g.nodes()) out.push_back(n.code);
                 return out;
             })
        .def("weights", &WeightedDigraph::weights)
        .def("to_json", [](const WeightedDigraph& g) { return graph_to_json(g); })
        .def_static("from_json", [](const std::string& s) { return graph_from_json(s); });

    m.def("build_flight_graph", [](const std::vector<FlightRecord>& r) { return build_flight_graph(r); }, py::arg("records"));
    m.def("is_strongly_connected", &is_strongly_connected, py::arg("graph"));
    m.def(
        "strengths",
        [](const WeightedDigraph& g, const std::string& code) {
            const auto s = strengths(g, code);
            return py::make_tuple(s.in, s.out);
        },
        py::arg("graph"), py::arg("code"));
    m.def("edge_betweenness", [](const WeightedDigraph& g) { return edge_map(g, edge_betweenness(g)); }, py::arg("graph"));
    m.def("flow_betweenness", [](const WeightedDigraph& g) { return edge_map(g, flow_betweenness(g)); }, py::arg("graph"));
    m.def("max_flow", [](const WeightedDigraph& g, const std::string& s, const std::string& t) { return max_flow(g, s, t).value; },
          py::arg("graph"), py::arg("source"), py::arg("target"));
    m.def("edge_connectivity", &edge_connectivity, py::arg("graph"), py::arg("u"), py::arg("v"));
    m.def(
        "google_matrix",
        [](const WeightedDigraph& g, double d) {
            const auto G = google_matrix(g, d);
            const auto n = static_cast<py::ssize_t>(G.size());
            Array a({n, n});
            for (py::ssize_t i = 0; i < n; ++i) {
                const auto row = G.row(static_cast<std::size_t>(i));
                std::copy(row.begin(), row.end(), a.mutable_data(i, 0));
            }
            return a;
        },
        py::arg("graph"), py::arg("damping") = 0.85);
    m.def(
        "pagerank",
        [](const WeightedDigraph& g, double d, double tol, int max_iter) {
            return pagerank_map(g, {d, tol, max_iter});
        },
        py::arg("graph"), py::arg("damping") = 0.85, py::arg("tol") = 1e-10, py::arg("max_iter") = 1000);
    m.def(
        "edge_features",
        [](const WeightedDigraph& g) {
            const auto f = compute_all_edge_features(g);
            py::dict d;
            for (std::size_t e = 0; e < g.edge_count(); ++e) {
                const auto k = g.key(g.edges()[e]);
                py::dict row;
                row["betweenness"] = f[e].betweenness;
                row["flow_betweenness"] = f[e].flow_betweenness;
                row["edge_connectivity"] = f[e].edge_connectivity;
                row["dd_src"] = f[e].degree_diff_src;
                row["dd_dst"] = f[e].degree_diff_dst;
                row["google_entry"] = f[e].google_entry;
                d[py::make_tuple(k.first, k.second)] = row;
            }
            return d;
        },
        py::arg("graph"));

    m.def("feature_names", [] { return FeatureRegistry::standard().names(); });
    m.def(
        "feature_matrix",
        [](const std::vector<FlightRecord>& train, const std::vector<FlightRecord>& records) {
            const auto X = build_matrix(attach_graph_features(train, records), FeatureRegistry::standard());
            return py::make_tuple(from_matrix(X), X.labels_cls, X.labels_reg);
        },
        py::arg("train_records"), py::arg("records"),
        "Encode records with graph features from the network of train_records. Returns (X, y_holding, y_seconds).");

    py::class_<GbdtModel>(m, "GbdtModel")
        .def_property_readonly("n_trees", [](const GbdtModel& g) { return g.trees.size(); })
        .def_readonly("base_score", &GbdtModel::base_score)
        .def_readonly("feature_names", &GbdtModel::feature_names)
        .def_property_readonly("is_classifier", [](const GbdtModel& g) { return g.task == Task::classification; })
        .def("predict",
             [](const GbdtModel& g, const Array& X) {
                 const auto mat = to_matrix(X, g.feature_names, {}, {});
                 const auto p = predict_all(g, mat);
                 return Array(static_cast<py::ssize_t>(p.size()), p.data());
             })
        .def("feature_importance", &feature_importance)
        .def("save", [](const GbdtModel& g) { return save_model(g); })
        .def_static("load", &load_model);

    auto train = [](bool cls) {
        return [cls](const Array& X, const std::vector<double>& y, const std::vector<std::string>& names, int rounds,
                     int max_depth, double lr, std::size_t min_leaf, std::optional<double> cw, double lambda) {
            TrainConfig c;
            c.rounds = rounds;
            c.max_depth = max_depth;
            c.learning_rate = lr;
            c.min_samples_leaf = min_leaf;
            c.class_weight_positive = cw;
            c.lambda_l2 = lambda;
            std::vector<int> yc;
            for (double v : y) yc.push_back(v > 0.5 ? 1 : 0);
            const auto mat = to_matrix(X, names, cls ? yc : std::vector<int>{}, cls ? std::vector<double>{} : y);
            py::gil_scoped_release release;
            return cls ? train_classifier(mat, c) : train_regressor(mat, c);
        };
    };
    for (auto [name, cls] : {std::pair{"train_classifier", true}, std::pair{"train_regressor", false}})
        m.def(name, train(cls), py::arg("X"), py::arg("y"), py::arg("names"), py::arg("rounds") = 200, py::arg("max_depth") = 6,
              py::arg("learning_rate") = 0.1, py::arg("min_samples_leaf") = 20, py::arg("class_weight_positive") = py::none(),
              py::arg("lambda_l2") = 1.0);

    m.def(
        "classification_metrics",
        [](const std::vector<int>& y, const std::vector<double>& p, double th) { return metrics_dict(classification_metrics(y, p, th)); },
        py::arg("y_true"), py::arg("y_prob"), py::arg("threshold") = 0.5);
    m.def(
        "regression_metrics",
        [](const std::vector<double>& y, const std::vector<double>& p, std::size_t bins) {
            const auto r = regression_metrics(y, p, bins);
            py::dict d;
            d["mse"] = r.mse;
            d["mae"] = r.mae;
            d["lo"] = r.lo;
            d["hi"] = r.hi;
            d["predicted"] = r.predicted;
            d["actual"] = r.actual;
            return d;
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("bins") = 50);
    m.def(
        "table_consistency",
        [](double tol) {
            py::list out;
            for (const auto& r : table_consistency(reference_table(), tol))
                out.append(py::make_tuple(r.model, r.f1_reported, r.f1_recomputed, r.pass));
            return out;
        },
        py::arg("tolerance") = 0.015);

    m.def(
        "gat_evaluate",
        [](const std::vector<FlightRecord>& train, const std::vector<FlightRecord>& test, int layers, int epochs,
           double lr, std::uint64_t seed) {
            GatConfig c;
            c.layers = layers;
            c.epochs = epochs;
            c.learning_rate = lr;
            c.seed = seed;
            py::gil_scoped_release release;
            return evaluate_gat(train, test, c);
        },
        py::arg("train"), py::arg("test"), py::arg("layers") = 1, py::arg("epochs") = 100, py::arg("learning_rate") = 0.05,
        py::arg("seed") = 1);
    py::class_<MetricsReport>(m, "MetricsReport")
        .def_readonly("accuracy", &MetricsReport::accuracy)
        .def_readonly("precision", &MetricsReport::precision)
        .def_readonly("recall", &MetricsReport::recall)
        .def_readonly("f1", &MetricsReport::f1)
        .def("as_dict", &metrics_dict);

    m.def(
        "run_pipeline",
        [](std::uint64_t seed, std::size_t records, std::size_t positives, std::size_t airports, int rounds,
           std::vector<int> gat_layers) {
            PipelineConfig c;
            c.seed = seed;
            c.records = records;
            c.positives = positives;
            c.airports = airports;
            c.gbdt.rounds = rounds;
            c.gat_layers = std::move(gat_layers);
            py::gil_scoped_release release;
            return pipeline_report(run_pipeline(c));
        },
        py::arg("seed") = 7, py::arg("records") = 42336, py::arg("positives") = 720, py::arg("airports") = 20,
        py::arg("rounds") = 200, py::arg("gat_layers") = std::vector<int>{1},
        "Run the end-to-end pipeline and return the JSON report.");

    py::class_<ModelSnapshot, std::shared_ptr<ModelSnapshot>>(m, "Snapshot")
        .def(py::init([](const WeightedDigraph& g, const GbdtModel& cls, const GbdtModel& reg) {
                 return std::const_pointer_cast<ModelSnapshot>(make_snapshot(g, FeatureRegistry::standard(), cls, reg));
             }),
             py::arg("graph"), py::arg("classifier"), py::arg("regressor"))
        .def("predict", [](const ModelSnapshot& s, const std::string& body) { return handle_predict(s, body).body; })
        .def("simulate", [](const ModelSnapshot& s, const std::string& body) { return handle_simulate(s, body).body; })
        .def("network", [](const ModelSnapshot& s) { return handle_network(s).body; });
    m.def("scenario_json", [](const FlightRecord& r) { return scenario_to_json(scenario_from_record(r)); }, py::arg("record"));
}
