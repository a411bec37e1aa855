#include "airhold/service.hpp"

#include "airhold/util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <set>

namespace airhold {

using nlohmann::json;

namespace {

std::string version_tag(const GbdtModel& m) {
    return std::string(kGbdtModelVersion) + "+" + sha256_hex(save_model(m)).substr(0, 12);
}

}  // namespace

std::shared_ptr<const ModelSnapshot> make_snapshot(WeightedDigraph graph, FeatureRegistry registry, GbdtModel classifier,
                                                   GbdtModel regressor, const KernelOptions& opt) {
    const auto names = registry.names();
    if (classifier.feature_names != names || regressor.feature_names != names)
        throw Error("model", "model features do not match the registry");
    if (classifier.task != Task::classification || regressor.task != Task::regression)
        throw Error("model", "expected a classifier and a regressor");
    auto s = std::make_shared<ModelSnapshot>();
    s->registry = std::move(registry);
    s->table = RouteFeatureTable(std::move(graph), opt);
    s->classifier_version = version_tag(classifier);
    s->regressor_version = version_tag(regressor);
    s->classifier = std::move(classifier);
    s->regressor = std::move(regressor);
    return s;
}

void save_model_dir(const std::string& dir, const FeatureRegistry& registry, const GbdtModel& classifier,
                    const GbdtModel& regressor) {
    std::filesystem::create_directories(dir);
    write_file(dir + "/classifier.json", save_model(classifier));
    write_file(dir + "/regressor.json", save_model(regressor));
    write_file(dir + "/registry.json", registry.to_json());
}

std::shared_ptr<const ModelSnapshot> load_snapshot(const std::string& model_dir, const std::string& graph_path,
                                                   const KernelOptions& opt) {
    return make_snapshot(graph_from_json(read_file(graph_path)), FeatureRegistry::from_json(read_file(model_dir + "/registry.json")),
                         load_model(read_file(model_dir + "/classifier.json")),
                         load_model(read_file(model_dir + "/regressor.json")), opt);
}

RequestError::RequestError(std::vector<FieldError> fields)
    : Error("request", fields.empty() ? "invalid request" : fields.front().field + ": " + fields.front().message),
      fields_(std::move(fields)) {}

namespace {

struct NumField {
    const char* name;
    double FlightRecord::*member;
};

const NumField kRealFields[] = {
    {"wind_dir_deg", &FlightRecord::wind_dir_deg},       {"wind_speed_kt", &FlightRecord::wind_speed_kt},
    {"visibility_m", &FlightRecord::visibility_m},       {"temperature_c", &FlightRecord::temperature_c},
    {"fc_wind_dir_deg", &FlightRecord::fc_wind_dir_deg}, {"fc_wind_speed_kt", &FlightRecord::fc_wind_speed_kt},
    {"fc_visibility_m", &FlightRecord::fc_visibility_m}, {"fc_temperature_c", &FlightRecord::fc_temperature_c},
};

ScenarioRequest scenario_from(const json& j, const std::string& prefix) {
    std::vector<FieldError> errs;
    if (!j.is_object()) throw RequestError(std::vector<FieldError>{{prefix.empty() ? "body" : prefix, "expected a JSON object"}});
    ScenarioRequest req;
    auto& r = req.inputs;
    std::set<std::string> known{"id", "origin", "destination", "flight_hour", "cloud_cover_octas", "runway_head_change",
                                "runway_config_change"};
    for (const auto& f : kRealFields) known.insert(f.name);

    for (const auto& [key, value] : j.items()) {
        if (key == "holding" || key == "holding_seconds")
            errs.push_back({prefix + key, "labels are not accepted"});
        else if (!known.contains(key))
            errs.push_back({prefix + key, "unknown field"});
    }
    if (j.contains("id")) {
        if (j["id"].is_string())
            req.id = j["id"].get<std::string>();
        else
            errs.push_back({prefix + "id", "expected a string"});
    }
    for (auto [name, member] : {std::pair{"origin", &FlightRecord::origin}, std::pair{"destination", &FlightRecord::destination}}) {
        if (!j.contains(name))
            errs.push_back({prefix + name, "missing"});
        else if (!j[name].is_string() || j[name].get<std::string>().empty())
            errs.push_back({prefix + name, "expected a non-empty airport code"});
        else
            r.*member = j[name].get<std::string>();
    }
    for (auto [name, member] : {std::pair{"flight_hour", &FlightRecord::flight_hour},
                                std::pair{"cloud_cover_octas", &FlightRecord::cloud_cover_octas}}) {
        if (!j.contains(name))
            errs.push_back({prefix + name, "missing"});
        else if (!j[name].is_number_integer())
            errs.push_back({prefix + name, "expected an integer"});
        else
            r.*member = j[name].get<int>();
    }
    for (const auto& f : kRealFields) {
        if (!j.contains(f.name))
            errs.push_back({prefix + f.name, "missing"});
        else if (!j[f.name].is_number())
            errs.push_back({prefix + f.name, "expected a number"});
        else
            r.*(f.member) = j[f.name].get<double>();
    }
    for (auto [name, member] : {std::pair{"runway_head_change", &FlightRecord::runway_head_change},
                                std::pair{"runway_config_change", &FlightRecord::runway_config_change}}) {
        if (!j.contains(name)) continue;
        if (!j[name].is_boolean())
            errs.push_back({prefix + name, "expected a boolean"});
        else
            r.*member = j[name].get<bool>();
    }
    if (!errs.empty()) throw RequestError(std::move(errs));
    return req;
}

json parse_body(std::string_view body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw RequestError(std::vector<FieldError>{{"body", std::string("malformed JSON: ") + e.what()}});
    }
}

json graph_features_json(const EdgeGraphFeatures& f) {
    return {{"betweenness", f.betweenness},         {"flow_betweenness", f.flow_betweenness},
            {"edge_connectivity", f.edge_connectivity}, {"dd_src", f.degree_diff_src},
            {"dd_dst", f.degree_diff_dst},             {"google_entry", f.google_entry}};
}

json response_json(const PredictionResponse& r) {
    json j = {{"holding_probability", r.holding_probability},
              {"predicted_delay_s", r.predicted_delay_s},
              {"unseen_route", r.unseen_route},
              {"graph_features", graph_features_json(r.graph_features)},
              {"model_versions", {{"classifier", r.classifier_version}, {"regressor", r.regressor_version}}}};
    j["id"] = r.id ? json(*r.id) : json(nullptr);
    return j;
}

HttpReply error_reply(int status, const std::string& kind, const std::string& message,
                      const std::vector<FieldError>& fields = {}) {
    json fs = json::array();
    for (const auto& f : fields) fs.push_back({{"field", f.field}, {"message", f.message}});
    return {status, json{{"error", kind}, {"message", message}, {"fields", fs}}.dump()};
}

template <class F>
HttpReply guarded(F&& f) {
    try {
        return f();
    } catch (const RequestError& e) {
        return error_reply(400, "bad_request", e.what(), e.fields());
    } catch (const UnknownNodeError& e) {
        return error_reply(422, "unknown_airport", e.what(), {{e.code(), "not in the network"}});
    } catch (const Error& e) {
        return error_reply(500, e.kind(), e.what());
    }
}

}  // namespace

ScenarioRequest parse_scenario(std::string_view body) { return scenario_from(parse_body(body), ""); }

ScenarioRequest scenario_from_record(const FlightRecord& r) {
    ScenarioRequest req;
    req.inputs = r;
    req.inputs.holding = false;
    req.inputs.holding_seconds = 0.0;
    return req;
}

std::string scenario_to_json(const ScenarioRequest& req) {
    const auto& r = req.inputs;
    json j = {{"origin", r.origin},
              {"destination", r.destination},
              {"flight_hour", r.flight_hour},
              {"cloud_cover_octas", r.cloud_cover_octas},
              {"runway_head_change", r.runway_head_change},
              {"runway_config_change", r.runway_config_change}};
    for (const auto& f : kRealFields) j[f.name] = r.*(f.member);
    if (req.id) j["id"] = *req.id;
    return j.dump();
}

PredictionResponse predict_scenario(const ModelSnapshot& snap, const ScenarioRequest& req) {
    const auto& g = snap.table.graph();
    FlightRecord rec = req.inputs;
    const auto& src = g.node(rec.origin);
    const auto& dst = g.node(rec.destination);
    rec.lat_src = src.lat;
    rec.lon_src = src.lon;
    rec.alt_src_m = src.altitude;
    rec.lat_dst = dst.lat;
    rec.lon_dst = dst.lon;
    rec.alt_dst_m = dst.altitude;
    rec.geodesic_km = geodesic_km(rec.lat_src, rec.lon_src, rec.lat_dst, rec.lon_dst);
    rec.holding = false;
    rec.holding_seconds = 0.0;
    if (auto bad = validate_record(rec)) throw RequestError(std::vector<FieldError>{{bad->first, bad->second}});

    const auto aug = augment(snap.table, rec);
    const auto row = encode_row(aug, snap.registry);
    PredictionResponse out;
    out.id = req.id;
    out.holding_probability = predict(snap.classifier, row);
    out.predicted_delay_s = predict(snap.regressor, row);
    out.unseen_route = aug.unseen_route;
    out.graph_features = aug.graph;
    out.classifier_version = snap.classifier_version;
    out.regressor_version = snap.regressor_version;
    return out;
}

std::string response_to_json(const PredictionResponse& r) { return response_json(r).dump(); }

HttpReply handle_health(const ModelSnapshot& snap) {
    return {200, json{{"status", "ok"},
                      {"model_versions", {{"classifier", snap.classifier_version}, {"regressor", snap.regressor_version}}}}
                     .dump()};
}

HttpReply handle_network(const ModelSnapshot& snap) {
    const auto& g = snap.table.graph();
    json nodes = json::array(), edges = json::array();
    for (std::size_t v = 0; v < g.node_count(); ++v) {
        const auto& n = g.node(v);
        const auto s = strengths(g, v);
        nodes.push_back({{"code", n.code}, {"lat", n.lat}, {"lon", n.lon}, {"alt", n.altitude},
                         {"in_strength", s.in}, {"out_strength", s.out}});
    }
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const auto& ie = g.edges()[e];
        edges.push_back({{"src", g.node(ie.src).code},
                         {"dst", g.node(ie.dst).code},
                         {"weight", ie.weight},
                         {"features", graph_features_json(snap.table.features()[e])}});
    }
    return {200, json{{"nodes", nodes}, {"edges", edges}}.dump()};
}

HttpReply handle_importances(const ModelSnapshot& snap) {
    json imp = json::object();
    bool trained = true;
    try {
        imp = feature_importance(snap.classifier);
    } catch (const Error&) {
        trained = false;
    }
    return {200, json{{"importances", imp}, {"has_splits", trained}}.dump()};
}

HttpReply handle_predict(const ModelSnapshot& snap, std::string_view body) {
    return guarded([&] { return HttpReply{200, response_to_json(predict_scenario(snap, parse_scenario(body)))}; });
}

HttpReply handle_simulate(const ModelSnapshot& snap, std::string_view body) {
    return guarded([&] {
        const auto j = parse_body(body);
        if (!j.is_array()) throw RequestError(std::vector<FieldError>{{"body", "expected a JSON array of scenarios"}});
        if (j.size() > kMaxSimulateBatch)
            return error_reply(413, "batch_too_large",
                               "at most " + std::to_string(kMaxSimulateBatch) + " scenarios per request");
        std::vector<ScenarioRequest> reqs;
        std::vector<FieldError> errs;
        for (std::size_t i = 0; i < j.size(); ++i) {
            try {
                reqs.push_back(scenario_from(j[i], "[" + std::to_string(i) + "]."));
            } catch (const RequestError& e) {
                errs.insert(errs.end(), e.fields().begin(), e.fields().end());
            }
        }
        if (!errs.empty()) throw RequestError(std::move(errs));
        json out = json::array();
        for (const auto& r : reqs) out.push_back(response_json(predict_scenario(snap, r)));
        return HttpReply{200, out.dump()};
    });
}

Service::Service(std::shared_ptr<const ModelSnapshot> snapshot)
    : snap_(std::move(snapshot)), server_(std::make_unique<httplib::Server>()) {
    if (!snap_) throw Error("service", "no model snapshot");
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    s.set_tcp_nodelay(true);
    // SO_REUSEADDR only: a second server on a live port must fail to bind.
    s.set_socket_options([](int sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto send = [](httplib::Response& res, const HttpReply& r) { res.status = r.status; res.set_content(r.body, "application/json"); };
    const auto snap = snap_;
    s.Get("/health", [snap, send](const httplib::Request&, httplib::Response& res) { send(res, handle_health(*snap)); });
    s.Get("/network", [snap, send](const httplib::Request&, httplib::Response& res) { send(res, handle_network(*snap)); });
    s.Get("/importances",
          [snap, send](const httplib::Request&, httplib::Response& res) { send(res, handle_importances(*snap)); });
    s.Post("/predict",
           [snap, send](const httplib::Request& req, httplib::Response& res) { send(res, handle_predict(*snap, req.body)); });
    s.Post("/simulate",
           [snap, send](const httplib::Request& req, httplib::Response& res) { send(res, handle_simulate(*snap, req.body)); });
    s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error("bind", "cannot bind " + host + ":" + std::to_string(port));
    return port_;
}

void Service::run() {
    if (port_ < 0) throw Error("bind", "bind() must succeed before run()");
    server_->listen_after_bind();
}

void Service::start() {
    if (port_ < 0) throw Error("bind", "bind() must succeed before start()");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace airhold
