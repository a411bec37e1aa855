#include "airhold/features.hpp"

#include "airhold/error.hpp"
#include "airhold/util.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace airhold {

namespace {

using Extractor = std::function<double(const AugmentedRecord&)>;

double dir_sin(double deg) { return std::sin(std::fmod(deg, 360.0) * M_PI / 180.0); }
double dir_cos(double deg) { return std::cos(std::fmod(deg, 360.0) * M_PI / 180.0); }

struct KnownFeature {
    FeatureKind kind;
    Extractor extract;
};

const std::vector<std::pair<std::string, KnownFeature>>& known_features() {
    using K = FeatureKind;
    auto rec = [](double FlightRecord::*m) { return [m](const AugmentedRecord& a) { return a.record.*m; }; };
    auto flag = [](bool FlightRecord::*m) { return [m](const AugmentedRecord& a) { return a.record.*m ? 1.0 : 0.0; }; };
    static const std::vector<std::pair<std::string, KnownFeature>> table = {
        {"flight_hour", {K::tabular, [](const AugmentedRecord& a) { return static_cast<double>(a.record.flight_hour); }}},
        {"wind_dir_sin", {K::tabular, [](const AugmentedRecord& a) { return dir_sin(a.record.wind_dir_deg); }}},
        {"wind_dir_cos", {K::tabular, [](const AugmentedRecord& a) { return dir_cos(a.record.wind_dir_deg); }}},
        {"wind_speed_kt", {K::tabular, rec(&FlightRecord::wind_speed_kt)}},
        {"visibility_m", {K::tabular, rec(&FlightRecord::visibility_m)}},
        {"temperature_c", {K::tabular, rec(&FlightRecord::temperature_c)}},
        {"cloud_cover_octas", {K::tabular, [](const AugmentedRecord& a) { return static_cast<double>(a.record.cloud_cover_octas); }}},
        {"fc_wind_dir_sin", {K::tabular, [](const AugmentedRecord& a) { return dir_sin(a.record.fc_wind_dir_deg); }}},
        {"fc_wind_dir_cos", {K::tabular, [](const AugmentedRecord& a) { return dir_cos(a.record.fc_wind_dir_deg); }}},
        {"fc_wind_speed_kt", {K::tabular, rec(&FlightRecord::fc_wind_speed_kt)}},
        {"fc_visibility_m", {K::tabular, rec(&FlightRecord::fc_visibility_m)}},
        {"fc_temperature_c", {K::tabular, rec(&FlightRecord::fc_temperature_c)}},
        {"geodesic_km", {K::tabular, rec(&FlightRecord::geodesic_km)}},
        {"lat_src", {K::tabular, rec(&FlightRecord::lat_src)}},
        {"lon_src", {K::tabular, rec(&FlightRecord::lon_src)}},
        {"alt_src_m", {K::tabular, rec(&FlightRecord::alt_src_m)}},
        {"lat_dst", {K::tabular, rec(&FlightRecord::lat_dst)}},
        {"lon_dst", {K::tabular, rec(&FlightRecord::lon_dst)}},
        {"alt_dst_m", {K::tabular, rec(&FlightRecord::alt_dst_m)}},
        {"runway_head_change", {K::tabular, flag(&FlightRecord::runway_head_change)}},
        {"runway_config_change", {K::tabular, flag(&FlightRecord::runway_config_change)}},
        {"betweenness", {K::graph, [](const AugmentedRecord& a) { return a.graph.betweenness; }}},
        {"flow_betweenness", {K::graph, [](const AugmentedRecord& a) { return a.graph.flow_betweenness; }}},
        {"edge_connectivity", {K::graph, [](const AugmentedRecord& a) { return a.graph.edge_connectivity; }}},
        {"dd_src", {K::graph, [](const AugmentedRecord& a) { return static_cast<double>(a.graph.degree_diff_src); }}},
        {"dd_dst", {K::graph, [](const AugmentedRecord& a) { return static_cast<double>(a.graph.degree_diff_dst); }}},
        {"google_entry", {K::graph, [](const AugmentedRecord& a) { return a.graph.google_entry; }}},
        {"unseen_route", {K::indicator, [](const AugmentedRecord& a) { return a.unseen_route ? 1.0 : 0.0; }}},
    };
    return table;
}

const KnownFeature& lookup_feature(const std::string& name) {
    for (const auto& [n, f] : known_features())
        if (n == name) return f;
    throw Error("registry", "unknown feature '" + name + "'");
}

const char* kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::tabular: return "tabular";
        case FeatureKind::graph: return "graph";
        case FeatureKind::indicator: return "indicator";
    }
    return "?";
}

FeatureKind parse_kind(const std::string& s) {
    if (s == "tabular") return FeatureKind::tabular;
    if (s == "graph") return FeatureKind::graph;
    if (s == "indicator") return FeatureKind::indicator;
    throw Error("registry", "unknown feature kind '" + s + "'");
}

}  // namespace

FeatureRegistry::FeatureRegistry(std::vector<FeatureSpec> specs) : specs_(std::move(specs)) {
    std::set<std::string> seen;
    for (const auto& s : specs_) {
        if (!seen.insert(s.name).second) throw Error("registry", "duplicate feature '" + s.name + "'");
        if (lookup_feature(s.name).kind != s.kind)
            throw Error("registry", "feature '" + s.name + "' has the wrong kind");
    }
}

FeatureRegistry FeatureRegistry::standard() {
    std::vector<FeatureSpec> specs;
    for (const auto& [name, f] : known_features()) specs.push_back({name, f.kind});
    return FeatureRegistry(std::move(specs));
}

std::vector<std::string> FeatureRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& s : specs_) out.push_back(s.name);
    return out;
}

FeatureRegistry FeatureRegistry::only(FeatureKind kind) const {
    std::vector<FeatureSpec> out;
    for (const auto& s : specs_)
        if (s.kind == kind) out.push_back(s);
    return FeatureRegistry(std::move(out));
}

std::string FeatureRegistry::to_json() const {
    auto j = nlohmann::json::array();
    for (const auto& s : specs_) j.push_back({{"name", s.name}, {"kind", kind_name(s.kind)}});
    return j.dump();
}

FeatureRegistry FeatureRegistry::from_json(const std::string& text) {
    try {
        std::vector<FeatureSpec> specs;
        for (const auto& item : nlohmann::json::parse(text))
            specs.push_back({item.at("name").get<std::string>(), parse_kind(item.at("kind").get<std::string>())});
        return FeatureRegistry(std::move(specs));
    } catch (const nlohmann::json::exception& e) {
        throw Error("registry", std::string("malformed registry json: ") + e.what());
    }
}

RouteFeatureTable::RouteFeatureTable(WeightedDigraph graph, const KernelOptions& opt) : graph_(std::move(graph)) {
    if (!graph_.empty()) features_ = compute_all_edge_features(graph_, opt);
}

std::optional<EdgeGraphFeatures> RouteFeatureTable::lookup(const std::string& origin,
                                                           const std::string& destination) const {
    if (!graph_.has_node(origin) || !graph_.has_node(destination)) return std::nullopt;
    const auto e = graph_.edge_index(graph_.index_of(origin), graph_.index_of(destination));
    if (e == WeightedDigraph::npos) return std::nullopt;
    return features_[e];
}

WeightedDigraph build_flight_graph(std::span<const FlightRecord> records) {
    std::map<std::string, AirportNode> airports;
    auto note = [&](const std::string& code, double lat, double lon, double alt) {
        AirportNode n{code, lat, lon, alt};
        auto [it, inserted] = airports.emplace(code, n);
        if (!inserted && !(it->second == n))
            throw Error("graph", "airport '" + code + "' appears with conflicting coordinates");
    };
    FlightMultigraph mg;
    for (const auto& r : records) {
        note(r.origin, r.lat_src, r.lon_src, r.alt_src_m);
        note(r.destination, r.lat_dst, r.lon_dst, r.alt_dst_m);
    }
    for (auto& [code, n] : airports) mg.add_node(n);
    for (std::size_t i = 0; i < records.size(); ++i)
        mg.add_edge({static_cast<std::int64_t>(i), records[i].origin, records[i].destination, i});
    return collapse_multigraph(mg);
}

AugmentedRecord augment(const RouteFeatureTable& table, const FlightRecord& record) {
    AugmentedRecord a;
    a.record = record;
    if (auto f = table.lookup(record.origin, record.destination)) {
        a.graph = *f;
    } else {
        a.unseen_route = true;
    }
    return a;
}

std::vector<AugmentedRecord> attach_graph_features(const RouteFeatureTable& table,
                                                   std::span<const FlightRecord> records) {
    std::vector<AugmentedRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(augment(table, r));
    return out;
}

std::vector<AugmentedRecord> attach_graph_features(std::span<const FlightRecord> train_records,
                                                   std::span<const FlightRecord> all_records) {
    const RouteFeatureTable table(build_flight_graph(train_records));
    return attach_graph_features(table, all_records);
}

std::vector<double> encode_row(const AugmentedRecord& r, const FeatureRegistry& registry) {
    std::vector<double> row;
    row.reserve(registry.size());
    for (const auto& spec : registry.specs()) {
        const double v = lookup_feature(spec.name).extract(r);
        if (!std::isfinite(v)) throw Error("feature", "non-finite value for feature '" + spec.name + "'");
        row.push_back(v);
    }
    return row;
}

FeatureMatrix build_matrix(std::span<const AugmentedRecord> records, const FeatureRegistry& registry) {
    FeatureMatrix m;
    m.names = registry.names();
    m.rows = records.size();
    m.values.reserve(records.size() * registry.size());
    std::vector<const Extractor*> extractors;
    for (const auto& spec : registry.specs()) extractors.push_back(&lookup_feature(spec.name).extract);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (std::size_t j = 0; j < extractors.size(); ++j) {
            const double v = (*extractors[j])(records[i]);
            if (!std::isfinite(v))
                throw Error("feature", "row " + std::to_string(i) + ": non-finite value for feature '" + m.names[j] + "'");
            m.values.push_back(v);
        }
        m.labels_cls.push_back(records[i].record.holding ? 1 : 0);
        m.labels_reg.push_back(records[i].record.holding_seconds);
    }
    return m;
}

std::string matrix_to_csv(const FeatureMatrix& m) {
    std::string out;
    for (const auto& n : m.names) out += n + ',';
    out += "label_holding,label_holding_seconds\n";
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out += format_double(m.at(i, j));
            out += ',';
        }
        out += std::to_string(m.labels_cls[i]) + ',' + format_double(m.labels_reg[i]) + '\n';
    }
    return out;
}

FeatureMatrix matrix_from_csv(std::string_view csv) {
    FeatureMatrix m;
    std::size_t pos = 0;
    bool header = true;
    std::size_t line_no = 0;
    while (pos < csv.size()) {
        auto nl = csv.find('\n', pos);
        if (nl == std::string_view::npos) nl = csv.size();
        const auto line = csv.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (header) {
            if (fields.size() < 2 || fields[fields.size() - 2] != "label_holding" ||
                fields.back() != "label_holding_seconds")
                throw Error("schema", "matrix csv must end with label_holding,label_holding_seconds");
            for (std::size_t j = 0; j + 2 < fields.size(); ++j) m.names.emplace_back(fields[j]);
            header = false;
            continue;
        }
        ++line_no;
        if (fields.size() != m.names.size() + 2)
            throw Error("row", "matrix row " + std::to_string(line_no) + ": wrong field count");
        for (std::size_t j = 0; j < fields.size(); ++j) {
            double v = 0;
            if (!parse_double(fields[j], v))
                throw Error("row", "matrix row " + std::to_string(line_no) + ": bad number in column " + std::to_string(j + 1));
            if (j < m.names.size()) m.values.push_back(v);
            else if (j == m.names.size()) m.labels_cls.push_back(v != 0.0 ? 1 : 0);
            else m.labels_reg.push_back(v);
        }
        ++m.rows;
    }
    if (header) throw Error("schema", "matrix csv is empty");
    return m;
}

}  // namespace airhold
