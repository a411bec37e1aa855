#include "airhold/graph.hpp"

#include "airhold/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace airhold {

namespace {

void validate_node(const AirportNode& n) {
    if (n.code.empty()) throw Error("graph", "airport code must not be empty");
    if (!(n.lat >= -90.0 && n.lat <= 90.0))
        throw Error("graph", "airport '" + n.code + "': lat out of range");
    if (!(n.lon >= -180.0 && n.lon <= 180.0))
        throw Error("graph", "airport '" + n.code + "': lon out of range");
    if (!(n.altitude >= -430.0) || !std::isfinite(n.altitude))
        throw Error("graph", "airport '" + n.code + "': altitude out of range");
}

}  // namespace

void FlightMultigraph::add_node(AirportNode node) {
    validate_node(node);
    if (nodes_.contains(node.code)) throw Error("graph", "duplicate airport '" + node.code + "'");
    auto code = node.code;
    nodes_.emplace(std::move(code), std::move(node));
}

void FlightMultigraph::add_edge(FlightEdge edge) {
    if (edge.src == edge.dst) throw Error("graph", "self-loop flight at '" + edge.src + "'");
    if (!nodes_.contains(edge.src)) throw UnknownNodeError(edge.src);
    if (!nodes_.contains(edge.dst)) throw UnknownNodeError(edge.dst);
    if (!edge_ids_.insert(edge.id).second)
        throw Error("graph", "duplicate flight id " + std::to_string(edge.id));
    edges_.push_back(std::move(edge));
}

WeightedDigraph::WeightedDigraph(std::vector<AirportNode> nodes,
                                 const std::map<EdgeKey, std::int64_t>& weights)
    : nodes_(std::move(nodes)) {
    std::sort(nodes_.begin(), nodes_.end(),
              [](const AirportNode& a, const AirportNode& b) { return a.code < b.code; });
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        validate_node(nodes_[i]);
        if (!index_.emplace(nodes_[i].code, i).second)
            throw Error("graph", "duplicate airport '" + nodes_[i].code + "'");
    }
    out_.resize(nodes_.size());
    in_.resize(nodes_.size());
    // std::map iterates keys lexicographically, which is also index order.
    for (const auto& [k, w] : weights) {
        if (k.first == k.second) throw Error("graph", "self-loop edge at '" + k.first + "'");
        if (w < 1) throw Error("graph", "edge " + k.first + "->" + k.second + " has weight < 1");
        const std::size_t s = index_of(k.first);
        const std::size_t d = index_of(k.second);
        const std::size_t e = edges_.size();
        edges_.push_back({s, d, w});
        out_[s].push_back({d, w, e});
        in_[d].push_back({s, w, e});
    }
    for (auto& arcs : in_)
        std::sort(arcs.begin(), arcs.end(), [](const Arc& a, const Arc& b) { return a.to < b.to; });
}

bool WeightedDigraph::has_node(const std::string& code) const { return index_.contains(code); }

std::size_t WeightedDigraph::index_of(const std::string& code) const {
    auto it = index_.find(code);
    if (it == index_.end()) throw UnknownNodeError(code);
    return it->second;
}

std::map<EdgeKey, std::int64_t> WeightedDigraph::weights() const {
    std::map<EdgeKey, std::int64_t> out;
    for (const auto& e : edges_) out.emplace(key(e), e.weight);
    return out;
}

std::size_t WeightedDigraph::edge_index(std::size_t src, std::size_t dst) const {
    const auto& arcs = out_[src];
    auto it = std::lower_bound(arcs.begin(), arcs.end(), dst,
                               [](const Arc& a, std::size_t v) { return a.to < v; });
    if (it == arcs.end() || it->to != dst) return npos;
    return it->edge;
}

std::int64_t WeightedDigraph::weight(const std::string& src, const std::string& dst) const {
    auto s = index_.find(src);
    auto d = index_.find(dst);
    if (s == index_.end() || d == index_.end()) return 0;
    const std::size_t e = edge_index(s->second, d->second);
    return e == npos ? 0 : edges_[e].weight;
}

std::int64_t WeightedDigraph::total_weight() const {
    return std::accumulate(edges_.begin(), edges_.end(), std::int64_t{0},
                           [](std::int64_t acc, const IndexedEdge& e) { return acc + e.weight; });
}

WeightedDigraph collapse_multigraph(const FlightMultigraph& mg) {
    std::vector<AirportNode> nodes;
    nodes.reserve(mg.nodes().size());
    for (const auto& [code, n] : mg.nodes()) nodes.push_back(n);
    std::map<EdgeKey, std::int64_t> weights;
    for (const auto& e : mg.edges()) ++weights[{e.src, e.dst}];
    return WeightedDigraph(std::move(nodes), weights);
}

Strengths strengths(const WeightedDigraph& g, std::size_t v) {
    Strengths s;
    for (const Arc& a : g.in_arcs(v)) s.in += a.weight;
    for (const Arc& a : g.out_arcs(v)) s.out += a.weight;
    return s;
}

Strengths strengths(const WeightedDigraph& g, const std::string& code) {
    return strengths(g, g.index_of(code));
}

namespace {

std::vector<bool> reach(const WeightedDigraph& g, bool forward) {
    std::vector<bool> seen(g.node_count(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (const Arc& a : forward ? g.out_arcs(v) : g.in_arcs(v)) {
            if (!seen[a.to]) {
                seen[a.to] = true;
                stack.push_back(a.to);
            }
        }
    }
    return seen;
}

}  // namespace

bool is_strongly_connected(const WeightedDigraph& g) {
    if (g.empty()) throw Error("graph", "strong connectivity is undefined for an empty graph");
    auto all = [](const std::vector<bool>& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
    return all(reach(g, true)) && all(reach(g, false));
}

std::map<EdgeKey, double> distance_transform(const WeightedDigraph& g) {
    std::map<EdgeKey, double> out;
    for (const auto& e : g.edges()) out.emplace(g.key(e), 1.0 / static_cast<double>(e.weight));
    return out;
}

WeightedDigraph reversed(const WeightedDigraph& g) {
    std::map<EdgeKey, std::int64_t> w;
    for (const auto& e : g.edges()) w.emplace(EdgeKey{g.node(e.dst).code, g.node(e.src).code}, e.weight);
    return WeightedDigraph(g.nodes(), w);
}

std::string graph_to_json(const WeightedDigraph& g) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes())
        j["nodes"].push_back({{"code", n.code}, {"lat", n.lat}, {"lon", n.lon}, {"alt", n.altitude}});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges())
        j["edges"].push_back({{"src", g.node(e.src).code}, {"dst", g.node(e.dst).code}, {"weight", e.weight}});
    return j.dump();
}

WeightedDigraph graph_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<AirportNode> nodes;
        for (const auto& n : j.at("nodes"))
            nodes.push_back({n.at("code").get<std::string>(), n.at("lat").get<double>(),
                             n.at("lon").get<double>(), n.at("alt").get<double>()});
        std::map<EdgeKey, std::int64_t> weights;
        for (const auto& e : j.at("edges")) {
            EdgeKey k{e.at("src").get<std::string>(), e.at("dst").get<std::string>()};
            if (!weights.emplace(k, e.at("weight").get<std::int64_t>()).second)
                throw Error("graph", "duplicate edge " + k.first + "->" + k.second);
        }
        return WeightedDigraph(std::move(nodes), weights);
    } catch (const nlohmann::json::exception& ex) {
        throw Error("graph", std::string("malformed graph json: ") + ex.what());
    }
}

}  // namespace airhold
