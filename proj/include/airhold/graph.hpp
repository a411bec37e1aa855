#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace airhold {

struct AirportNode {
    std::string code;
    double lat = 0.0;       // degrees, [-90, 90]
    double lon = 0.0;       // degrees, [-180, 180]
    double altitude = 0.0;  // meters, >= -430

    bool operator==(const AirportNode&) const = default;
};

// One flight. record_ref indexes the record store the graph was built from.
struct FlightEdge {
    std::int64_t id = 0;
    std::string src;
    std::string dst;
    std::size_t record_ref = 0;
};

// Ordered (src, dst) pair of airport codes.
using EdgeKey = std::pair<std::string, std::string>;

class FlightMultigraph {
public:
    // Throws Error("graph") on duplicate codes or out-of-range coordinates.
    void add_node(AirportNode node);
    // Throws Error("graph") on self-loops, unknown endpoints, duplicate ids.
    void add_edge(FlightEdge edge);

    bool has_node(const std::string& code) const { return nodes_.contains(code); }
    const std::map<std::string, AirportNode>& nodes() const { return nodes_; }
    const std::vector<FlightEdge>& edges() const { return edges_; }

private:
    std::map<std::string, AirportNode> nodes_;
    std::vector<FlightEdge> edges_;
    std::unordered_set<std::int64_t> edge_ids_;
};

// An arc of the indexed adjacency. `edge` is the position of the arc in
// WeightedDigraph::edges().
struct Arc {
    std::size_t to;
    std::int64_t weight;
    std::size_t edge;
};

struct IndexedEdge {
    std::size_t src;
    std::size_t dst;
    std::int64_t weight;
};

// Flight counts aggregated per ordered airport pair. Immutable after
// construction. Nodes are indexed in lexicographic code order and every
// adjacency list is sorted by neighbour index, so all kernels that walk the
// graph see one canonical ordering.
class WeightedDigraph {
public:
    WeightedDigraph() = default;
    // Throws Error("graph") if a weight is < 1, a key is a self-loop, or a key
    // references a node that is not listed.
    WeightedDigraph(std::vector<AirportNode> nodes, const std::map<EdgeKey, std::int64_t>& weights);

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    bool empty() const { return nodes_.empty(); }

    bool has_node(const std::string& code) const;
    // Throws UnknownNodeError.
    std::size_t index_of(const std::string& code) const;
    const AirportNode& node(std::size_t index) const { return nodes_[index]; }
    const AirportNode& node(const std::string& code) const { return nodes_[index_of(code)]; }
    const std::vector<AirportNode>& nodes() const { return nodes_; }

    // Edges sorted by (src code, dst code).
    const std::vector<IndexedEdge>& edges() const { return edges_; }
    EdgeKey key(const IndexedEdge& e) const { return {nodes_[e.src].code, nodes_[e.dst].code}; }
    std::map<EdgeKey, std::int64_t> weights() const;

    // 0 when there is no such edge.
    std::int64_t weight(const std::string& src, const std::string& dst) const;
    bool has_edge(const std::string& src, const std::string& dst) const { return weight(src, dst) > 0; }
    // Position in edges(), or npos.
    std::size_t edge_index(std::size_t src, std::size_t dst) const;

    std::span<const Arc> out_arcs(std::size_t v) const { return out_[v]; }
    std::span<const Arc> in_arcs(std::size_t v) const { return in_[v]; }

    std::int64_t total_weight() const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<AirportNode> nodes_;
    std::map<std::string, std::size_t> index_;
    std::vector<IndexedEdge> edges_;
    std::vector<std::vector<Arc>> out_;
    std::vector<std::vector<Arc>> in_;  // Arc::to holds the source here
};

struct Strengths {
    std::int64_t in = 0;
    std::int64_t out = 0;
    bool operator==(const Strengths&) const = default;
};

WeightedDigraph collapse_multigraph(const FlightMultigraph& mg);

// Throws UnknownNodeError.
Strengths strengths(const WeightedDigraph& g, const std::string& code);
Strengths strengths(const WeightedDigraph& g, std::size_t v);

// Forward and reverse reachability from the first node. Throws Error("graph")
// on an empty graph.
bool is_strongly_connected(const WeightedDigraph& g);

// Shortest-path length of each edge: 1 / weight.
std::map<EdgeKey, double> distance_transform(const WeightedDigraph& g);

// Same nodes, every edge u->v replaced by v->u with the same weight.
WeightedDigraph reversed(const WeightedDigraph& g);

// {nodes:[{code,lat,lon,alt}], edges:[{src,dst,weight}]}, sorted, compact.
std::string graph_to_json(const WeightedDigraph& g);
WeightedDigraph graph_from_json(const std::string& text);

}  // namespace airhold
