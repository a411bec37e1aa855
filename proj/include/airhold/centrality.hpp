#pragma once

#include "airhold/graph.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace airhold {

// The per-route network metrics attached to every flight on that route.
struct EdgeGraphFeatures {
    double betweenness = 0.0;
    double flow_betweenness = 0.0;
    double edge_connectivity = 0.0;
    std::int64_t degree_diff_src = 0;
    std::int64_t degree_diff_dst = 0;
    double google_entry = 0.0;

    bool operator==(const EdgeGraphFeatures&) const = default;
};

// Damped, row-stochastic transition matrix over the nodes in index order.
class GoogleMatrix {
public:
    GoogleMatrix(std::size_t n, double damping, std::vector<double> dense)
        : n_(n), damping_(damping), dense_(std::move(dense)) {}

    std::size_t size() const { return n_; }
    double damping() const { return damping_; }
    double operator()(std::size_t from, std::size_t to) const { return dense_[from * n_ + to]; }
    std::span<const double> row(std::size_t from) const { return {dense_.data() + from * n_, n_}; }

private:
    std::size_t n_;
    double damping_;
    std::vector<double> dense_;
};

struct MaxFlowResult {
    double value = 0.0;
    // Flow per edge, aligned with WeightedDigraph::edges().
    std::vector<double> edge_flows;
};

// Options shared by the all-pairs kernels. threads == 0 means hardware
// concurrency. Results do not depend on the thread count.
struct KernelOptions {
    unsigned threads = 0;
};

// Unnormalized edge betweenness over ordered pairs with edge length 1/weight.
// Result aligned with g.edges().
std::vector<double> edge_betweenness(const WeightedDigraph& g, const KernelOptions& opt = {});
std::map<EdgeKey, double> edge_betweenness_map(const WeightedDigraph& g);

// Dinic's algorithm on integer capacities. Adjacency is walked in node index
// order, so the returned flow decomposition is canonical for a given graph.
MaxFlowResult max_flow(const WeightedDigraph& g, std::size_t s, std::size_t t);
MaxFlowResult max_flow(const WeightedDigraph& g, const std::string& s, const std::string& t);

// Sum over ordered pairs of the flow routed through each edge, divided by
// max(1, total max-flow value over those pairs).
std::vector<double> flow_betweenness(const WeightedDigraph& g, const KernelOptions& opt = {});

// Weighted local min cut from u to v for an existing edge u->v.
double edge_connectivity(const WeightedDigraph& g, const std::string& u, const std::string& v);

// in_strength - out_strength.
std::int64_t degree_difference(const WeightedDigraph& g, const std::string& v);
std::int64_t degree_difference(const WeightedDigraph& g, std::size_t v);

GoogleMatrix google_matrix(const WeightedDigraph& g, double damping = 0.85);

struct PageRankOptions {
    double damping = 0.85;
    double tol = 1e-10;
    int max_iter = 1000;
};

// Stationary vector of the weighted Google matrix by power iteration from the
// uniform vector; indexed like g.nodes(). Throws ConvergenceError.
std::vector<double> pagerank(const WeightedDigraph& g, const PageRankOptions& opt = {});
std::map<std::string, double> pagerank_map(const WeightedDigraph& g, const PageRankOptions& opt = {});

// L1 norm of pG - p.
double pagerank_residual(const GoogleMatrix& G, std::span<const double> p);

// All five metrics for every edge, aligned with g.edges().
std::vector<EdgeGraphFeatures> compute_all_edge_features(const WeightedDigraph& g,
                                                         const KernelOptions& opt = {});
std::map<EdgeKey, EdgeGraphFeatures> compute_all_edge_features_map(const WeightedDigraph& g);

// CSV: src,dst,weight,betweenness,flow_betweenness,edge_connectivity,dd_src,dd_dst,google_entry
std::string features_to_csv(const WeightedDigraph& g, const std::vector<EdgeGraphFeatures>& f);

}  // namespace airhold
