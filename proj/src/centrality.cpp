#include "airhold/centrality.hpp"

#include "airhold/error.hpp"
#include "airhold/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace airhold {

namespace {

// Shortest-path lengths are sums of reciprocal flight counts; two sums that
// are equal over the rationals can differ in the last few ulps.
bool same_length(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); }

// Single-source Brandes pass: adds this source's dependency on every edge
// into `score` (aligned with g.edges()).
void betweenness_from_source(const WeightedDigraph& g, std::size_t s, std::vector<double>& score) {
    const std::size_t n = g.node_count();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf), sigma(n, 0.0), delta(n, 0.0);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> preds(n);  // (node, edge)
    std::vector<bool> settled(n, false);
    std::vector<std::size_t> order;
    order.reserve(n);

    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[s] = 0.0;
    sigma[s] = 1.0;
    pq.push({0.0, s});
    while (!pq.empty()) {
        const auto [d, v] = pq.top();
        pq.pop();
        if (settled[v]) continue;
        settled[v] = true;
        order.push_back(v);
        for (const Arc& a : g.out_arcs(v)) {
            const double nd = dist[v] + 1.0 / static_cast<double>(a.weight);
            const std::size_t w = a.to;
            if (settled[w]) continue;
            if (dist[w] == inf || (nd < dist[w] && !same_length(nd, dist[w]))) {
                dist[w] = nd;
                sigma[w] = sigma[v];
                preds[w].assign(1, {v, a.edge});
                pq.push({nd, w});
            } else if (same_length(nd, dist[w])) {
                sigma[w] += sigma[v];
                preds[w].push_back({v, a.edge});
            }
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t w = *it;
        for (const auto& [v, e] : preds[w]) {
            const double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
            score[e] += c;
            delta[v] += c;
        }
    }
}

// Per-source (or per-pair) partial results are computed in parallel in fixed
// size chunks and summed in index order, so the total is independent of the
// thread count.
constexpr std::size_t kChunk = 64;

struct FlowNetwork {
    struct Edge {
        std::size_t to;
        std::int64_t cap;
        std::size_t rev;       // index of the paired arc in adj[to]
        std::size_t original;  // graph edge index, or npos for residual arcs
    };

    explicit FlowNetwork(const WeightedDigraph& g) : adj(g.node_count()), level(g.node_count()), it(g.node_count()) {
        // Insert in (tail, head) index order so every adjacency list is sorted
        // by neighbour; the forward arc precedes the residual arc on ties.
        struct Pending {
            std::size_t from, to;
            bool forward;
            std::size_t edge;
        };
        std::vector<Pending> pending;
        for (std::size_t e = 0; e < g.edges().size(); ++e) {
            const auto& ed = g.edges()[e];
            pending.push_back({ed.src, ed.dst, true, e});
            pending.push_back({ed.dst, ed.src, false, e});
        }
        std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
            if (a.from != b.from) return a.from < b.from;
            if (a.to != b.to) return a.to < b.to;
            return a.forward && !b.forward;
        });
        std::vector<std::size_t> fwd_pos(g.edges().size()), rev_pos(g.edges().size());
        for (const auto& p : pending) {
            const std::size_t pos = adj[p.from].size();
            if (p.forward) {
                adj[p.from].push_back({p.to, g.edges()[p.edge].weight, 0, p.edge});
                fwd_pos[p.edge] = pos;
            } else {
                adj[p.from].push_back({p.to, 0, 0, WeightedDigraph::npos});
                rev_pos[p.edge] = pos;
            }
        }
        forward_arc.resize(g.edges().size());
        for (std::size_t e = 0; e < g.edges().size(); ++e) {
            const auto& ed = g.edges()[e];
            adj[ed.src][fwd_pos[e]].rev = rev_pos[e];
            adj[ed.dst][rev_pos[e]].rev = fwd_pos[e];
            forward_arc[e] = {ed.src, fwd_pos[e]};
        }
    }

    bool bfs(std::size_t s, std::size_t t) {
        std::fill(level.begin(), level.end(), -1);
        std::queue<std::size_t> q;
        level[s] = 0;
        q.push(s);
        while (!q.empty()) {
            const std::size_t v = q.front();
            q.pop();
            for (const Edge& e : adj[v]) {
                if (e.cap > 0 && level[e.to] < 0) {
                    level[e.to] = level[v] + 1;
                    q.push(e.to);
                }
            }
        }
        return level[t] >= 0;
    }

    std::int64_t dfs(std::size_t v, std::size_t t, std::int64_t pushed) {
        if (v == t) return pushed;
        for (std::size_t& i = it[v]; i < adj[v].size(); ++i) {
            Edge& e = adj[v][i];
            if (e.cap <= 0 || level[e.to] != level[v] + 1) continue;
            const std::int64_t got = dfs(e.to, t, std::min(pushed, e.cap));
            if (got > 0) {
                e.cap -= got;
                adj[e.to][e.rev].cap += got;
                return got;
            }
        }
        return 0;
    }

    std::int64_t run(std::size_t s, std::size_t t) {
        std::int64_t total = 0;
        while (bfs(s, t)) {
            std::fill(it.begin(), it.end(), 0);
            while (const std::int64_t f = dfs(s, t, std::numeric_limits<std::int64_t>::max())) total += f;
        }
        return total;
    }

    std::int64_t flow_on(const WeightedDigraph& g, std::size_t e) const {
        const auto [v, pos] = forward_arc[e];
        return g.edges()[e].weight - adj[v][pos].cap;
    }

    std::vector<std::vector<Edge>> adj;
    std::vector<int> level;
    std::vector<std::size_t> it;
    std::vector<std::pair<std::size_t, std::size_t>> forward_arc;
};

struct AllPairsFlow {
    std::vector<double> edge_flow_sum;  // aligned with g.edges()
    std::vector<double> value;          // n*n, value[s*n+t]
    double total = 0.0;
};

AllPairsFlow all_pairs_flow(const WeightedDigraph& g, const KernelOptions& opt) {
    const std::size_t n = g.node_count();
    const std::size_t m = g.edge_count();
    AllPairsFlow out;
    out.edge_flow_sum.assign(m, 0.0);
    out.value.assign(n * n, 0.0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < n; ++t)
            if (s != t) pairs.push_back({s, t});

    for (std::size_t base = 0; base < pairs.size(); base += kChunk) {
        const std::size_t count = std::min(kChunk, pairs.size() - base);
        std::vector<MaxFlowResult> partial(count);
        parallel_for(count, opt.threads, [&](std::size_t i) {
            const auto [s, t] = pairs[base + i];
            partial[i] = max_flow(g, s, t);
        });
        for (std::size_t i = 0; i < count; ++i) {
            const auto [s, t] = pairs[base + i];
            out.value[s * n + t] = partial[i].value;
            out.total += partial[i].value;
            for (std::size_t e = 0; e < m; ++e) out.edge_flow_sum[e] += partial[i].edge_flows[e];
        }
    }
    return out;
}

}  // namespace

std::vector<double> edge_betweenness(const WeightedDigraph& g, const KernelOptions& opt) {
    const std::size_t n = g.node_count();
    const std::size_t m = g.edge_count();
    std::vector<double> total(m, 0.0);
    for (std::size_t base = 0; base < n; base += kChunk) {
        const std::size_t count = std::min(kChunk, n - base);
        std::vector<std::vector<double>> partial(count, std::vector<double>(m, 0.0));
        parallel_for(count, opt.threads, [&](std::size_t i) { betweenness_from_source(g, base + i, partial[i]); });
        for (const auto& p : partial)
            for (std::size_t e = 0; e < m; ++e) total[e] += p[e];
    }
    return total;
}

std::map<EdgeKey, double> edge_betweenness_map(const WeightedDigraph& g) {
    const auto scores = edge_betweenness(g);
    std::map<EdgeKey, double> out;
    for (std::size_t e = 0; e < scores.size(); ++e) out.emplace(g.key(g.edges()[e]), scores[e]);
    return out;
}

MaxFlowResult max_flow(const WeightedDigraph& g, std::size_t s, std::size_t t) {
    if (s >= g.node_count() || t >= g.node_count()) throw Error("graph", "max_flow: node index out of range");
    if (s == t) throw Error("graph", "max_flow: source and sink must differ");
    FlowNetwork net(g);
    MaxFlowResult r;
    r.value = static_cast<double>(net.run(s, t));
    r.edge_flows.resize(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) r.edge_flows[e] = static_cast<double>(net.flow_on(g, e));
    return r;
}

MaxFlowResult max_flow(const WeightedDigraph& g, const std::string& s, const std::string& t) {
    return max_flow(g, g.index_of(s), g.index_of(t));
}

std::vector<double> flow_betweenness(const WeightedDigraph& g, const KernelOptions& opt) {
    auto flows = all_pairs_flow(g, opt);
    const double denom = std::max(1.0, flows.total);
    for (double& f : flows.edge_flow_sum) f /= denom;
    return flows.edge_flow_sum;
}

double edge_connectivity(const WeightedDigraph& g, const std::string& u, const std::string& v) {
    const std::size_t ui = g.index_of(u);
    const std::size_t vi = g.index_of(v);
    if (g.edge_index(ui, vi) == WeightedDigraph::npos)
        throw Error("graph", "edge_connectivity: no edge " + u + "->" + v);
    return max_flow(g, ui, vi).value;
}

std::int64_t degree_difference(const WeightedDigraph& g, std::size_t v) {
    const auto s = strengths(g, v);
    return s.in - s.out;
}

std::int64_t degree_difference(const WeightedDigraph& g, const std::string& v) {
    return degree_difference(g, g.index_of(v));
}

GoogleMatrix google_matrix(const WeightedDigraph& g, double damping) {
    if (g.empty()) throw Error("graph", "google_matrix: empty graph");
    if (!(damping > 0.0 && damping < 1.0)) throw Error("graph", "google_matrix: damping must be in (0,1)");
    const std::size_t n = g.node_count();
    const double nd = static_cast<double>(n);
    std::vector<double> dense(n * n);
    for (std::size_t u = 0; u < n; ++u) {
        const std::int64_t out = strengths(g, u).out;
        double* row = dense.data() + u * n;
        if (out == 0) {
            std::fill(row, row + n, 1.0 / nd);
            continue;
        }
        std::fill(row, row + n, (1.0 - damping) / nd);
        for (const Arc& a : g.out_arcs(u))
            row[a.to] += damping * static_cast<double>(a.weight) / static_cast<double>(out);
    }
    return GoogleMatrix(n, damping, std::move(dense));
}

double pagerank_residual(const GoogleMatrix& G, std::span<const double> p) {
    const std::size_t n = G.size();
    std::vector<double> q(n, 0.0);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) q[v] += p[u] * G(u, v);
    double r = 0.0;
    for (std::size_t v = 0; v < n; ++v) r += std::abs(q[v] - p[v]);
    return r;
}

std::vector<double> pagerank(const WeightedDigraph& g, const PageRankOptions& opt) {
    if (g.empty()) throw Error("graph", "pagerank: empty graph");
    const auto G = google_matrix(g, opt.damping);
    const std::size_t n = g.node_count();
    std::vector<double> p(n, 1.0 / static_cast<double>(n));
    std::vector<double> q(n);
    double residual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter <= opt.max_iter; ++iter) {
        std::fill(q.begin(), q.end(), 0.0);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v) q[v] += p[u] * G(u, v);
        residual = 0.0;
        for (std::size_t v = 0; v < n; ++v) residual += std::abs(q[v] - p[v]);
        if (residual <= opt.tol) return p;
        double sum = 0.0;
        for (double x : q) sum += x;
        for (std::size_t v = 0; v < n; ++v) p[v] = q[v] / sum;
    }
    std::ostringstream msg;
    msg << "pagerank did not converge in " << opt.max_iter << " iterations (residual " << residual << ")";
    throw ConvergenceError(msg.str(), residual);
}

std::map<std::string, double> pagerank_map(const WeightedDigraph& g, const PageRankOptions& opt) {
    const auto p = pagerank(g, opt);
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < p.size(); ++i) out.emplace(g.node(i).code, p[i]);
    return out;
}

std::vector<EdgeGraphFeatures> compute_all_edge_features(const WeightedDigraph& g, const KernelOptions& opt) {
    if (g.empty()) throw Error("graph", "edge features: empty graph");
    const std::size_t n = g.node_count();
    const auto betweenness = edge_betweenness(g, opt);
    const auto flows = all_pairs_flow(g, opt);
    const double flow_denom = std::max(1.0, flows.total);
    const auto G = google_matrix(g);
    std::vector<std::int64_t> dd(n);
    for (std::size_t v = 0; v < n; ++v) dd[v] = degree_difference(g, v);

    std::vector<EdgeGraphFeatures> out(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const auto& ed = g.edges()[e];
        auto& f = out[e];
        f.betweenness = betweenness[e];
        f.flow_betweenness = flows.edge_flow_sum[e] / flow_denom;
        f.edge_connectivity = flows.value[ed.src * n + ed.dst];
        f.degree_diff_src = dd[ed.src];
        f.degree_diff_dst = dd[ed.dst];
        f.google_entry = G(ed.src, ed.dst);
    }
    return out;
}

std::map<EdgeKey, EdgeGraphFeatures> compute_all_edge_features_map(const WeightedDigraph& g) {
    const auto f = compute_all_edge_features(g);
    std::map<EdgeKey, EdgeGraphFeatures> out;
    for (std::size_t e = 0; e < f.size(); ++e) out.emplace(g.key(g.edges()[e]), f[e]);
    return out;
}

std::string features_to_csv(const WeightedDigraph& g, const std::vector<EdgeGraphFeatures>& f) {
    if (f.size() != g.edge_count()) throw Error("graph", "feature table does not match graph edges");
    std::string out = "src,dst,weight,betweenness,flow_betweenness,edge_connectivity,dd_src,dd_dst,google_entry\n";
    for (std::size_t e = 0; e < f.size(); ++e) {
        const auto& ed = g.edges()[e];
        out += g.node(ed.src).code + ',' + g.node(ed.dst).code + ',' + std::to_string(ed.weight) + ',' +
               format_double(f[e].betweenness) + ',' + format_double(f[e].flow_betweenness) + ',' +
               format_double(f[e].edge_connectivity) + ',' + std::to_string(f[e].degree_diff_src) + ',' +
               std::to_string(f[e].degree_diff_dst) + ',' + format_double(f[e].google_entry) + '\n';
    }
    return out;
}

}  // namespace airhold
