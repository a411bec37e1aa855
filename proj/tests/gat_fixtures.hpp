#pragma once

#include "airhold/gat.hpp"
#include "airhold/util.hpp"

namespace airhold::oracle {

// Random multigraph batch with both classes; labels lean on edge feature 0.
inline GraphBatch random_batch(std::uint64_t seed, int nodes, int edges, int edge_dim) {
    Rng rng(seed);
    GraphBatch b;
    for (int i = 0; i < nodes; ++i) b.codes.push_back("N" + std::to_string(100 + i));
    b.node_features.resize(nodes, 5);
    for (int i = 0; i < nodes; ++i)
        for (int j = 0; j < 5; ++j) b.node_features(i, j) = rng.normal();
    b.edge_features.resize(edges, edge_dim);
    for (int k = 0; k < edges; ++k) {
        const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(nodes)));
        int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(nodes - 1)));
        if (d >= s) ++d;
        b.src.push_back(s);
        b.dst.push_back(d);
        for (int j = 0; j < edge_dim; ++j) b.edge_features(k, j) = rng.normal();
        b.labels.push_back(b.edge_features(k, 0) + 0.5 * rng.normal() > 0.8 ? 1 : 0);
    }
    b.labels[0] = 1;
    b.labels[1] = 0;
    return b;
}

inline GatConfig small_config(int layers, int edge_dim) {
    GatConfig c;
    c.layers = layers;
    c.heads = 3;
    c.hidden_dim = 4;
    c.mlp_hidden = 6;
    c.edge_dim = edge_dim;
    c.seed = 11;
    return c;
}

}  // namespace airhold::oracle
