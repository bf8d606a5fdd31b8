// Dataset model: traffic windows, K-NN static graphs, missing-pattern
// injection, per-node normalization, and the synthetic network generator.
#pragma once

#include "stam/rng.hpp"
#include "stam/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stam {

struct TrafficWindow {
    Tensor values;                     // T x N x 1, original units; hidden cells hold 0
    Tensor mask;                       // T x N of {0,1}, 1 = observed
    std::vector<int64_t> timestamps;   // epoch seconds, one per timestep
    int interval_minutes = 5;
    std::vector<std::string> node_names;

    Index t_len() const { return values.dim(0); }
    Index n_nodes() const { return values.dim(1); }
    Tensor values_tn() const { return values.reshaped({t_len(), n_nodes()}); }
    Index observed_count() const { return Index(mask.array().sum()); }
};

struct StaticGraph {
    Index n_nodes = 0;
    Index e_per_node = 0;
    std::vector<Index> neighbors;  // n_nodes * e_per_node, row-major

    Index neighbor(Index node, Index e) const { return neighbors[size_t(node * e_per_node + e)]; }
};

struct MissingSpec {
    enum class Kind { point, block };
    Kind kind = Kind::point;
    double rate = 0.25;          // point
    double failure_prob = 0.01;  // block: per (node, timestep) outage start probability
    Index min_len = 12;          // block: outage duration ~ U{min_len..max_len}
    Index max_len = 48;
    double point_rate = 0.05;    // block: residual random hiding
    uint64_t seed = 0;

    void validate() const;
};

struct NormStats {
    std::vector<double> mean;  // per node, over observed entries
    std::vector<double> stddev;  // floored at 1e-6
};

struct MaskedWindow {
    TrafficWindow window;
    Tensor eval_mask;  // T x N; 1 = cell hidden by injection (was observed before)
};

// ---- ingestion / persistence ----
TrafficWindow load_dataset(const std::string& values_csv, const std::string& mask_csv,
                           const std::string& meta_json);  // mask_csv may be ""
void save_dataset(const std::string& dir, const TrafficWindow& w);  // values/mask/meta

// ---- graph ----
// Directed K-NN: each node's e_per_node smallest-distance neighbors, self
// excluded, ties broken by lower node index.
StaticGraph build_knn_graph(const Tensor& dist, Index e_per_node);

// ---- missing-pattern injection ----
MaskedWindow apply_point_missing(const TrafficWindow& w, double rate, uint64_t seed);
MaskedWindow apply_block_missing(const TrafficWindow& w, const MissingSpec& spec, uint64_t seed);
MaskedWindow apply_missing(const TrafficWindow& w, const MissingSpec& spec);
// Marks [start, start+len) of one node missing; clipped to the window.
void apply_outage(TrafficWindow& w, Index node, Index start, Index len);

// ---- normalization ----
// Per-node z-score over observed entries; hidden cells set to 0.
std::pair<TrafficWindow, NormStats> normalize(const TrafficWindow& w);
Tensor denormalize(const Tensor& values, const NormStats& stats);  // T x N or T x N x 1

// ---- synthetic data ----
struct SynthParams {
    double noise = 2.0;             // additive Gaussian sigma
    double diffusion_weight = 6.0;  // scale of the graph-diffused shared component
    Index e_per_node = 8;
    int interval_minutes = 5;
    int64_t start_timestamp = 1704067200;  // 2024-01-01T00:00:00 (a Monday)
};

struct SynthDataset {
    TrafficWindow window;  // fully observed
    StaticGraph graph;
    Tensor dist;  // N x N Euclidean distances of the sampled sensor layout
};

SynthDataset generate_synthetic(Index n_nodes, Index n_steps, uint64_t seed,
                                const SynthParams& params = {});

}  // namespace stam
