// Spatial expert: local attention on the static K-NN topology feeds a
// significance scorer; a hybrid of top-scored and probability-sampled nodes
// forms a low-rank projection of the network state; re-attention against the
// sampled queries and projection messages reconstructs full-width features.
// The same sampled tensors synthesize a per-timestep row-stochastic dynamic
// graph.
#pragma once

#include "stam/attention.hpp"
#include "stam/data.hpp"
#include "stam/rng.hpp"

#include <map>
#include <optional>

namespace stam {

struct SampleSet {
    std::vector<Index> top_nodes;     // S highest significance scores
    std::vector<Index> random_nodes;  // S drawn from the remainder
    std::vector<Index> all;           // concatenation, 2S distinct indices
};

// S = ceil(log2 N) clamped so 2S <= N. Top ties break toward the lower index;
// the remainder is drawn without replacement with probability proportional to
// softmax of the remaining scores.
Index sample_count(Index n_nodes);
SampleSet sample_nodes(const Tensor& scores, Rng& rng);

struct SpatialParams {
    int fuse_w = -1, fuse_b = -1;  // 2*d_in -> d_in input fusion
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1;  // canonical projections
    int w_sc = -1;                 // E x 1 significance scorer
    int re_wq = -1, re_bq = -1, re_wk = -1, re_bk = -1, re_wv = -1, re_bv = -1;
    int re_wo = -1, re_bo = -1;
    MlpParams ffn;
    int ln1_g = -1, ln1_b = -1, ln2_g = -1, ln2_b = -1;
    int e_ref = -1;     // N x d_in refraction table
    int dg_gamma = -1;  // learnable dynamic-graph fusion weight
    Index d_in = 0;
    int heads = 1;
    Index e_per_node = 0;
};

SpatialParams add_spatial_params(ParamStore& store, const std::string& prefix, Index d_in,
                                 int heads, Index ffn_hidden, Index n_nodes, Index e_per_node);

struct LocalAttention {
    Var e_g;      // N x E attention over each node's static neighbors
    Var q, k, v;  // canonical N x d_in projections
};

// x: N x d_in (already normalized by the caller's pre-norm).
LocalAttention local_graph_attention(Tape& t, Var x, const StaticGraph& graph,
                                     const SpatialParams& p, ForwardTrace* trace = nullptr);

// e_w = e_g . w_sc, returned as a length-N vector.
Var significance_scores(Tape& t, Var e_g, const SpatialParams& p);

struct ProjectionPack {
    Var p_s;  // 2S x d_in sampled queries
    Var k_s;  // 2S x d_in sampled keys
    Var m;    // 2S x d_in projection message
    Var q, k, v;
    SampleSet samples;
};

ProjectionPack project_message(Tape& t, const LocalAttention& local, const SampleSet& samples,
                               ForwardTrace* trace = nullptr);

// Attention output of the re-attention stage (no residual/ffn): queries from
// h, keys from a fresh projection of p_s, values from a fresh projection of m.
Var re_attention_message(Tape& t, Var h, const ProjectionPack& pack, const SpatialParams& p,
                         ForwardTrace* trace = nullptr);

// Standalone re-attention block: pre-norm attention with residual, then
// feed-forward with residual.
Var re_attention(Tape& t, Var x, const ProjectionPack& pack, const SpatialParams& p,
                 ForwardTrace* trace = nullptr);

// Row-stochastic N x N dynamic adjacency from the sampled attention:
// softmax-rows(relu(softmax(q k_s^T / sqrt(d)) . toph(m e_ref^T))).
Var dynamic_graph(Tape& t, const ProjectionPack& pack, const SpatialParams& p,
                  ForwardTrace* trace = nullptr);

// Frozen sampling for gradient checks and replayed evaluations.
struct SampleCache {
    std::map<std::pair<int, Index>, SampleSet> entries;
};

struct SpatialRunCtx {
    Rng* rng = nullptr;  // required unless every sample is cached
    bool dynamic_graph_fusion = true;
    bool collect_graphs = false;
    ForwardTrace* trace = nullptr;
    SampleCache* cache = nullptr;
    int layer_tag = 0;
};

struct SpatialForward {
    Var x_out;                  // T x N x d_in
    std::vector<Tensor> graphs; // per-timestep adjacency when collect_graphs
};

// x_fused: T x N x 2*d_in (spatial stream concatenated with temporal output).
SpatialForward spatial_expert_forward(Tape& t, Var x_fused, const StaticGraph& graph,
                                      const SpatialParams& p, const SpatialRunCtx& ctx);

}  // namespace stam
