// MoE assembly: stacked temporal/spatial expert pairs, observation-expert
// confidence gating, weighted concatenation into the readout, and checkpoint
// persistence.
#pragma once

#include "stam/features.hpp"
#include "stam/spatial.hpp"
#include "stam/temporal.hpp"

#include <memory>

namespace stam {

struct ModelConfig {
    Index layers = 2;
    int heads = 4;
    Index d_in = 64;
    Index d_pe = 16;
    Index readout_hidden = 128;
    Index ffn_mult = 4;
    bool dynamic_graph_fusion = true;
    bool readout_uses_oe = false;   // feed the observation stream to the readout too
    bool spatial_identity = false;  // ablation: spatial experts pass their input through
    Index window = 24;             // positional table length == max window
    Index n_nodes = 0;             // bound when the model is built
    Index e_per_node = 8;
    WaveletConfig wavelet;
    uint64_t init_seed = 1;
    uint64_t eval_sample_seed = 3;

    Index n_experts() const { return 2 * layers; }
    Index ffn_hidden() const { return ffn_mult * d_in; }
    void validate() const;
};

struct LayerParams {
    TemporalLayerParams temporal;
    SpatialParams spatial;
};

// All learnable state plus the architecture that shapes it.
struct Model {
    ModelConfig config;
    ParamStore store;
    EmbedParams embed;
    std::vector<LayerParams> layers;
    int w_oe = -1;  // observation-expert gate, 3 x n_experts
    MlpParams readout;

    explicit Model(const ModelConfig& cfg);
};

struct MoeRunCtx {
    Rng* rng = nullptr;
    bool collect_graphs = false;  // per-timestep adjacency of the last spatial layer
    ForwardTrace* trace = nullptr;
    SampleCache* cache = nullptr;
    bool spatial_identity = false;          // ablation: spatial experts pass their input through
    const Tensor* gate_override = nullptr;  // diagnostics: fixed T x N x n_experts gate
};

// Per-cell confidence over the 2L experts: softmax(x_oe . w_oe).
Var gate_scores(Tape& t, Var x_oe, const Model& model, ForwardTrace* trace = nullptr);

struct MoeForward {
    Var y_hat;  // T x N x 1
    Var gates;  // T x N x n_experts
    std::vector<Tensor> graphs;
};

MoeForward moe_forward(Tape& t, const EmbeddedBatch& batch, const StaticGraph& graph, Model& model,
                       const MoeRunCtx& ctx);

// Observed cells keep their original values; hidden cells take the
// denormalized prediction. Returns T x N in original units.
Tensor merge_with_observed(const Tensor& y_hat, const TrafficWindow& raw, const NormStats& stats);

// ---- checkpointing ----
// Directory layout: manifest.json (version, config, parameter names+shapes)
// plus one little-endian float64 raw file per parameter.
void save_checkpoint(const std::string& dir, const Model& model);
Model load_checkpoint(const std::string& dir);

}  // namespace stam
