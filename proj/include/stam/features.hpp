// Assembly of the two expert input streams: the observation stream x_oe
// (raw values plus sparsity statistics, no learnable content) and the
// attention stream x_in (MLP-expanded value/frequency/time channels plus a
// learnable positional table).
#pragma once

#include "stam/autodiff.hpp"
#include "stam/data.hpp"
#include "stam/wavelet.hpp"

namespace stam {

// Channel 0: fraction of the node's window that is missing (constant along T).
// Channel 1: fraction of nodes missing at that timestep (constant along N).
Tensor sparsity_features(const Tensor& mask_tn);

// Channel 0: time of day in [0,1). Channel 1: weekday index / 7, Monday = 1.
Tensor time_features(const std::vector<int64_t>& timestamps, Index n_nodes);

struct EmbedParams {
    MlpParams expand;  // 5 channels -> d_in - d_pe
    int p_st = -1;     // positional table, t_max x n_nodes x d_pe
    Index t_max = 0;
    Index d_in = 0;
    Index d_pe = 0;
};

EmbedParams add_embed_params(ParamStore& store, const std::string& prefix, Index t_max,
                             Index n_nodes, Index d_in, Index d_pe);

struct EmbeddedBatch {
    Var x_oe;     // T x N x 3, constant on the tape
    Var x_in;     // T x N x d_in
    Tensor mask;  // T x N, the mask the experts see
};

// `w` must be normalized and zero-filled. Throws if w.t_len() exceeds the
// positional table length.
EmbeddedBatch embed(Tape& t, const TrafficWindow& w, const WaveletConfig& cfg,
                    const EmbedParams& params);

}  // namespace stam
