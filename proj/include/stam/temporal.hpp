// Temporal expert: a pre-norm transformer encoder layer attending along the
// time axis independently per node.
#pragma once

#include "stam/attention.hpp"

namespace stam {

struct TemporalLayerParams {
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1;
    int wo = -1, bo = -1;
    MlpParams ffn;
    int ln1_g = -1, ln1_b = -1, ln2_g = -1, ln2_b = -1;
    Index d_in = 0;
    int heads = 1;
};

TemporalLayerParams add_temporal_params(ParamStore& store, const std::string& prefix, Index d_in, int heads,
                           Index ffn_hidden);

// x: T x N x d_in -> same shape. The node axis is batch-like.
Var temporal_forward(Tape& t, Var x, const TemporalLayerParams& p, ForwardTrace* trace = nullptr);

}  // namespace stam
