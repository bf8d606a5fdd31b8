// Shared scaled-dot-product attention over batched rank-3 operands.
#pragma once

#include "stam/autodiff.hpp"
#include "stam/trace.hpp"

namespace stam {

// q: B x M x D, k: B x Nk x D, v: B x Nk x Dv. Splits D and Dv into `heads`
// slices, attends per head, and re-concatenates: result is B x M x Dv.
// Softmax rows are recorded on the trace under `site`.
Var multihead_attention(Tape& t, Var q, Var k, Var v, int heads, ForwardTrace* trace,
                        const char* site);

}  // namespace stam
