// Optional forward-pass instrumentation: softmax row-sum checks, attention
// matrix shapes on the spatial path, and multiply-accumulate counters.
#pragma once

#include "stam/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stam {

struct SoftmaxStat {
    std::string site;
    Index rows = 0, cols = 0;
    double max_row_sum_err = 0.0;
    double min_value = 0.0;
};

struct AttnShape {
    std::string site;
    Index rows = 0, cols = 0;
};

struct ForwardTrace {
    std::vector<SoftmaxStat> softmax_stats;
    std::vector<AttnShape> spatial_attn_shapes;  // score matrices on the projector/re-attention path
    int64_t spatial_path_macs = 0;               // fuse/local/sample/project/re-attention/ffn
    int64_t dynamic_graph_macs = 0;               // dynamic-graph synthesis and fusion

    // Worst row-sum deviation across all recorded softmaxes whose site starts
    // with `prefix` ("" matches everything).
    double max_row_sum_err(const std::string& prefix = "") const {
        double worst = 0.0;
        for (const auto& s : softmax_stats)
            if (s.site.rfind(prefix, 0) == 0) worst = std::max(worst, s.max_row_sum_err);
        return worst;
    }
    double min_softmax_value(const std::string& prefix = "") const {
        double lo = 0.0;
        for (const auto& s : softmax_stats)
            if (s.site.rfind(prefix, 0) == 0) lo = std::min(lo, s.min_value);
        return lo;
    }
};

// Treats the last axis as the distribution axis.
inline void record_softmax(ForwardTrace* trace, const char* site, const Tensor& y) {
    if (!trace) return;
    const Index cols = y.last_dim(), rows = y.size() / cols;
    SoftmaxStat st;
    st.site = site;
    st.rows = rows;
    st.cols = cols;
    st.min_value = y.array().minCoeff();
    auto m = y.mat(rows, cols);
    for (Index i = 0; i < rows; ++i)
        st.max_row_sum_err = std::max(st.max_row_sum_err, std::fabs(m.row(i).sum() - 1.0));
    trace->softmax_stats.push_back(std::move(st));
}

inline void record_attn_shape(ForwardTrace* trace, const char* site, Index rows, Index cols) {
    if (!trace) return;
    trace->spatial_attn_shapes.push_back({site, rows, cols});
}

}  // namespace stam
