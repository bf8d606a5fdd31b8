#include "stam/features.hpp"

#include "stam/dataio.hpp"

namespace stam {

Tensor sparsity_features(const Tensor& mask_tn) {
    if (mask_tn.rank() != 2) shape_error("sparsity_features wants T x N");
    const Index t_len = mask_tn.dim(0), n = mask_tn.dim(1);
    std::vector<double> node_missing(size_t(n), 0.0), step_missing(size_t(t_len), 0.0);
    for (Index t = 0; t < t_len; ++t)
        for (Index j = 0; j < n; ++j)
            if (mask_tn.at(t, j) == 0.0) {
                node_missing[size_t(j)] += 1.0;
                step_missing[size_t(t)] += 1.0;
            }
    Tensor out(Shape{t_len, n, 2});
    for (Index t = 0; t < t_len; ++t)
        for (Index j = 0; j < n; ++j) {
            out.at(t, j, Index(0)) = node_missing[size_t(j)] / double(t_len);
            out.at(t, j, Index(1)) = step_missing[size_t(t)] / double(n);
        }
    return out;
}

Tensor time_features(const std::vector<int64_t>& timestamps, Index n_nodes) {
    const Index t_len = Index(timestamps.size());
    Tensor out(Shape{t_len, n_nodes, 2});
    for (Index t = 0; t < t_len; ++t) {
        const double tod = double(seconds_of_day(timestamps[size_t(t)])) / 86400.0;
        const double wd = double(weekday_mon1(timestamps[size_t(t)])) / 7.0;
        for (Index j = 0; j < n_nodes; ++j) {
            out.at(t, j, Index(0)) = tod;
            out.at(t, j, Index(1)) = wd;
        }
    }
    return out;
}

EmbedParams add_embed_params(ParamStore& store, const std::string& prefix, Index t_max,
                             Index n_nodes, Index d_in, Index d_pe) {
    if (d_pe < 1 || d_pe >= d_in) throw std::invalid_argument("need 1 <= d_pe < d_in");
    EmbedParams p;
    p.t_max = t_max;
    p.d_in = d_in;
    p.d_pe = d_pe;
    p.expand = add_mlp(store, prefix + ".expand", 5, d_in, d_in - d_pe);
    p.p_st = store.add_glorot(prefix + ".p_st", {t_max, n_nodes, d_pe});
    return p;
}

EmbeddedBatch embed(Tape& t, const TrafficWindow& w, const WaveletConfig& cfg,
                    const EmbedParams& params) {
    const Index t_len = w.t_len(), n = w.n_nodes();
    if (t_len > params.t_max)
        throw std::invalid_argument("window length exceeds the positional table");

    const Tensor values_tn = w.values_tn();
    auto [low, high] = wavelet_split_columns(values_tn, cfg);
    const Tensor p_u = time_features(w.timestamps, n);
    const Tensor p_sp = sparsity_features(w.mask);

    const Tensor v3 = values_tn.reshaped({t_len, n, 1});
    const Tensor lo3 = low.reshaped({t_len, n, 1});
    const Tensor hi3 = high.reshaped({t_len, n, 1});

    EmbeddedBatch out;
    out.mask = w.mask;
    out.x_oe = t.input(concat<double>({&v3, &p_sp}, 2));

    Var channels = t.concat({t.input(v3), t.input(lo3), t.input(hi3), t.input(p_u)}, 2);
    Var expanded = mlp(t, channels, params.expand);
    Var pos = t.slice(t.param(params.p_st), 0, 0, t_len);
    out.x_in = t.concat({expanded, pos}, 2);
    return out;
}

}  // namespace stam
