#include "stam/temporal.hpp"

namespace stam {

TemporalLayerParams add_temporal_params(ParamStore& store, const std::string& prefix, Index d_in, int heads,
                           Index ffn_hidden) {
    if (heads < 1 || d_in % heads != 0)
        throw std::invalid_argument("d_in must be divisible by the head count");
    TemporalLayerParams p;
    p.d_in = d_in;
    p.heads = heads;
    p.wq = store.add_glorot(prefix + ".wq", {d_in, d_in});
    p.bq = store.add_zeros(prefix + ".bq", {d_in});
    p.wk = store.add_glorot(prefix + ".wk", {d_in, d_in});
    p.bk = store.add_zeros(prefix + ".bk", {d_in});
    p.wv = store.add_glorot(prefix + ".wv", {d_in, d_in});
    p.bv = store.add_zeros(prefix + ".bv", {d_in});
    p.wo = store.add_glorot(prefix + ".wo", {d_in, d_in});
    p.bo = store.add_zeros(prefix + ".bo", {d_in});
    p.ffn = add_mlp(store, prefix + ".ffn", d_in, ffn_hidden, d_in);
    p.ln1_g = store.add_full(prefix + ".ln1_g", {d_in}, 1.0);
    p.ln1_b = store.add_zeros(prefix + ".ln1_b", {d_in});
    p.ln2_g = store.add_full(prefix + ".ln2_g", {d_in}, 1.0);
    p.ln2_b = store.add_zeros(prefix + ".ln2_b", {d_in});
    return p;
}

Var temporal_forward(Tape& t, Var x, const TemporalLayerParams& p, ForwardTrace* trace) {
    const Shape& s = t.val(x).shape();
    if (s.size() != 3 || s[2] != p.d_in) shape_error("temporal_forward wants T x N x d_in");
    const Index t_len = s[0], n = s[1];

    Var h = t.layer_norm(x, t.param(p.ln1_g), t.param(p.ln1_b));
    Var q = t.permute(t.linear(h, t.param(p.wq), t.param(p.bq)), {1, 0, 2});  // N x T x D
    Var k = t.permute(t.linear(h, t.param(p.wk), t.param(p.bk)), {1, 0, 2});
    Var v = t.permute(t.linear(h, t.param(p.wv), t.param(p.bv)), {1, 0, 2});
    Var mixed = multihead_attention(t, q, k, v, p.heads, trace, "temporal.attn");
    Var attn_out = t.linear(t.permute(mixed, {1, 0, 2}), t.param(p.wo), t.param(p.bo));

    Var h1 = t.add(x, attn_out);
    Var h2 = t.add(h1, mlp(t, t.layer_norm(h1, t.param(p.ln2_g), t.param(p.ln2_b)), p.ffn));
    (void)t_len;
    (void)n;
    return h2;
}

}  // namespace stam
