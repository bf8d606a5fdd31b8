#include "stam/attention.hpp"

#include <cmath>

namespace stam {

Var multihead_attention(Tape& t, Var q, Var k, Var v, int heads, ForwardTrace* trace,
                        const char* site) {
    const Shape& qs = t.val(q).shape();
    const Shape& ks = t.val(k).shape();
    const Shape& vs = t.val(v).shape();
    if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3) shape_error("attention wants rank 3");
    const Index b = qs[0], m = qs[1], d = qs[2], nk = ks[1], dv = vs[2];
    if (ks[0] != b || vs[0] != b || ks[2] != d || vs[1] != nk) shape_error("attention operand shapes");
    if (heads < 1 || d % heads != 0 || dv % heads != 0)
        throw std::invalid_argument("head count must divide feature widths");
    const Index dk = d / heads, dvh = dv / heads;

    auto split = [&](Var x, Index rows, Index width) {
        Var r = t.reshape(x, {b, rows, heads, width});
        return t.reshape(t.permute(r, {0, 2, 1, 3}), {b * heads, rows, width});
    };
    Var qh = split(q, m, dk);
    Var kh = split(k, nk, dk);
    Var vh = split(v, nk, dvh);

    Var scores = t.scale(t.matmul(qh, t.transpose_last2(kh)), 1.0 / std::sqrt(double(dk)));
    Var attn = t.softmax(scores, 2);
    record_softmax(trace, site, t.val(attn));

    Var mixed = t.matmul(attn, vh);  // (b*heads) x m x dvh
    Var merged = t.permute(t.reshape(mixed, {b, heads, m, dvh}), {0, 2, 1, 3});
    return t.reshape(merged, {b, m, dv});
}

}  // namespace stam
