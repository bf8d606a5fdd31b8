#include "stam/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stam {

Index sample_count(Index n_nodes) {
    if (n_nodes < 2) throw std::invalid_argument("sampling wants at least 2 nodes");
    Index s = 0;
    while ((Index(1) << s) < n_nodes) ++s;  // ceil(log2 n)
    return std::max(Index(1), std::min(s, n_nodes / 2));
}

SampleSet sample_nodes(const Tensor& scores, Rng& rng) {
    if (scores.rank() != 1) shape_error("sample_nodes wants a score vector");
    const Index n = scores.size();
    const Index s = sample_count(n);
    if (!scores.all_finite()) throw std::invalid_argument("non-finite significance scores");

    std::vector<Index> order(size_t(n), 0);
    std::iota(order.begin(), order.end(), Index(0));
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    SampleSet out;
    out.top_nodes.assign(order.begin(), order.begin() + s);
    std::vector<Index> remainder(order.begin() + s, order.end());
    std::sort(remainder.begin(), remainder.end());

    // Softmax over the remaining scores, then s draws without replacement.
    std::vector<double> w(remainder.size(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < remainder.size(); ++i) mx = std::max(mx, scores[remainder[i]]);
    double total = 0.0;
    for (size_t i = 0; i < remainder.size(); ++i) {
        w[i] = std::exp(scores[remainder[i]] - mx);
        total += w[i];
    }
    for (Index draw = 0; draw < s; ++draw) {
        double u = rng.uniform01() * total;
        size_t pick = 0;
        for (; pick + 1 < w.size(); ++pick) {
            if (u < w[pick]) break;
            u -= w[pick];
        }
        out.random_nodes.push_back(remainder[pick]);
        total -= w[pick];
        w.erase(w.begin() + long(pick));
        remainder.erase(remainder.begin() + long(pick));
    }

    out.all = out.top_nodes;
    out.all.insert(out.all.end(), out.random_nodes.begin(), out.random_nodes.end());
    return out;
}

SpatialParams add_spatial_params(ParamStore& store, const std::string& prefix, Index d_in,
                                 int heads, Index ffn_hidden, Index n_nodes, Index e_per_node) {
    if (heads < 1 || d_in % heads != 0)
        throw std::invalid_argument("d_in must be divisible by the head count");
    SpatialParams p;
    p.d_in = d_in;
    p.heads = heads;
    p.e_per_node = e_per_node;
    p.fuse_w = store.add_glorot(prefix + ".fuse_w", {2 * d_in, d_in});
    p.fuse_b = store.add_zeros(prefix + ".fuse_b", {d_in});
    p.wq = store.add_glorot(prefix + ".wq", {d_in, d_in});
    p.bq = store.add_zeros(prefix + ".bq", {d_in});
    p.wk = store.add_glorot(prefix + ".wk", {d_in, d_in});
    p.bk = store.add_zeros(prefix + ".bk", {d_in});
    p.wv = store.add_glorot(prefix + ".wv", {d_in, d_in});
    p.bv = store.add_zeros(prefix + ".bv", {d_in});
    p.w_sc = store.add_glorot(prefix + ".w_sc", {e_per_node, 1});
    p.re_wq = store.add_glorot(prefix + ".re_wq", {d_in, d_in});
    p.re_bq = store.add_zeros(prefix + ".re_bq", {d_in});
    p.re_wk = store.add_glorot(prefix + ".re_wk", {d_in, d_in});
    p.re_bk = store.add_zeros(prefix + ".re_bk", {d_in});
    p.re_wv = store.add_glorot(prefix + ".re_wv", {d_in, d_in});
    p.re_bv = store.add_zeros(prefix + ".re_bv", {d_in});
    p.re_wo = store.add_glorot(prefix + ".re_wo", {d_in, d_in});
    p.re_bo = store.add_zeros(prefix + ".re_bo", {d_in});
    p.ffn = add_mlp(store, prefix + ".ffn", d_in, ffn_hidden, d_in);
    p.ln1_g = store.add_full(prefix + ".ln1_g", {d_in}, 1.0);
    p.ln1_b = store.add_zeros(prefix + ".ln1_b", {d_in});
    p.ln2_g = store.add_full(prefix + ".ln2_g", {d_in}, 1.0);
    p.ln2_b = store.add_zeros(prefix + ".ln2_b", {d_in});
    p.e_ref = store.add_glorot(prefix + ".e_ref", {n_nodes, d_in});
    p.dg_gamma = store.add_full(prefix + ".dg_gamma", {}, 0.1);
    return p;
}

LocalAttention local_graph_attention(Tape& t, Var x, const StaticGraph& graph,
                                     const SpatialParams& p, ForwardTrace* trace) {
    const Shape& s = t.val(x).shape();
    if (s.size() != 2 || s[1] != p.d_in) shape_error("local_graph_attention wants N x d_in");
    const Index n = s[0], e = graph.e_per_node;
    if (n != graph.n_nodes) shape_error("node count differs from the static graph");
    if (e != p.e_per_node) shape_error("graph width differs from the scorer");

    LocalAttention out;
    out.q = t.linear(x, t.param(p.wq), t.param(p.bq));
    out.k = t.linear(x, t.param(p.wk), t.param(p.bk));
    out.v = t.linear(x, t.param(p.wv), t.param(p.bv));

    Var kn = t.reshape(t.gather(out.k, 0, graph.neighbors), {n, e, p.d_in});
    Var q3 = t.reshape(out.q, {n, 1, p.d_in});
    Var scores = t.scale(t.matmul(q3, t.transpose_last2(kn)), 1.0 / std::sqrt(double(p.d_in)));
    out.e_g = t.reshape(t.softmax(scores, 2), {n, e});
    record_softmax(trace, "spatial.local", t.val(out.e_g));
    record_attn_shape(trace, "spatial.local", n, e);
    return out;
}

Var significance_scores(Tape& t, Var e_g, const SpatialParams& p) {
    const Index n = t.val(e_g).dim(0);
    return t.reshape(t.matmul(e_g, t.param(p.w_sc)), {n});
}

ProjectionPack project_message(Tape& t, const LocalAttention& local, const SampleSet& samples,
                               ForwardTrace* trace) {
    ProjectionPack pack;
    pack.q = local.q;
    pack.k = local.k;
    pack.v = local.v;
    pack.samples = samples;
    const Index n = t.val(local.q).dim(0), d = t.val(local.q).dim(1);
    std::vector<Index> idx = samples.all;
    pack.p_s = t.gather(local.q, 0, idx);
    pack.k_s = t.gather(local.k, 0, idx);
    Var scores =
        t.scale(t.matmul(pack.p_s, t.transpose_last2(local.k)), 1.0 / std::sqrt(double(d)));
    Var attn = t.softmax(scores, 1);  // 2S x N, each sampled node attends over all nodes
    record_softmax(trace, "spatial.project", t.val(attn));
    record_attn_shape(trace, "spatial.project", Index(idx.size()), n);
    pack.m = t.matmul(attn, local.v);
    return pack;
}

Var re_attention_message(Tape& t, Var h, const ProjectionPack& pack, const SpatialParams& p,
                         ForwardTrace* trace) {
    const Index n = t.val(h).dim(0), d = p.d_in;
    const Index s2 = t.val(pack.p_s).dim(0);
    Var q = t.reshape(t.linear(h, t.param(p.re_wq), t.param(p.re_bq)), {1, n, d});
    Var k = t.reshape(t.linear(pack.p_s, t.param(p.re_wk), t.param(p.re_bk)), {1, s2, d});
    Var v = t.reshape(t.linear(pack.m, t.param(p.re_wv), t.param(p.re_bv)), {1, s2, d});
    Var mixed = multihead_attention(t, q, k, v, p.heads, trace, "spatial.reattn");
    record_attn_shape(trace, "spatial.reattn", n, s2);
    return t.linear(t.reshape(mixed, {n, d}), t.param(p.re_wo), t.param(p.re_bo));
}

Var re_attention(Tape& t, Var x, const ProjectionPack& pack, const SpatialParams& p,
                 ForwardTrace* trace) {
    Var h = t.layer_norm(x, t.param(p.ln1_g), t.param(p.ln1_b));
    Var x1 = t.add(x, re_attention_message(t, h, pack, p, trace));
    Var h2 = t.layer_norm(x1, t.param(p.ln2_g), t.param(p.ln2_b));
    return t.add(x1, mlp(t, h2, p.ffn));
}

Var dynamic_graph(Tape& t, const ProjectionPack& pack, const SpatialParams& p,
                  ForwardTrace* trace) {
    const Index d = p.d_in;
    Var a_s = t.softmax(t.scale(t.matmul(pack.q, t.transpose_last2(pack.k_s)),
                                1.0 / std::sqrt(double(d))),
                        1);  // N x 2S
    record_softmax(trace, "dyngraph.sampled", t.val(a_s));
    Var e_adp = t.toph_rows(t.matmul(pack.m, t.transpose_last2(t.param(p.e_ref))));  // 2S x N
    Var adj = t.softmax(t.relu(t.matmul(a_s, e_adp)), 1);
    record_softmax(trace, "dyngraph.adjacency", t.val(adj));
    return adj;
}

SpatialForward spatial_expert_forward(Tape& t, Var x_fused, const StaticGraph& graph,
                                      const SpatialParams& p, const SpatialRunCtx& ctx) {
    const Shape& s = t.val(x_fused).shape();
    if (s.size() != 3 || s[2] != 2 * p.d_in) shape_error("spatial expert wants T x N x 2*d_in");
    const Index t_len = s[0], n = s[1], d = p.d_in, e = graph.e_per_node;

    SpatialForward out;
    std::vector<Var> steps;
    steps.reserve(size_t(t_len));
    for (Index step = 0; step < t_len; ++step) {
        Var xt = t.reshape(t.slice(x_fused, 0, step, 1), {n, 2 * d});
        Var x0 = t.linear(xt, t.param(p.fuse_w), t.param(p.fuse_b));
        Var h = t.layer_norm(x0, t.param(p.ln1_g), t.param(p.ln1_b));

        LocalAttention local = local_graph_attention(t, h, graph, p, ctx.trace);
        Var e_w = significance_scores(t, local.e_g, p);

        SampleSet samples;
        const auto key = std::make_pair(ctx.layer_tag, step);
        if (ctx.cache && ctx.cache->entries.count(key)) {
            samples = ctx.cache->entries.at(key);
        } else {
            if (!ctx.rng) throw std::logic_error("spatial expert needs an rng or a full cache");
            samples = sample_nodes(t.val(e_w), *ctx.rng);
            if (ctx.cache) ctx.cache->entries.emplace(key, samples);
        }
        const Index s2 = Index(samples.all.size());

        ProjectionPack pack = project_message(t, local, samples, ctx.trace);
        Var attn = re_attention_message(t, h, pack, p, ctx.trace);

        if (ctx.trace) {
            ForwardTrace& tr = *ctx.trace;
            tr.spatial_path_macs += n * (2 * d) * d;            // fusion
            tr.spatial_path_macs += 3 * n * d * d;              // canonical projections
            tr.spatial_path_macs += n * e * d + n * e;          // local scores + scorer
            tr.spatial_path_macs += 2 * s2 * n * d;             // projection message
            tr.spatial_path_macs += 2 * n * d * d + 2 * s2 * d * d;  // fresh q and k/v projections
            tr.spatial_path_macs += 2 * n * s2 * d;             // re-attention scores + mix
            tr.spatial_path_macs += 2 * n * d * t.val(t.param(p.ffn.w1)).dim(1);  // feed-forward
        }

        Var adj{};
        if (ctx.dynamic_graph_fusion || ctx.collect_graphs) {
            adj = dynamic_graph(t, pack, p, ctx.trace);
            if (ctx.trace) {
                ctx.trace->dynamic_graph_macs += n * s2 * d;  // sampled attention
                ctx.trace->dynamic_graph_macs += s2 * d * n;  // refraction alignment
                ctx.trace->dynamic_graph_macs += n * s2 * n;  // adjacency synthesis
            }
        }
        if (ctx.dynamic_graph_fusion) {
            Var hop = t.scale_by(t.matmul(adj, pack.v), t.param(p.dg_gamma));
            attn = t.add(attn, hop);
            if (ctx.trace) ctx.trace->dynamic_graph_macs += n * n * d;  // one-hop aggregation
        }
        if (ctx.collect_graphs) out.graphs.push_back(t.val(adj));

        Var x1 = t.add(x0, attn);
        Var h2 = t.layer_norm(x1, t.param(p.ln2_g), t.param(p.ln2_b));
        Var x2 = t.add(x1, mlp(t, h2, p.ffn));
        steps.push_back(t.reshape(x2, {1, n, d}));
    }
    out.x_out = t.concat(steps, 0);
    return out;
}

}  // namespace stam
