#include "stam/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace stam {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

int ParamStore::add(Parameter p) {
    if (by_name_.count(p.name)) throw std::invalid_argument("duplicate parameter name: " + p.name);
    const int id = int(params_.size());
    by_name_.emplace(p.name, id);
    params_.push_back(std::move(p));
    return id;
}

int ParamStore::add_glorot(const std::string& name, Shape shape) {
    Tensor v(shape);
    Index fan_in = 1, fan_out = 1;
    if (shape.size() >= 2) {
        fan_in = shape[shape.size() - 2];
        fan_out = shape[shape.size() - 1];
    } else if (shape.size() == 1) {
        fan_in = fan_out = shape[0];
    }
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    for (Index i = 0; i < v.size(); ++i) v[i] = rng_.uniform(-bound, bound);
    return add({name, std::move(v), Tensor(shape)});
}

int ParamStore::add_zeros(const std::string& name, Shape shape) {
    return add({name, Tensor(shape), Tensor(shape)});
}

int ParamStore::add_full(const std::string& name, Shape shape, double v) {
    return add({name, Tensor::full(shape, v), Tensor(shape)});
}

int ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p.grad.array().setZero();
}

int64_t ParamStore::total_values() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Tape plumbing
// ---------------------------------------------------------------------------

int Tape::push(Tensor value, bool needs_grad, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

Var Tape::input(Tensor value) { return {push(std::move(value), false, {})}; }

Var Tape::param(int param_id) {
    if (!store_) throw std::logic_error("tape has no parameter store");
    auto it = param_vars_.find(param_id);
    if (it != param_vars_.end()) return {it->second};
    const int id = push(store_->param(param_id).value, true, {});
    nodes_.back().param_id = param_id;
    param_vars_.emplace(param_id, id);
    return {id};
}

const Tensor* Tape::grad_ptr(Var v) const {
    const auto& g = nodes_.at(size_t(v.id)).grad;
    return g ? &*g : nullptr;
}

Tensor Tape::grad_of(Var v) const {
    const Tensor* g = grad_ptr(v);
    return g ? *g : Tensor(val(v).shape());
}

void Tape::accum(Var v, Tensor&& delta) {
    Node& n = node(v);
    if (!n.needs_grad) return;
    if (!n.grad)
        n.grad = std::move(delta);
    else
        n.grad->array() += delta.array();
}

void Tape::accum(Var v, const Tensor& delta) {
    Node& n = node(v);
    if (!n.needs_grad) return;
    if (!n.grad)
        n.grad = delta;
    else
        n.grad->array() += delta.array();
}

void Tape::backward(Var loss) {
    if (backward_done_) throw std::logic_error("backward already run on this tape");
    if (nodes_.empty() || !loss.valid()) throw std::logic_error("backward before forward");
    if (val(loss).size() != 1) throw std::invalid_argument("backward wants a scalar loss");
    backward_done_ = true;
    node(loss).grad = Tensor::full(val(loss).shape(), 1.0);
    for (int i = int(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[size_t(i)];
        if (n.backprop && n.grad && n.needs_grad) n.backprop();
    }
    for (auto& [pid, vid] : param_vars_) {
        const Node& n = nodes_[size_t(vid)];
        if (n.grad) store_->param(pid).grad.array() += n.grad->array();
    }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    Tensor y = stam::add(val(a), val(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, b, out] {
            const Tensor& g = *node(out).grad;
            accum(a, g);
            accum(b, g);
        };
    return out;
}

Var Tape::sub(Var a, Var b) {
    Tensor y = stam::sub(val(a), val(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, b, out] {
            const Tensor& g = *node(out).grad;
            accum(a, g);
            accum(b, stam::scale(g, -1.0));
        };
    return out;
}

Var Tape::mul(Var a, Var b) {
    Tensor y = stam::mul(val(a), val(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, b, out] {
            const Tensor& g = *node(out).grad;
            accum(a, stam::mul(g, val(b)));
            accum(b, stam::mul(g, val(a)));
        };
    return out;
}

Var Tape::scale(Var a, double c) {
    Tensor y = stam::scale(val(a), c);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, c, out] { accum(a, stam::scale(*node(out).grad, c)); };
    return out;
}

Var Tape::scale_by(Var x, Var s) {
    if (val(s).size() != 1) shape_error("scale_by wants a scalar");
    Tensor y = stam::scale(val(x), val(s).item());
    const bool ng = needs_grad(x) || needs_grad(s);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, x, s, out] {
            const Tensor& g = *node(out).grad;
            accum(x, stam::scale(g, val(s).item()));
            accum(s, Tensor::full(val(s).shape(), (g.array() * val(x).array()).sum()));
        };
    return out;
}

Var Tape::scale_last(Var x, Var s) {
    Tensor y = stam::scale_last(val(x), val(s));
    const bool ng = needs_grad(x) || needs_grad(s);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, x, s, out] {
            const Tensor& g = *node(out).grad;
            accum(x, stam::scale_last(g, val(s)));
            const Index d = val(x).last_dim();
            Tensor ds(val(s).shape());
            for (Index r = 0; r < ds.size(); ++r)
                ds[r] = (g.array().segment(r * d, d) * val(x).array().segment(r * d, d)).sum();
            accum(s, std::move(ds));
        };
    return out;
}

Var Tape::matmul(Var a, Var b) {
    Tensor y = stam::matmul(val(a), val(b));
    const bool ng = needs_grad(a) || needs_grad(b);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, b, out] {
            const Tensor& g = *node(out).grad;
            accum(a, stam::matmul(g, stam::transpose_last2(val(b))));
            accum(b, stam::matmul(stam::transpose_last2(val(a)), g));
        };
    return out;
}

Var Tape::transpose_last2(Var a) {
    Tensor y = stam::transpose_last2(val(a));
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] { accum(a, stam::transpose_last2(*node(out).grad)); };
    return out;
}

Var Tape::permute(Var a, std::vector<int> axes) {
    Tensor y = stam::permute(val(a), axes);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out, axes] {
            accum(a, stam::permute(*node(out).grad, inverse_permutation(axes)));
        };
    return out;
}

Var Tape::reshape(Var a, Shape shape) {
    Tensor y = val(a).reshaped(shape);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] { accum(a, node(out).grad->reshaped(val(a).shape())); };
    return out;
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
    std::vector<const Tensor*> vs;
    vs.reserve(parts.size());
    bool ng = false;
    for (Var p : parts) {
        vs.push_back(&val(p));
        ng = ng || needs_grad(p);
    }
    Tensor y = stam::concat<double>(std::span<const Tensor* const>(vs.data(), vs.size()), axis);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, parts, axis, out] {
            const Tensor& g = *node(out).grad;
            Index off = 0;
            for (Var p : parts) {
                const Index len = val(p).dim(axis);
                accum(p, stam::slice(g, axis, off, len));
                off += len;
            }
        };
    return out;
}

Var Tape::slice(Var a, int axis, Index start, Index len) {
    Tensor y = stam::slice(val(a), axis, start, len);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, axis, start, len, out] {
            const Tensor& g = *node(out).grad;
            const Tensor& in = val(a);
            Tensor da(in.shape());
            Index outer = 1;
            for (int d = 0; d < axis; ++d) outer *= in.dim(d);
            Index inner = 1;
            for (Index d = axis + 1; d < in.rank(); ++d) inner *= in.dim(d);
            const Index in_rows = in.dim(axis);
            for (Index o = 0; o < outer; ++o)
                std::copy(g.data() + o * len * inner, g.data() + (o + 1) * len * inner,
                          da.data() + (o * in_rows + start) * inner);
            accum(a, std::move(da));
        };
    return out;
}

Var Tape::gather(Var a, int axis, std::vector<Index> idx) {
    Tensor y = stam::gather(val(a), axis, std::span<const Index>(idx));
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, axis, idx, out] {
            const Tensor& g = *node(out).grad;
            const Tensor& in = val(a);
            Tensor da(in.shape());
            Index outer = 1;
            for (int d = 0; d < axis; ++d) outer *= in.dim(d);
            Index inner = 1;
            for (Index d = axis + 1; d < in.rank(); ++d) inner *= in.dim(d);
            const Index in_rows = in.dim(axis), out_rows = Index(idx.size());
            for (Index o = 0; o < outer; ++o)
                for (Index k = 0; k < out_rows; ++k) {
                    const double* src = g.data() + (o * out_rows + k) * inner;
                    double* dst = da.data() + (o * in_rows + idx[size_t(k)]) * inner;
                    for (Index i = 0; i < inner; ++i) dst[i] += src[i];
                }
            accum(a, std::move(da));
        };
    return out;
}

Var Tape::relu(Var a) {
    Tensor y = stam::relu(val(a));
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] {
            const Tensor& g = *node(out).grad;
            Tensor da(val(a).shape(), g.array() * (val(a).array() > 0.0).template cast<double>());
            accum(a, std::move(da));
        };
    return out;
}

Var Tape::abs(Var a) {
    Tensor y = stam::abs(val(a));
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] {
            const Tensor& g = *node(out).grad;
            Tensor da(val(a).shape(), g.array() * val(a).array().sign());
            accum(a, std::move(da));
        };
    return out;
}

Var Tape::softmax(Var a, int axis) {
    const Index r = val(a).rank();
    if (axis < 0) axis += int(r);
    if (axis < 0 || axis >= r) shape_error("softmax axis out of bounds");
    if (axis != r - 1) {
        std::vector<int> fwd;
        for (Index d = 0; d < r; ++d)
            if (d != axis) fwd.push_back(int(d));
        fwd.push_back(axis);
        Var p = permute(a, fwd);
        Var s = softmax(p, int(r) - 1);
        return permute(s, inverse_permutation(fwd));
    }
    Tensor y = stam::softmax(val(a), axis);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] {
            const Tensor& g = *node(out).grad;
            const Tensor& y = val(out);
            const Index cols = y.last_dim(), rows = y.size() / cols;
            Tensor da(y.shape());
            auto gm = g.mat(rows, cols);
            auto ym = y.mat(rows, cols);
            auto dm = da.mat(rows, cols);
            for (Index i = 0; i < rows; ++i) {
                const double dot = (gm.row(i).array() * ym.row(i).array()).sum();
                dm.row(i) = ym.row(i).array() * (gm.row(i).array() - dot);
            }
            accum(a, std::move(da));
        };
    return out;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& in = val(x);
    const Index cols = in.last_dim(), rows = in.size() / cols;
    if (val(gamma).size() != cols || val(beta).size() != cols) shape_error("layer_norm affine shapes");
    Tensor xhat(in.shape());
    Tensor invstd(Shape{rows});
    {
        auto im = in.mat(rows, cols);
        auto xm = xhat.mat(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            const double mu = im.row(i).mean();
            const double var = (im.row(i).array() - mu).square().mean();
            const double is = 1.0 / std::sqrt(var + eps);
            invstd[i] = is;
            xm.row(i) = (im.row(i).array() - mu) * is;
        }
    }
    Tensor y(in.shape());
    {
        auto xm = xhat.mat(rows, cols);
        auto ym = y.mat(rows, cols);
        for (Index i = 0; i < rows; ++i)
            ym.row(i) = (xm.row(i).array() * val(gamma).array().transpose() +
                         val(beta).array().transpose())
                            .matrix();
    }
    const bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, x, gamma, beta, out, xhat, invstd, rows, cols] {
            const Tensor& g = *node(out).grad;
            auto gm = g.mat(rows, cols);
            auto xm = xhat.mat(rows, cols);
            Tensor dgamma(val(gamma).shape());
            Tensor dbeta(val(beta).shape());
            Tensor dx(val(x).shape());
            auto dxm = dx.mat(rows, cols);
            for (Index i = 0; i < rows; ++i) {
                dgamma.array() += (gm.row(i).array() * xm.row(i).array()).transpose();
                dbeta.array() += gm.row(i).array().transpose();
                // dL/dx for the normalized row, gamma folded into the incoming grad.
                Eigen::ArrayXd gx = gm.row(i).array().transpose() * val(gamma).array();
                const double m1 = gx.mean();
                const double m2 = (gx * xm.row(i).array().transpose()).mean();
                dxm.row(i) =
                    (invstd[i] * (gx - m1 - xm.row(i).array().transpose() * m2)).matrix().transpose();
            }
            accum(x, std::move(dx));
            accum(gamma, std::move(dgamma));
            accum(beta, std::move(dbeta));
        };
    return out;
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& in = val(x);
    const Tensor& wt = val(w);
    if (wt.rank() != 2 || in.last_dim() != wt.dim(0)) shape_error("linear shapes");
    const Index rows = in.size() / in.last_dim(), cin = wt.dim(0), cout = wt.dim(1);
    if (b.valid() && val(b).size() != cout) shape_error("linear bias shape");
    Shape out_shape = in.shape();
    if (out_shape.empty()) shape_error("linear on scalar");
    out_shape.back() = cout;
    Tensor y(out_shape);
    y.mat(rows, cout).noalias() = in.mat(rows, cin) * wt.mat(cin, cout);
    if (b.valid()) y.mat(rows, cout).rowwise() += val(b).array().transpose().matrix();
    const bool ng = needs_grad(x) || needs_grad(w) || (b.valid() && needs_grad(b));
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, x, w, b, out, rows, cin, cout] {
            const Tensor& g = *node(out).grad;
            auto gm = g.mat(rows, cout);
            if (needs_grad(x)) {
                Tensor dx(val(x).shape());
                dx.mat(rows, cin).noalias() = gm * val(w).mat(cin, cout).transpose();
                accum(x, std::move(dx));
            }
            if (needs_grad(w)) {
                Tensor dw(val(w).shape());
                dw.mat(cin, cout).noalias() = val(x).mat(rows, cin).transpose() * gm;
                accum(w, std::move(dw));
            }
            if (b.valid() && needs_grad(b)) {
                Tensor db(val(b).shape());
                db.array() = gm.colwise().sum().array().transpose();
                accum(b, std::move(db));
            }
        };
    return out;
}

Var Tape::sum(Var a) {
    Tensor y = Tensor::scalar(stam::sum(val(a)));
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out] {
            accum(a, Tensor::full(val(a).shape(), node(out).grad->item()));
        };
    return out;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / double(val(a).size())); }

// Zero entries strictly below their row median (midpoint of the two middle
// order statistics for even row length). The optional mask reports survivors.
Tensor toph_rows_impl(const Tensor& a, Tensor* mask) {
    if (a.rank() != 2) shape_error("toph_rows wants rank 2");
    const Index rows = a.dim(0), cols = a.dim(1);
    Tensor out(a.shape());
    if (mask) *mask = Tensor(a.shape());
    std::vector<double> row(size_t(cols), 0.0);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) row[size_t(j)] = a.at(i, j);
        std::nth_element(row.begin(), row.begin() + (cols - 1) / 2, row.end());
        double med = row[size_t((cols - 1) / 2)];
        if (cols % 2 == 0) {
            const double hi = *std::min_element(row.begin() + (cols - 1) / 2 + 1, row.end());
            med = 0.5 * (med + hi);
        }
        for (Index j = 0; j < cols; ++j) {
            const bool keep = a.at(i, j) >= med;
            out.at(i, j) = keep ? a.at(i, j) : 0.0;
            if (mask) mask->at(i, j) = keep ? 1.0 : 0.0;
        }
    }
    return out;
}

Tensor toph_rows_plain(const Tensor& a) { return toph_rows_impl(a, nullptr); }

Var Tape::toph_rows(Var a) {
    Tensor mask;
    Tensor y = toph_rows_impl(val(a), &mask);
    const bool ng = needs_grad(a);
    Var out{push(std::move(y), ng, {})};
    if (ng)
        node(out).backprop = [this, a, out, mask] {
            accum(a, stam::mul(*node(out).grad, mask));
        };
    return out;
}

MlpParams add_mlp(ParamStore& store, const std::string& prefix, Index in, Index hidden, Index out) {
    MlpParams p;
    p.w1 = store.add_glorot(prefix + ".w1", {in, hidden});
    p.b1 = store.add_zeros(prefix + ".b1", {hidden});
    p.w2 = store.add_glorot(prefix + ".w2", {hidden, out});
    p.b2 = store.add_zeros(prefix + ".b2", {out});
    return p;
}

Var mlp(Tape& t, Var x, const MlpParams& p) {
    Var h = t.relu(t.linear(x, t.param(p.w1), t.param(p.b1)));
    return t.linear(h, t.param(p.w2), t.param(p.b2));
}

}  // namespace stam
