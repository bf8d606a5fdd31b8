// Dense row-major tensor on Eigen storage, plus the shape-checked kernels the
// rest of the library builds on. Rank is dynamic (0..4 in practice); a rank-0
// tensor holds a single scalar.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stam {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline Shape row_major_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = int(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

[[noreturn]] inline void shape_error(const std::string& what) {
    throw std::invalid_argument("shape error: " + what);
}

template <typename Scalar>
class TensorT {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatMap =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    TensorT() : shape_{}, data_(Storage::Zero(1)) {}
    explicit TensorT(Shape shape)
        : shape_(std::move(shape)), data_(Storage::Zero(shape_size(shape_))) {}
    TensorT(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_)) shape_error("storage does not match " + shape_str(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
    static TensorT full(Shape shape, Scalar v) {
        TensorT t(std::move(shape));
        t.data_.setConstant(v);
        return t;
    }
    static TensorT scalar(Scalar v) { return full({}, v); }
    static TensorT from(Shape shape, std::initializer_list<Scalar> vals) {
        TensorT t(std::move(shape));
        if (Index(vals.size()) != t.size()) shape_error("initializer size mismatch");
        Index i = 0;
        for (Scalar v : vals) t.data_[i++] = v;
        return t;
    }

    Index rank() const { return Index(shape_.size()); }
    Index dim(Index i) const { return shape_.at(size_t(i)); }
    Index size() const { return data_.size(); }
    const Shape& shape() const { return shape_; }
    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Storage& array() { return data_; }
    const Storage& array() const { return data_; }

    Scalar& operator[](Index flat) { return data_[flat]; }
    Scalar operator[](Index flat) const { return data_[flat]; }

    template <typename... Ix>
    Scalar& at(Ix... ix) {
        return data_[flat_index({Index(ix)...})];
    }
    template <typename... Ix>
    Scalar at(Ix... ix) const {
        return data_[flat_index({Index(ix)...})];
    }

    Scalar item() const {
        if (size() != 1) shape_error("item() on non-scalar " + shape_str(shape_));
        return data_[0];
    }

    // Views the flat buffer as a rows x cols row-major matrix.
    MatMap mat(Index rows, Index cols) {
        if (rows * cols != size()) shape_error("mat view mismatch");
        return MatMap(data_.data(), rows, cols);
    }
    ConstMatMap mat(Index rows, Index cols) const {
        if (rows * cols != size()) shape_error("mat view mismatch");
        return ConstMatMap(data_.data(), rows, cols);
    }
    // Last axis as columns, everything before flattened into rows.
    MatMap rows_by_last() { return mat(size() / last_dim(), last_dim()); }
    ConstMatMap rows_by_last() const { return mat(size() / last_dim(), last_dim()); }

    Index last_dim() const { return shape_.empty() ? 1 : shape_.back(); }

    bool all_finite() const { return data_.isFinite().all(); }

    TensorT reshaped(Shape shape) const {
        if (shape_size(shape) != size())
            shape_error("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
        return TensorT(std::move(shape), data_);
    }

private:
    Index flat_index(std::initializer_list<Index> ix) const {
        if (Index(ix.size()) != rank()) shape_error("index rank mismatch");
        Index flat = 0, axis = 0;
        for (Index i : ix) {
            if (i < 0 || i >= shape_[size_t(axis)]) throw std::out_of_range("tensor index out of range");
            flat = flat * shape_[size_t(axis)] + i;
            ++axis;
        }
        return flat;
    }

    Shape shape_;
    Storage data_;
};

using Tensor = TensorT<double>;

// ---------------------------------------------------------------------------
// Kernels. All return freshly allocated tensors; inputs are never modified.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    if (!a.same_shape(b)) shape_error("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return TensorT<S>(a.shape(), a.array() + b.array());
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    if (!a.same_shape(b)) shape_error("sub " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return TensorT<S>(a.shape(), a.array() - b.array());
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    if (!a.same_shape(b)) shape_error("mul " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return TensorT<S>(a.shape(), a.array() * b.array());
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    return TensorT<S>(a.shape(), a.array() * c);
}

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
    return TensorT<S>(a.shape(), a.array().max(S(0)));
}

template <typename S>
TensorT<S> abs(const TensorT<S>& a) {
    return TensorT<S>(a.shape(), a.array().abs());
}

template <typename S>
S sum(const TensorT<S>& a) {
    return a.array().sum();
}

// Multiplies x by s broadcast along the last axis; s has x's shape minus it.
template <typename S>
TensorT<S> scale_last(const TensorT<S>& x, const TensorT<S>& s) {
    Shape lead(x.shape().begin(), x.shape().end() - (x.rank() ? 1 : 0));
    if (x.rank() == 0 || s.shape() != lead) shape_error("scale_last shapes");
    TensorT<S> out(x.shape());
    const Index d = x.last_dim();
    for (Index r = 0; r < s.size(); ++r)
        out.array().segment(r * d, d) = x.array().segment(r * d, d) * s[r];
    return out;
}

// matmul: rank2 x rank2, or rank3 x rank3 batched over the leading axis.
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() == 2 && b.rank() == 2) {
        if (a.dim(1) != b.dim(0))
            shape_error("matmul inner " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        TensorT<S> c(Shape{a.dim(0), b.dim(1)});
        c.mat(a.dim(0), b.dim(1)).noalias() = a.mat(a.dim(0), a.dim(1)) * b.mat(b.dim(0), b.dim(1));
        return c;
    }
    if (a.rank() == 3 && b.rank() == 3) {
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
            shape_error("bmm " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        const Index batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
        TensorT<S> c(Shape{batch, m, n});
        for (Index i = 0; i < batch; ++i) {
            typename TensorT<S>::ConstMatMap am(a.data() + i * m * k, m, k);
            typename TensorT<S>::ConstMatMap bm(b.data() + i * k * n, k, n);
            typename TensorT<S>::MatMap cm(c.data() + i * m * n, m, n);
            cm.noalias() = am * bm;
        }
        return c;
    }
    shape_error("matmul wants rank 2x2 or 3x3, got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
}

template <typename S>
TensorT<S> transpose_last2(const TensorT<S>& a) {
    if (a.rank() < 2) shape_error("transpose_last2 rank");
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    const Index rows = a.dim(a.rank() - 2), cols = a.dim(a.rank() - 1);
    const Index batch = a.size() / (rows * cols);
    TensorT<S> out(out_shape);
    for (Index i = 0; i < batch; ++i) {
        typename TensorT<S>::ConstMatMap am(a.data() + i * rows * cols, rows, cols);
        typename TensorT<S>::MatMap om(out.data() + i * rows * cols, cols, rows);
        om = am.transpose();
    }
    return out;
}

template <typename S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<int>& axes) {
    const Index r = a.rank();
    if (Index(axes.size()) != r) shape_error("permute axes rank");
    std::vector<bool> seen(size_t(r), false);
    Shape out_shape(size_t(r), 0);
    for (Index i = 0; i < r; ++i) {
        int ax = axes[size_t(i)];
        if (ax < 0 || ax >= r || seen[size_t(ax)]) shape_error("permute axes invalid");
        seen[size_t(ax)] = true;
        out_shape[size_t(i)] = a.dim(ax);
    }
    TensorT<S> out(out_shape);
    const Shape in_strides = row_major_strides(a.shape());
    const Shape out_strides = row_major_strides(out_shape);
    const Index n = a.size();
    for (Index flat = 0; flat < n; ++flat) {
        Index rem = flat, src = 0;
        for (Index d = 0; d < r; ++d) {
            const Index coord = rem / out_strides[size_t(d)];
            rem -= coord * out_strides[size_t(d)];
            src += coord * in_strides[size_t(axes[size_t(d)])];
        }
        out[flat] = a[src];
    }
    return out;
}

inline std::vector<int> inverse_permutation(const std::vector<int>& axes) {
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[size_t(axes[i])] = int(i);
    return inv;
}

template <typename S>
TensorT<S> concat(std::span<const TensorT<S>* const> parts, int axis) {
    if (parts.empty()) shape_error("concat of nothing");
    const Index r = parts[0]->rank();
    if (axis < 0 || axis >= r) shape_error("concat axis out of bounds");
    Shape out_shape = parts[0]->shape();
    Index total = 0;
    for (const auto* p : parts) {
        if (p->rank() != r) shape_error("concat rank mismatch");
        for (Index d = 0; d < r; ++d)
            if (d != axis && p->dim(d) != out_shape[size_t(d)]) shape_error("concat dim mismatch");
        total += p->dim(axis);
    }
    out_shape[size_t(axis)] = total;
    TensorT<S> out(out_shape);
    // Copy block-wise: outer = dims before axis, inner = dims after (contiguous).
    Index outer = 1;
    for (Index d = 0; d < axis; ++d) outer *= out_shape[size_t(d)];
    Index inner = 1;
    for (Index d = axis + 1; d < r; ++d) inner *= out_shape[size_t(d)];
    Index offset = 0;
    for (const auto* p : parts) {
        const Index rows = p->dim(axis);
        for (Index o = 0; o < outer; ++o) {
            const S* src = p->data() + o * rows * inner;
            S* dst = out.data() + (o * total + offset) * inner;
            std::copy(src, src + rows * inner, dst);
        }
        offset += rows;
    }
    return out;
}

template <typename S>
TensorT<S> concat(std::initializer_list<const TensorT<S>*> parts, int axis) {
    std::vector<const TensorT<S>*> v(parts);
    return concat<S>(std::span<const TensorT<S>* const>(v.data(), v.size()), axis);
}

template <typename S>
TensorT<S> slice(const TensorT<S>& a, int axis, Index start, Index len) {
    const Index r = a.rank();
    if (axis < 0 || axis >= r) shape_error("slice axis out of bounds");
    if (start < 0 || len < 0 || start + len > a.dim(axis)) shape_error("slice range");
    Shape out_shape = a.shape();
    out_shape[size_t(axis)] = len;
    TensorT<S> out(out_shape);
    Index outer = 1;
    for (Index d = 0; d < axis; ++d) outer *= a.dim(d);
    Index inner = 1;
    for (Index d = axis + 1; d < r; ++d) inner *= a.dim(d);
    const Index in_rows = a.dim(axis);
    for (Index o = 0; o < outer; ++o) {
        const S* src = a.data() + (o * in_rows + start) * inner;
        std::copy(src, src + len * inner, out.data() + o * len * inner);
    }
    return out;
}

template <typename S>
TensorT<S> gather(const TensorT<S>& a, int axis, std::span<const Index> idx) {
    const Index r = a.rank();
    if (axis < 0 || axis >= r) shape_error("gather axis out of bounds");
    for (Index i : idx)
        if (i < 0 || i >= a.dim(axis)) throw std::out_of_range("gather index out of range");
    Shape out_shape = a.shape();
    out_shape[size_t(axis)] = Index(idx.size());
    TensorT<S> out(out_shape);
    Index outer = 1;
    for (Index d = 0; d < axis; ++d) outer *= a.dim(d);
    Index inner = 1;
    for (Index d = axis + 1; d < r; ++d) inner *= a.dim(d);
    const Index in_rows = a.dim(axis), out_rows = Index(idx.size());
    for (Index o = 0; o < outer; ++o)
        for (Index k = 0; k < out_rows; ++k) {
            const S* src = a.data() + (o * in_rows + idx[size_t(k)]) * inner;
            std::copy(src, src + inner, out.data() + (o * out_rows + k) * inner);
        }
    return out;
}

// Numerically stable softmax along `axis`; rows of the result sum to 1.
template <typename S>
TensorT<S> softmax(const TensorT<S>& a, int axis) {
    const Index r = a.rank();
    if (r == 0) return TensorT<S>::scalar(S(1));
    if (axis < 0) axis += int(r);
    if (axis < 0 || axis >= r) shape_error("softmax axis out of bounds");
    if (axis != r - 1) {
        std::vector<int> fwd;
        for (Index d = 0; d < r; ++d)
            if (d != axis) fwd.push_back(int(d));
        fwd.push_back(axis);
        return permute(softmax(permute(a, fwd), int(r) - 1), inverse_permutation(fwd));
    }
    const Index cols = a.last_dim(), rows = a.size() / cols;
    TensorT<S> out(a.shape());
    auto in = a.mat(rows, cols);
    auto om = out.mat(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const S m = in.row(i).maxCoeff();
        om.row(i) = (in.row(i).array() - m).exp();
        om.row(i) /= om.row(i).sum();
    }
    return out;
}

}  // namespace stam
