// Reverse-mode tape over Tensor. One Tape per forward/backward cycle; leaves
// bound to a ParamStore accumulate their gradients there on backward().
#pragma once

#include "stam/rng.hpp"
#include "stam/tensor.hpp"

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace stam {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value, zeroed between steps
};

// Owns all learnable arrays. Creation order is the canonical parameter order
// (checkpoints and the optimizer both iterate it).
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : rng_(seed) {}

    // Uniform in +-sqrt(6 / (fan_in + fan_out)), fans taken from the last two
    // axes (rank-1 shapes use the single axis for both fans).
    int add_glorot(const std::string& name, Shape shape);
    int add_zeros(const std::string& name, Shape shape);
    int add_full(const std::string& name, Shape shape, double v);

    Parameter& param(int id) { return params_.at(size_t(id)); }
    const Parameter& param(int id) const { return params_.at(size_t(id)); }
    int find(const std::string& name) const;
    int count() const { return int(params_.size()); }

    void zero_grads();
    int64_t total_values() const;

private:
    int add(Parameter p);

    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> by_name_;
    Rng rng_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    explicit Tape(ParamStore* store = nullptr) : store_(store) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor value);           // constant leaf, no gradient
    Var param(int param_id);           // learnable leaf, one node per tape
    Var constant(double v) { return input(Tensor::scalar(v)); }

    const Tensor& val(Var v) const { return nodes_.at(size_t(v.id)).value; }
    double item(Var v) const { return val(v).item(); }
    bool needs_grad(Var v) const { return nodes_.at(size_t(v.id)).needs_grad; }
    // Gradient accumulated at v after backward(); zeros if none reached it.
    Tensor grad_of(Var v) const;

    // Seeds d(loss)/d(loss) = 1, runs the recorded ops in reverse, then adds
    // every parameter leaf's gradient into its ParamStore slot.
    void backward(Var scalar_loss);

    // ---- recorded operations ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a) { return scale(a, -1.0); }
    Var scale(Var a, double c);
    Var scale_by(Var x, Var s);        // s is rank-0
    Var scale_last(Var x, Var s);      // s has x's shape minus the last axis
    Var matmul(Var a, Var b);          // 2x2 or batched 3x3
    Var transpose_last2(Var a);
    Var permute(Var a, std::vector<int> axes);
    Var reshape(Var a, Shape shape);
    Var concat(const std::vector<Var>& parts, int axis);
    Var slice(Var a, int axis, Index start, Index len);
    Var gather(Var a, int axis, std::vector<Index> idx);
    Var relu(Var a);
    Var abs(Var a);
    Var softmax(Var a, int axis);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-12);
    Var linear(Var x, Var w, Var b);   // b may be invalid for no bias
    Var sum(Var a);
    Var mean(Var a);
    Var toph_rows(Var a);              // rank-2: zero entries strictly below their row median

private:
    struct Node {
        Tensor value;
        std::optional<Tensor> grad;
        int param_id = -1;
        bool needs_grad = false;
        std::function<void()> backprop;  // empty for leaves
    };

    int push(Tensor value, bool needs_grad, std::function<void()> backprop);
    Node& node(Var v) { return nodes_.at(size_t(v.id)); }
    const Tensor* grad_ptr(Var v) const;
    void accum(Var v, Tensor&& delta);
    void accum(Var v, const Tensor& delta);

    std::vector<Node> nodes_;
    std::unordered_map<int, int> param_vars_;
    ParamStore* store_;
    bool backward_done_ = false;
};

// Two-layer perceptron handles: linear -> relu -> linear.
struct MlpParams {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};
MlpParams add_mlp(ParamStore& store, const std::string& prefix, Index in, Index hidden, Index out);
Var mlp(Tape& t, Var x, const MlpParams& p);

// toph on a plain tensor (shared with the tape op): per row of a rank-2
// matrix, zero entries strictly below the row median (midpoint convention
// for even lengths).
Tensor toph_rows_plain(const Tensor& a);

}  // namespace stam
