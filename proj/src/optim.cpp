#include "stam/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace stam {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
    m_.reserve(size_t(store.count()));
    v_.reserve(size_t(store.count()));
    for (int i = 0; i < store.count(); ++i) {
        m_.emplace_back(store.param(i).value.shape());
        v_.emplace_back(store.param(i).value.shape());
    }
}

void Adam::step() {
    for (int i = 0; i < store_.count(); ++i)
        if (!store_.param(i).grad.all_finite())
            throw std::runtime_error("non-finite gradient in parameter " + store_.param(i).name);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (int i = 0; i < store_.count(); ++i) {
        Parameter& p = store_.param(i);
        auto& m = m_[size_t(i)].array();
        auto& v = v_[size_t(i)].array();
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad.array();
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.array().square();
        p.value.array() -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
        p.grad.array().setZero();
    }
}

}  // namespace stam
