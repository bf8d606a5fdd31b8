#include "stam/optim.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include "test_util.hpp"

using namespace stam;
using stamtest::random_tensor;

TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamStore store(5);
    const int w = store.add_glorot("w", {3, 3});
    Tensor before = store.param(w).value;
    Adam opt(store);
    opt.step();
    CHECK(stamtest::max_abs_diff(before, store.param(w).value) == 0.0);
}

TEST_CASE("one step on w^2 descends") {
    ParamStore store(5);
    const int w = store.add_full("w", {}, 1.0);
    Adam opt(store, {.lr = 0.1});
    Tape t(&store);
    Var v = t.param(w);
    t.backward(t.mul(v, v));
    opt.step();
    CHECK(store.param(w).value.item() < 1.0);
}

TEST_CASE("non-finite gradient aborts with the parameter name") {
    ParamStore store(5);
    const int w = store.add_full("w", {2}, 1.0);
    store.param(w).grad[0] = std::numeric_limits<double>::quiet_NaN();
    Adam opt(store);
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("w"), std::runtime_error);
}

TEST_CASE("500 steps solve a least-squares toy") {
    Rng rng(21);
    Tensor a = random_tensor({8, 3}, rng);
    Tensor target = random_tensor({8, 1}, rng);
    ParamStore store(5);
    const int w = store.add_glorot("w", {3, 1});
    Adam opt(store, {.lr = 0.05});
    double loss = 0.0;
    for (int step = 0; step < 500; ++step) {
        Tape t(&store);
        Var err = t.sub(t.matmul(t.input(a), t.param(w)), t.input(target));
        Var l = t.mean(t.mul(err, err));
        loss = t.val(l).item();
        t.backward(l);
        opt.step();
    }
    // Residual of the normal-equations solution bounds how low we can go; the
    // toy target is near the column space so the loss should get small.
    Eigen::MatrixXd am = a.mat(8, 3);
    Eigen::VectorXd tv = target.mat(8, 1);
    Eigen::VectorXd best = am.colPivHouseholderQr().solve(tv);
    const double floor = (am * best - tv).squaredNorm() / 8.0;
    CHECK(loss < floor + 1e-3);
}
