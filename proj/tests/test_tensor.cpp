#include "stam/tensor.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"

using namespace stam;
using stamtest::max_abs_diff;
using stamtest::random_tensor;

namespace {

// Independent triple-loop product for checking matmul.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c(Shape{m, n});
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Index l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
            c.at(i, j) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul identity") {
    Rng rng(7);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor eye(Shape{3, 3});
    for (Index i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(max_abs_diff(matmul(eye, a), a) == 0.0);
}

TEST_CASE("matmul hand example") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == 3.0);
    CHECK(c.at(1, 0) == 7.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
}

TEST_CASE("matmul oracle property up to 16x16") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Index m = rng.uniform_int(1, 16), k = rng.uniform_int(1, 16),
                    n = rng.uniform_int(1, 16);
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a({2, 3}), b({2, 3});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("batched matmul agrees with per-slice products") {
    Rng rng(17);
    Tensor a = random_tensor({3, 4, 5}, rng);
    Tensor b = random_tensor({3, 5, 2}, rng);
    Tensor c = matmul(a, b);
    for (Index i = 0; i < 3; ++i) {
        Tensor as = slice(a, 0, i, 1).reshaped({4, 5});
        Tensor bs = slice(b, 0, i, 1).reshaped({5, 2});
        Tensor cs = slice(c, 0, i, 1).reshaped({4, 2});
        CHECK(max_abs_diff(cs, matmul_oracle(as, bs)) < 1e-12);
    }
}

TEST_CASE("softmax of zeros is uniform") {
    Tensor x(Shape{4});
    Tensor y = softmax(x, 0);
    for (Index i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax hand example") {
    Tensor x = Tensor::from({2}, {std::log(3.0), 0.0});
    Tensor y = softmax(x, 0);
    CHECK(y[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
    Rng rng(19);
    Tensor x = random_tensor({5, 7}, rng, -3.0, 3.0);
    Tensor shifted(x.shape(), x.array() + 17.0);
    CHECK(max_abs_diff(softmax(x, 1), softmax(shifted, 1)) < 1e-12);
}

TEST_CASE("softmax rows sum to one on random shapes and axes") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const int rank = int(rng.uniform_int(1, 3));
        Shape s;
        for (int d = 0; d < rank; ++d) s.push_back(rng.uniform_int(1, 6));
        const int axis = int(rng.uniform_int(0, rank - 1));
        Tensor y = softmax(random_tensor(s, rng, -20.0, 20.0), axis);
        CHECK(y.all_finite());
        CHECK((y.array() >= 0.0).all());
        // Sum along the softmax axis must be 1 everywhere.
        Index outer = 1;
        for (int d = 0; d < axis; ++d) outer *= s[size_t(d)];
        Index inner = 1;
        for (int d = axis + 1; d < rank; ++d) inner *= s[size_t(d)];
        const Index ax = s[size_t(axis)];
        for (Index o = 0; o < outer; ++o)
            for (Index in = 0; in < inner; ++in) {
                double total = 0.0;
                for (Index j = 0; j < ax; ++j) total += y[(o * ax + j) * inner + in];
                CHECK(std::fabs(total - 1.0) < 1e-9);
            }
    }
}

TEST_CASE("relu") {
    Tensor x = Tensor::from({3}, {-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
}

TEST_CASE("gather rows") {
    Tensor x = Tensor::from({3, 1}, {1, 2, 3});
    std::vector<Index> idx{2, 0};
    Tensor y = gather(x, 0, std::span<const Index>(idx));
    CHECK(y.at(0, 0) == 3.0);
    CHECK(y.at(1, 0) == 1.0);
}

TEST_CASE("gather rejects bad indices and axes") {
    Tensor x({3, 2});
    std::vector<Index> bad{3};
    CHECK_THROWS_AS(gather(x, 0, std::span<const Index>(bad)), std::out_of_range);
    std::vector<Index> ok{0};
    CHECK_THROWS_AS(gather(x, 2, std::span<const Index>(ok)), std::invalid_argument);
}

TEST_CASE("gather along a non-leading axis") {
    Rng rng(29);
    Tensor x = random_tensor({2, 5, 3}, rng);
    std::vector<Index> idx{4, 1, 1};
    Tensor y = gather(x, 1, std::span<const Index>(idx));
    CHECK(y.shape() == Shape{2, 3, 3});
    for (Index b = 0; b < 2; ++b)
        for (Index k = 0; k < 3; ++k)
            for (Index c = 0; c < 3; ++c) CHECK(y.at(b, k, c) == x.at(b, idx[size_t(k)], c));
}

TEST_CASE("permute round-trips") {
    Rng rng(31);
    Tensor x = random_tensor({2, 3, 4, 5}, rng);
    std::vector<int> axes{2, 0, 3, 1};
    Tensor y = permute(x, axes);
    CHECK(y.shape() == Shape{4, 2, 5, 3});
    CHECK(y.at(1, 0, 2, 1) == x.at(0, 1, 1, 2));
    Tensor back = permute(y, inverse_permutation(axes));
    CHECK(max_abs_diff(back, x) == 0.0);
}

TEST_CASE("concat and slice invert") {
    Rng rng(37);
    Tensor a = random_tensor({2, 3, 2}, rng);
    Tensor b = random_tensor({2, 1, 2}, rng);
    Tensor c = concat<double>({&a, &b}, 1);
    CHECK(c.shape() == Shape{2, 4, 2});
    CHECK(max_abs_diff(slice(c, 1, 0, 3), a) == 0.0);
    CHECK(max_abs_diff(slice(c, 1, 3, 1), b) == 0.0);
}

TEST_CASE("transpose_last2 on batches") {
    Rng rng(41);
    Tensor x = random_tensor({3, 2, 4}, rng);
    Tensor y = transpose_last2(x);
    CHECK(y.shape() == Shape{3, 4, 2});
    CHECK(y.at(2, 3, 1) == x.at(2, 1, 3));
}

TEST_CASE("scale_last broadcasts along the trailing axis") {
    Tensor x = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor s = Tensor::from({2, 2}, {1, 0, 2, -1});
    Tensor y = scale_last(x, s);
    CHECK(y.at(0, 0, 1) == 2.0);
    CHECK(y.at(0, 1, 0) == 0.0);
    CHECK(y.at(1, 0, 1) == 12.0);
    CHECK(y.at(1, 1, 0) == -7.0);
}
