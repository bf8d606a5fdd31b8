#include "stam/wavelet.hpp"

#include <doctest.h>

#include <cmath>

#include "stam/rng.hpp"

using namespace stam;

TEST_CASE("constant sequence has zero detail coefficients") {
    std::vector<double> x(32, 4.2);
    WaveletCoeffs c = dwt(x, {.basis = "haar", .level = 3});
    for (size_t b = 1; b < c.bands.size(); ++b)
        for (double v : c.bands[b]) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("haar level-1 hand arithmetic") {
    std::vector<double> x{1.0, 3.0};
    WaveletCoeffs c = dwt(x, {.basis = "haar", .level = 1});
    REQUIRE(c.bands.size() == 2);
    CHECK(c.bands[0][0] == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(c.bands[1][0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("dwt/iwt round-trip") {
    Rng rng(5);
    for (const char* basis : {"haar", "db2"}) {
        for (Index len : {64, 63, 37, 8, 5}) {
            std::vector<double> x(size_t(len), 0.0);
            for (auto& v : x) v = rng.uniform(-10.0, 10.0);
            WaveletConfig cfg{.basis = basis, .level = 2};
            std::vector<double> back = iwt(dwt(x, cfg), cfg);
            REQUIRE(back.size() == x.size());
            for (size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(back[i] - x[i]) < 1e-10);
        }
    }
}

TEST_CASE("unsupported basis is rejected") {
    std::vector<double> x(8, 1.0);
    CHECK_THROWS_AS(dwt(x, {.basis = "sym9", .level = 1}), std::invalid_argument);
    CHECK_THROWS_AS(dwt(x, {.basis = "haar", .level = 0}), std::invalid_argument);
}

TEST_CASE("split_low_high reconstructs exactly") {
    Rng rng(6);
    for (Index len : {64, 50, 31}) {
        std::vector<double> x(size_t(len), 0.0), lo, hi;
        for (auto& v : x) v = rng.uniform(-5.0, 5.0);
        split_low_high(x, {.basis = "haar", .level = 2}, lo, hi);
        for (size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(lo[i] + hi[i] - x[i]) < 1e-10);
    }
}

TEST_CASE("constant input has no high-frequency part") {
    std::vector<double> x(24, -3.5), lo, hi;
    split_low_high(x, {.basis = "haar", .level = 2}, lo, hi);
    for (double v : hi) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("pure alternation has no low-frequency part under level-1 haar") {
    std::vector<double> x(16, 0.0), lo, hi;
    for (size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 == 0) ? 1.0 : -1.0;
    split_low_high(x, {.basis = "haar", .level = 1}, lo, hi);
    for (double v : lo) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("column-wise split matches per-column calls") {
    Rng rng(7);
    Tensor m(Shape{20, 3});
    for (Index i = 0; i < m.size(); ++i) m[i] = rng.uniform(-1.0, 1.0);
    WaveletConfig cfg;
    auto [low, high] = wavelet_split_columns(m, cfg);
    for (Index j = 0; j < 3; ++j) {
        std::vector<double> col(20, 0.0), lo, hi;
        for (Index t = 0; t < 20; ++t) col[size_t(t)] = m.at(t, j);
        split_low_high(col, cfg, lo, hi);
        for (Index t = 0; t < 20; ++t) {
            CHECK(low.at(t, j) == doctest::Approx(lo[size_t(t)]).epsilon(1e-14));
            CHECK(high.at(t, j) == doctest::Approx(hi[size_t(t)]).epsilon(1e-14));
        }
    }
}
