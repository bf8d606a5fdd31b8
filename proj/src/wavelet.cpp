#include "stam/wavelet.hpp"

#include <cmath>

namespace stam {

namespace {

struct FilterPair {
    std::vector<double> lo;  // scaling (analysis)
    std::vector<double> hi;  // wavelet (analysis)
};

FilterPair filters_for(const std::string& basis) {
    const double s2 = std::sqrt(2.0);
    if (basis == "haar") return {{1.0 / s2, 1.0 / s2}, {1.0 / s2, -1.0 / s2}};
    if (basis == "db2") {
        const double s3 = std::sqrt(3.0);
        const double d = 4.0 * s2;
        std::vector<double> lo{(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d};
        std::vector<double> hi(lo.size(), 0.0);
        for (size_t j = 0; j < lo.size(); ++j)
            hi[j] = (j % 2 ? -1.0 : 1.0) * lo[lo.size() - 1 - j];
        return {lo, hi};
    }
    throw std::invalid_argument("unsupported wavelet basis: " + basis);
}

// One analysis step with circular indexing; n must be even.
void analysis_step(const std::vector<double>& x, const FilterPair& f, std::vector<double>& approx,
                   std::vector<double>& detail) {
    const size_t n = x.size(), half = n / 2, taps = f.lo.size();
    approx.assign(half, 0.0);
    detail.assign(half, 0.0);
    for (size_t k = 0; k < half; ++k)
        for (size_t j = 0; j < taps; ++j) {
            const double v = x[(2 * k + j) % n];
            approx[k] += f.lo[j] * v;
            detail[k] += f.hi[j] * v;
        }
}

// Adjoint of the analysis step; exact inverse for orthonormal filters.
std::vector<double> synthesis_step(const std::vector<double>& approx,
                                   const std::vector<double>& detail, const FilterPair& f) {
    const size_t half = approx.size(), n = 2 * half, taps = f.lo.size();
    std::vector<double> x(n, 0.0);
    for (size_t k = 0; k < half; ++k)
        for (size_t j = 0; j < taps; ++j)
            x[(2 * k + j) % n] += f.lo[j] * approx[k] + f.hi[j] * detail[k];
    return x;
}

std::vector<double> reflect_pad(std::span<const double> x, size_t target) {
    std::vector<double> out(x.begin(), x.end());
    const size_t n = x.size();
    out.reserve(target);
    for (size_t i = n; i < target; ++i) {
        const size_t back = i - n;  // reflect off the tail, clamped for tiny inputs
        const size_t src = back < n ? n - 1 - back : 0;
        out.push_back(x[src]);
    }
    return out;
}

}  // namespace

void WaveletConfig::validate() const {
    if (level < 1) throw std::invalid_argument("wavelet level must be >= 1");
    filters_for(basis);
}

WaveletCoeffs dwt(std::span<const double> x, const WaveletConfig& cfg) {
    cfg.validate();
    if (x.empty()) throw std::invalid_argument("dwt on empty sequence");
    const FilterPair f = filters_for(cfg.basis);

    const size_t block = size_t(1) << cfg.level;
    const size_t padded = (x.size() + block - 1) / block * block;
    std::vector<double> cur = reflect_pad(x, padded);

    WaveletCoeffs out;
    out.original_len = Index(x.size());
    std::vector<std::vector<double>> details;
    int done = 0;
    while (done < cfg.level && cur.size() >= f.lo.size() && cur.size() % 2 == 0) {
        std::vector<double> approx, detail;
        analysis_step(cur, f, approx, detail);
        details.push_back(std::move(detail));
        cur = std::move(approx);
        ++done;
    }
    out.level = done;
    out.bands.push_back(std::move(cur));  // coarsest approximation
    for (auto it = details.rbegin(); it != details.rend(); ++it) out.bands.push_back(std::move(*it));
    return out;
}

std::vector<double> iwt(const WaveletCoeffs& coeffs, const WaveletConfig& cfg) {
    const FilterPair f = filters_for(cfg.basis);
    if (coeffs.bands.size() != size_t(coeffs.level) + 1)
        throw std::invalid_argument("wavelet bands do not match level");
    std::vector<double> cur = coeffs.bands[0];
    for (int l = 1; l <= coeffs.level; ++l) cur = synthesis_step(cur, coeffs.bands[size_t(l)], f);
    cur.resize(size_t(coeffs.original_len));
    return cur;
}

void split_low_high(std::span<const double> x, const WaveletConfig& cfg, std::vector<double>& x_low,
                    std::vector<double>& x_high) {
    WaveletCoeffs c = dwt(x, cfg);
    WaveletCoeffs low = c, high = c;
    for (size_t b = 1; b < low.bands.size(); ++b)
        std::fill(low.bands[b].begin(), low.bands[b].end(), 0.0);
    std::fill(high.bands[0].begin(), high.bands[0].end(), 0.0);
    x_low = iwt(low, cfg);
    x_high = iwt(high, cfg);
}

std::pair<Tensor, Tensor> wavelet_split_columns(const Tensor& values_tn, const WaveletConfig& cfg) {
    if (values_tn.rank() != 2) shape_error("wavelet_split_columns wants T x N");
    const Index t_len = values_tn.dim(0), n = values_tn.dim(1);
    Tensor low(values_tn.shape()), high(values_tn.shape());
    std::vector<double> col(size_t(t_len), 0.0), lo, hi;
    for (Index j = 0; j < n; ++j) {
        for (Index t = 0; t < t_len; ++t) col[size_t(t)] = values_tn.at(t, j);
        split_low_high(col, cfg, lo, hi);
        for (Index t = 0; t < t_len; ++t) {
            low.at(t, j) = lo[size_t(t)];
            high.at(t, j) = hi[size_t(t)];
        }
    }
    return {std::move(low), std::move(high)};
}

}  // namespace stam
