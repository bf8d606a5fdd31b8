// Multilevel discrete wavelet transform with periodic convolution per level.
// Inputs whose length is not a multiple of 2^level are reflect-padded up to
// one before analysis, and synthesis output is truncated back, so
// iwt(dwt(x)) == x holds for every length.
#pragma once

#include "stam/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace stam {

struct WaveletConfig {
    std::string basis = "haar";  // "haar" or "db2"
    int level = 2;

    void validate() const;
};

struct WaveletCoeffs {
    // bands[0] is the coarsest approximation; bands[1..] are details from
    // coarsest to finest.
    std::vector<std::vector<double>> bands;
    Index original_len = 0;
    int level = 0;  // effective level (may stop early on very short inputs)
};

WaveletCoeffs dwt(std::span<const double> x, const WaveletConfig& cfg);
std::vector<double> iwt(const WaveletCoeffs& coeffs, const WaveletConfig& cfg);

// x_low = synthesis with details zeroed; x_high = synthesis with the
// approximation zeroed. x_low + x_high == x by linearity.
void split_low_high(std::span<const double> x, const WaveletConfig& cfg,
                    std::vector<double>& x_low, std::vector<double>& x_high);

// Column-wise split of a T x N series; returns {low, high} both T x N.
std::pair<Tensor, Tensor> wavelet_split_columns(const Tensor& values_tn, const WaveletConfig& cfg);

}  // namespace stam
