#pragma once

// Direct evaluation of the transform definition, kept deliberately separate
// from the production FFT: a plain O(N^2) double sum using std::exp on the
// complex argument.

#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracles {

inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& f) {
    const std::size_t n = f.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) {
            const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) *
                                 static_cast<double>(j) / static_cast<double>(n);
            acc += f[j] * std::exp(std::complex<double>(0.0, angle));
        }
        out[k] = acc;
    }
    return out;
}

} // namespace oracles
