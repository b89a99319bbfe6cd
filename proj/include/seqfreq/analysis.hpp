#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "seqfreq/dataset.hpp"
#include "seqfreq/errors.hpp"
#include "seqfreq/rnn.hpp"
#include "seqfreq/training.hpp"

namespace seqfreq {

struct Spectrum {
    std::vector<std::complex<double>> coefficients; // F[0..N-1]

    std::size_t size() const { return coefficients.size(); }
};

struct DominantFrequency {
    double omega = 0.0;     // 2*pi*k_max / N, in (0, pi]
    std::size_t k_max = 0;  // in {1..N/2}
};

struct TestLoss {
    double value = 0.0;
    std::size_t test_index_count = 0;
};

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform. invert=false computes
/// sum_n a[n] e^{-2*pi*i*n*k/M}; invert=true applies the conjugate kernel
/// and the 1/M scale.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool invert) {
    const std::size_t m = a.size();
    for (std::size_t i = 1, j = 0; i < m; ++i) {
        std::size_t bit = m >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= m; len <<= 1) {
        const double ang = (invert ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        for (std::size_t base = 0; base < m; base += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto w = std::polar(1.0, ang * static_cast<double>(j));
                const auto u = a[base + j];
                const auto v = a[base + j + len / 2] * w;
                a[base + j] = u + v;
                a[base + j + len / 2] = u - v;
            }
        }
    }
    if (invert) {
        for (auto& z : a) z /= static_cast<double>(m);
    }
}

/// e^{-i*pi*n^2/N}, with the square reduced mod 2N so the trig argument
/// stays in [0, 2*pi).
inline std::complex<double> chirp(std::uint64_t n, std::uint64_t big_n) {
    const std::uint64_t e = (n * n) % (2 * big_n);
    return std::polar(1.0, -std::numbers::pi * static_cast<double>(e) / static_cast<double>(big_n));
}

/// Arbitrary-length transform via the chirp-z identity
/// nk = (n^2 + k^2 - (k-n)^2)/2, evaluated as one power-of-two convolution.
inline std::vector<std::complex<double>> dft_bluestein(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    std::vector<std::complex<double>> a(m), b(m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = chirp(i, n);
        a[i] = x[i] * c;
        b[i] = std::conj(c);
        if (i > 0) b[m - i] = b[i];
    }
    fft_pow2(a, false);
    fft_pow2(b, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_pow2(a, true);

    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = chirp(k, n) * a[k];
    return out;
}

} // namespace detail

/// Discrete Fourier transform of the full signal:
/// F[k] = sum_n f[n] e^{-i*(2*pi/N)*k*n}.
inline Spectrum dft(const OutputSignal& signal) {
    const std::size_t n = signal.values.size();
    if (n < 2) throw ConfigError("dft: signal length must be >= 2");

    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = {signal.values[i], 0.0};
    if (detail::is_pow2(n)) {
        detail::fft_pow2(a, false);
        return Spectrum{std::move(a)};
    }
    return Spectrum{detail::dft_bluestein(a)};
}

/// Location of the largest-magnitude coefficient over k in {1..N/2}, with
/// ties going to the smallest k. The DC term is excluded, so constant
/// offsets cannot win. A spectrum that is flat zero across the considered
/// band (relative to its own scale) has no meaningful peak and yields
/// nullopt.
inline std::optional<DominantFrequency> dominant_frequency(const OutputSignal& signal) {
    const std::size_t n = signal.values.size();
    if (n < 2) throw ConfigError("dominant_frequency: signal length must be >= 2");
    if (n % 2 != 0) throw ConfigError("dominant_frequency: signal length must be even");

    const Spectrum spec = dft(signal);
    std::size_t k_best = 0;
    double best = 0.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double mag = std::abs(spec.coefficients[k]);
        if (mag > best) {
            best = mag;
            k_best = k;
        }
    }
    const double scale = std::max(std::abs(spec.coefficients[0]), 1.0);
    if (k_best == 0 || best <= 1e-12 * scale) return std::nullopt;

    DominantFrequency result;
    result.k_max = k_best;
    result.omega = 2.0 * std::numbers::pi * static_cast<double>(k_best) / static_cast<double>(n);
    return result;
}

/// Mean binary cross-entropy over exactly the prefix indices the training
/// set leaves out, with the same probability clamp training uses. Signal
/// value p[i] is the model's label-1 probability for the prefix of length
/// i+1, scored against label y_i.
inline TestLoss test_cross_entropy(const OutputSignal& signal, const LabelAssignment& la,
                                   const TrainDataset& d, double log_clamp = 1e-12) {
    const std::size_t n = signal.values.size();
    if (n != la.labels.size()) throw ConfigError("test_cross_entropy: signal/label length mismatch");

    std::vector<bool> in_train(n, false);
    for (const auto& e : d.entries) {
        if (e.prefix_length < 1 || e.prefix_length > n) {
            throw ConfigError("test_cross_entropy: train entry out of range");
        }
        in_train[e.prefix_length - 1] = true;
    }

    TestLoss result;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_train[i]) continue;
        result.value += binary_cross_entropy(signal.values[i], la.labels[i], log_clamp);
        result.test_index_count += 1;
    }
    if (result.test_index_count == 0) {
        throw ConfigError("test_cross_entropy: no test indices remain");
    }
    result.value /= static_cast<double>(result.test_index_count);
    return result;
}

} // namespace seqfreq
