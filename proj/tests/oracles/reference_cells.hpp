#pragma once

// Textbook re-statement of each recurrent cell with explicit index loops.
// Shares only the parameter accessors with the production path; every
// multiply, gate, and nonlinearity is re-derived here.

#include <cmath>
#include <cstddef>
#include <vector>

#include "seqfreq/dataset.hpp"
#include "seqfreq/rnn.hpp"

namespace oracles {

namespace detail {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// pre[r] = (W_ih x + b_ih)[r] + carry * ((W_hh h + b_hh)[r]) for all gate rows.
inline std::vector<double> gate_pre(const seqfreq::RnnModel& model, std::size_t layer,
                                    const std::vector<double>& x, const std::vector<double>& h,
                                    bool include_hidden) {
    const auto w_ih = model.w_ih(layer);
    const auto w_hh = model.w_hh(layer);
    const auto b_ih = model.b_ih(layer);
    const auto b_hh = model.b_hh(layer);
    std::vector<double> pre(w_ih.rows, 0.0);
    for (std::size_t r = 0; r < w_ih.rows; ++r) {
        double acc = b_ih[r];
        for (std::size_t c = 0; c < w_ih.cols; ++c) acc += w_ih(r, c) * x[c];
        if (include_hidden) {
            acc += b_hh[r];
            for (std::size_t c = 0; c < w_hh.cols; ++c) acc += w_hh(r, c) * h[c];
        }
        pre[r] = acc;
    }
    return pre;
}

/// The hidden-side half alone: W_hh h + b_hh.
inline std::vector<double> hidden_pre(const seqfreq::RnnModel& model, std::size_t layer,
                                      const std::vector<double>& h) {
    const auto w_hh = model.w_hh(layer);
    const auto b_hh = model.b_hh(layer);
    std::vector<double> pre(w_hh.rows, 0.0);
    for (std::size_t r = 0; r < w_hh.rows; ++r) {
        double acc = b_hh[r];
        for (std::size_t c = 0; c < w_hh.cols; ++c) acc += w_hh(r, c) * h[c];
        pre[r] = acc;
    }
    return pre;
}

} // namespace detail

/// Label-1 probability after every prefix, recomputed from the cell
/// equations.
inline std::vector<double> reference_forward(const seqfreq::RnnModel& model,
                                             const seqfreq::BinarySequence& seq) {
    const auto& arch = model.arch();
    const std::size_t hs = arch.hidden_size;
    std::vector<std::vector<double>> h(arch.num_layers, std::vector<double>(hs, 0.0));
    std::vector<std::vector<double>> c(arch.num_layers, std::vector<double>(hs, 0.0));
    std::vector<double> out;
    out.reserve(seq.size());

    for (std::size_t t = 0; t < seq.size(); ++t) {
        std::vector<double> x(2, 0.0);
        x[seq.one_hot_index(t)] = 1.0;
        for (std::size_t l = 0; l < arch.num_layers; ++l) {
            std::vector<double> h_new(hs);
            switch (arch.kind) {
                case seqfreq::CellKind::kElman: {
                    const auto pre = detail::gate_pre(model, l, x, h[l], true);
                    for (std::size_t i = 0; i < hs; ++i) h_new[i] = std::tanh(pre[i]);
                    break;
                }
                case seqfreq::CellKind::kLstm: {
                    const auto pre = detail::gate_pre(model, l, x, h[l], true);
                    for (std::size_t i = 0; i < hs; ++i) {
                        const double gi = detail::sig(pre[i]);
                        const double gf = detail::sig(pre[hs + i]);
                        const double gg = std::tanh(pre[2 * hs + i]);
                        const double go = detail::sig(pre[3 * hs + i]);
                        c[l][i] = gf * c[l][i] + gi * gg;
                        h_new[i] = go * std::tanh(c[l][i]);
                    }
                    break;
                }
                case seqfreq::CellKind::kGru: {
                    const auto in_pre = detail::gate_pre(model, l, x, h[l], false);
                    const auto hid_pre = detail::hidden_pre(model, l, h[l]);
                    for (std::size_t i = 0; i < hs; ++i) {
                        const double r = detail::sig(in_pre[i] + hid_pre[i]);
                        const double z = detail::sig(in_pre[hs + i] + hid_pre[hs + i]);
                        const double n =
                            std::tanh(in_pre[2 * hs + i] + r * hid_pre[2 * hs + i]);
                        h_new[i] = (1.0 - z) * n + z * h[l][i];
                    }
                    break;
                }
            }
            h[l] = h_new;
            x = h[l];
        }
        const auto dec = model.decoder();
        double l0 = 0.0, l1 = 0.0;
        for (std::size_t i = 0; i < hs; ++i) {
            l0 += dec(0, i) * h[arch.num_layers - 1][i];
            l1 += dec(1, i) * h[arch.num_layers - 1][i];
        }
        out.push_back(std::exp(l1) / (std::exp(l0) + std::exp(l1)));
    }
    return out;
}

} // namespace oracles
