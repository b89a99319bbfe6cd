#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "seqfreq/dataset.hpp"
#include "seqfreq/errors.hpp"
#include "seqfreq/rnn.hpp"

namespace seqfreq {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t epochs = 1000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double log_clamp = 1e-12;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("TrainConfig: beta1 out of (0,1)");
        if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("TrainConfig: beta2 out of (0,1)");
        if (!(adam_epsilon > 0.0)) throw ConfigError("TrainConfig: epsilon must be > 0");
        if (!(log_clamp > 0.0 && log_clamp < 0.5)) throw ConfigError("TrainConfig: log_clamp out of (0,0.5)");
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;

    explicit AdamState(std::size_t param_count) : m(param_count, 0.0), v(param_count, 0.0) {}
};

struct TrainReport {
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> trace; // loss at the start of each completed epoch
    bool diverged = false;
};

inline double clamp_prob(double p, double log_clamp) {
    if (p < log_clamp) return log_clamp;
    if (p > 1.0 - log_clamp) return 1.0 - log_clamp;
    return p;
}

inline double binary_cross_entropy(double p, int label, double log_clamp) {
    const double q = clamp_prob(p, log_clamp);
    return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

/// Mean cross-entropy over the labeled prefixes of D. One forward pass over
/// the sequence serves every prefix; outputs at labeled steps are read off
/// as intermediate states.
inline double train_loss(const RnnModel& model, const TrainDataset& d, double log_clamp = 1e-12) {
    if (d.entries.empty()) throw ConfigError("train_loss: dataset is empty");
    const std::size_t t_max = d.entries.back().prefix_length;
    if (t_max > d.sequence.size()) throw ConfigError("train_loss: prefix exceeds sequence length");

    StepState st = zero_state(model.arch());
    double loss = 0.0;
    std::size_t k = 0;
    for (std::size_t t = 0; t < t_max; ++t) {
        const auto logits = step(model, st, d.sequence[t]);
        while (k < d.entries.size() && d.entries[k].prefix_length == t + 1) {
            const double p = softmax2(logits[0], logits[1])[1];
            loss += binary_cross_entropy(p, d.entries[k].label, log_clamp);
            ++k;
        }
    }
    return loss / static_cast<double>(d.entries.size());
}

struct BackwardResult {
    double loss = 0.0;               // same quantity train_loss reports
    std::vector<double> grads;       // flat, mirrors RnnModel::params()
};

namespace detail {

/// Reusable buffers for one backpropagation-through-time pass.
struct BpttWorkspace {
    std::vector<double> h_traj;  // [layer][t][h]
    std::vector<double> c_traj;  // [layer][t][h], LSTM only
    std::vector<double> gates;   // [layer][t][gates_dim]
    std::vector<double> extra;   // [layer][t][extra_dim]
    std::vector<double> zeros;   // initial state
    std::vector<double> dh;      // [layer][h], gradient flowing into h at current t
    std::vector<double> dc;      // [layer][h]
    std::vector<double> sA, sB, sC; // raw-gate scratch
    std::size_t t_cap = 0;

    void resize(const Architecture& arch, std::size_t t_len) {
        const std::size_t h = arch.hidden_size;
        const std::size_t lg = gates_dim(arch);
        const std::size_t le = extra_dim(arch);
        t_cap = t_len;
        h_traj.resize(arch.num_layers * t_len * h);
        gates.resize(arch.num_layers * t_len * lg);
        extra.resize(arch.num_layers * t_len * le);
        if (arch.kind == CellKind::kLstm) c_traj.resize(arch.num_layers * t_len * h);
        zeros.assign(h, 0.0);
        dh.assign(arch.num_layers * h, 0.0);
        dc.assign(arch.num_layers * h, 0.0);
        sA.resize(4 * h);
        sB.resize(3 * h);
        sC.resize(h);
    }

    std::span<double> h_at(const Architecture& a, std::size_t l, std::size_t t) {
        return {h_traj.data() + (l * t_cap + t) * a.hidden_size, a.hidden_size};
    }
    std::span<double> c_at(const Architecture& a, std::size_t l, std::size_t t) {
        return {c_traj.data() + (l * t_cap + t) * a.hidden_size, a.hidden_size};
    }
    std::span<double> gates_at(const Architecture& a, std::size_t l, std::size_t t) {
        const std::size_t d = gates_dim(a);
        return {gates.data() + (l * t_cap + t) * d, d};
    }
    std::span<double> extra_at(const Architecture& a, std::size_t l, std::size_t t) {
        const std::size_t d = extra_dim(a);
        return {extra.data() + (l * t_cap + t) * d, d};
    }
    std::span<double> dh_at(const Architecture& a, std::size_t l) {
        return {dh.data() + l * a.hidden_size, a.hidden_size};
    }
    std::span<double> dc_at(const Architecture& a, std::size_t l) {
        return {dc.data() + l * a.hidden_size, a.hidden_size};
    }
};

inline void backward_into(const RnnModel& model, const TrainDataset& d, double log_clamp,
                          BpttWorkspace& ws, std::span<double> grads, double& loss_out) {
    if (d.entries.empty()) throw ConfigError("backward: dataset is empty");
    const Architecture& arch = model.arch();
    const std::size_t h = arch.hidden_size;
    const std::size_t layers = arch.num_layers;
    const std::size_t t_len = d.entries.back().prefix_length;
    if (t_len > d.sequence.size()) throw ConfigError("backward: prefix exceeds sequence length");
    if (grads.size() != model.param_count()) throw ConfigError("backward: gradient buffer size mismatch");

    ws.resize(arch, t_len);
    const bool lstm = arch.kind == CellKind::kLstm;

    // Forward with caches; record the label-1 probability at labeled steps.
    std::vector<double> labeled_p(d.entries.size());
    std::array<double, 2> one_hot{};
    std::size_t k = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
        one_hot = {0.0, 0.0};
        one_hot[d.sequence.one_hot_index(t)] = 1.0;
        std::span<const double> x(one_hot.data(), arch.input_dim);
        for (std::size_t l = 0; l < layers; ++l) {
            std::span<const double> h_prev = t > 0 ? ws.h_at(arch, l, t - 1) : std::span<double>(ws.zeros);
            std::span<const double> c_prev;
            std::span<double> c_out;
            if (lstm) {
                c_prev = t > 0 ? ws.c_at(arch, l, t - 1) : std::span<double>(ws.zeros);
                c_out = ws.c_at(arch, l, t);
            }
            cell_forward(model, l, x, h_prev, c_prev, ws.h_at(arch, l, t), c_out,
                         ws.gates_at(arch, l, t), ws.extra_at(arch, l, t));
            x = ws.h_at(arch, l, t);
        }
        const auto logits = decode_logits(model, ws.h_at(arch, layers - 1, t));
        if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
            throw NumericError("backward: non-finite activation at step " + std::to_string(t));
        }
        while (k < d.entries.size() && d.entries[k].prefix_length == t + 1) {
            labeled_p[k] = softmax2(logits[0], logits[1])[1];
            ++k;
        }
    }

    double loss = 0.0;
    for (std::size_t e = 0; e < d.entries.size(); ++e) {
        loss += binary_cross_entropy(labeled_p[e], d.entries[e].label, log_clamp);
    }
    loss /= static_cast<double>(d.entries.size());
    loss_out = loss;

    // Reverse pass.
    std::fill(grads.begin(), grads.end(), 0.0);
    std::fill(ws.dh.begin(), ws.dh.end(), 0.0);
    std::fill(ws.dc.begin(), ws.dc.end(), 0.0);
    const double inv_count = 1.0 / static_cast<double>(d.entries.size());
    std::size_t kr = d.entries.size();

    for (std::size_t t = t_len; t-- > 0;) {
        // Loss injection at labeled prefixes: d loss / d logits for the
        // clamped cross entropy is (p - y)/|D| on logit 1 inside the clamp
        // window and zero outside it.
        while (kr > 0 && d.entries[kr - 1].prefix_length == t + 1) {
            --kr;
            const double p = labeled_p[kr];
            if (p > log_clamp && p < 1.0 - log_clamp) {
                const double gl1 = (p - static_cast<double>(d.entries[kr].label)) * inv_count;
                const std::array<double, 2> dl{-gl1, gl1};
                outer_acc(model.decoder_in(grads), dl, ws.h_at(arch, layers - 1, t));
                matvec_t_acc(model.decoder(), dl, ws.dh_at(arch, layers - 1));
            }
        }

        one_hot = {0.0, 0.0};
        one_hot[d.sequence.one_hot_index(t)] = 1.0;

        for (std::size_t l = layers; l-- > 0;) {
            std::span<const double> x = l == 0 ? std::span<const double>(one_hot.data(), arch.input_dim)
                                               : std::span<const double>(ws.h_at(arch, l - 1, t));
            std::span<const double> h_prev =
                t > 0 ? ws.h_at(arch, l, t - 1) : std::span<double>(ws.zeros);
            std::span<double> dh = ws.dh_at(arch, l);

            switch (arch.kind) {
                case CellKind::kElman: {
                    const auto h_now = ws.h_at(arch, l, t);
                    auto da = std::span<double>(ws.sA.data(), h);
                    for (std::size_t i = 0; i < h; ++i) {
                        da[i] = dh[i] * (1.0 - h_now[i] * h_now[i]);
                    }
                    auto gb_ih = model.b_ih_in(grads, l);
                    auto gb_hh = model.b_hh_in(grads, l);
                    for (std::size_t i = 0; i < h; ++i) {
                        gb_ih[i] += da[i];
                        gb_hh[i] += da[i];
                    }
                    outer_acc(model.w_ih_in(grads, l), da, x);
                    outer_acc(model.w_hh_in(grads, l), da, h_prev);
                    if (l > 0) matvec_t_acc(model.w_ih(l), da, ws.dh_at(arch, l - 1));
                    std::fill(dh.begin(), dh.end(), 0.0);
                    matvec_t_acc(model.w_hh(l), da, dh);
                    break;
                }
                case CellKind::kLstm: {
                    const auto gates = ws.gates_at(arch, l, t);
                    const auto tc = ws.extra_at(arch, l, t);
                    std::span<const double> c_prev =
                        t > 0 ? ws.c_at(arch, l, t - 1) : std::span<double>(ws.zeros);
                    std::span<double> dc = ws.dc_at(arch, l);
                    auto dgates = std::span<double>(ws.sA.data(), 4 * h);
                    for (std::size_t i = 0; i < h; ++i) {
                        const double gi = gates[i];
                        const double gf = gates[h + i];
                        const double gg = gates[2 * h + i];
                        const double go = gates[3 * h + i];
                        const double dci = dc[i] + dh[i] * go * (1.0 - tc[i] * tc[i]);
                        dgates[i] = dci * gg * gi * (1.0 - gi);
                        dgates[h + i] = dci * c_prev[i] * gf * (1.0 - gf);
                        dgates[2 * h + i] = dci * gi * (1.0 - gg * gg);
                        dgates[3 * h + i] = dh[i] * tc[i] * go * (1.0 - go);
                        dc[i] = dci * gf; // becomes dc_{t-1}
                    }
                    auto gb_ih = model.b_ih_in(grads, l);
                    auto gb_hh = model.b_hh_in(grads, l);
                    for (std::size_t i = 0; i < 4 * h; ++i) {
                        gb_ih[i] += dgates[i];
                        gb_hh[i] += dgates[i];
                    }
                    outer_acc(model.w_ih_in(grads, l), dgates, x);
                    outer_acc(model.w_hh_in(grads, l), dgates, h_prev);
                    if (l > 0) matvec_t_acc(model.w_ih(l), dgates, ws.dh_at(arch, l - 1));
                    std::fill(dh.begin(), dh.end(), 0.0);
                    matvec_t_acc(model.w_hh(l), dgates, dh);
                    break;
                }
                case CellKind::kGru: {
                    const auto gates = ws.gates_at(arch, l, t);
                    const auto gh_pre = ws.extra_at(arch, l, t); // hidden side W_hh h + b_hh
                    auto gi_raw = std::span<double>(ws.sA.data(), 3 * h);
                    auto gh_raw = std::span<double>(ws.sB.data(), 3 * h);
                    auto dh_direct = std::span<double>(ws.sC.data(), h);
                    for (std::size_t i = 0; i < h; ++i) {
                        const double r = gates[i];
                        const double z = gates[h + i];
                        const double n = gates[2 * h + i];
                        const double dz = dh[i] * (h_prev[i] - n);
                        const double dn = dh[i] * (1.0 - z);
                        dh_direct[i] = dh[i] * z;
                        const double dgn = dn * (1.0 - n * n);
                        const double dr = dgn * gh_pre[2 * h + i];
                        const double dgr = dr * r * (1.0 - r);
                        const double dgz = dz * z * (1.0 - z);
                        gi_raw[i] = dgr;
                        gi_raw[h + i] = dgz;
                        gi_raw[2 * h + i] = dgn;
                        gh_raw[i] = dgr;
                        gh_raw[h + i] = dgz;
                        gh_raw[2 * h + i] = dgn * r;
                    }
                    auto gb_ih = model.b_ih_in(grads, l);
                    auto gb_hh = model.b_hh_in(grads, l);
                    for (std::size_t i = 0; i < 3 * h; ++i) {
                        gb_ih[i] += gi_raw[i];
                        gb_hh[i] += gh_raw[i];
                    }
                    outer_acc(model.w_ih_in(grads, l), gi_raw, x);
                    outer_acc(model.w_hh_in(grads, l), gh_raw, h_prev);
                    if (l > 0) matvec_t_acc(model.w_ih(l), gi_raw, ws.dh_at(arch, l - 1));
                    std::fill(dh.begin(), dh.end(), 0.0);
                    matvec_t_acc(model.w_hh(l), gh_raw, dh);
                    for (std::size_t i = 0; i < h; ++i) dh[i] += dh_direct[i];
                    break;
                }
            }
        }
    }

    for (double g : grads) {
        if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient");
    }
}

} // namespace detail

/// Exact gradients of train_loss w.r.t. every parameter, by reverse
/// accumulation through all time steps. All labeled prefixes share one
/// forward pass; each labeled position injects its loss gradient.
inline BackwardResult backward(const RnnModel& model, const TrainDataset& d,
                               double log_clamp = 1e-12) {
    BackwardResult result;
    result.grads.assign(model.param_count(), 0.0);
    detail::BpttWorkspace ws;
    detail::backward_into(model, d, log_clamp, ws, result.grads, result.loss);
    return result;
}

/// Bias-corrected Adam update, in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ConfigError("adam_step: size mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * g;
        state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
}

/// Full-batch training loop: backward + adam_step once per epoch.
/// A non-finite loss or gradient stops the run and flags it as diverged.
inline TrainReport fit(RnnModel& model, const TrainDataset& d, const TrainConfig& cfg) {
    cfg.validate();
    AdamState state(model.param_count());
    TrainReport report;
    report.trace.reserve(cfg.epochs);
    std::vector<double> grads(model.param_count(), 0.0);
    detail::BpttWorkspace ws;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0.0;
        try {
            detail::backward_into(model, d, cfg.log_clamp, ws, grads, loss);
        } catch (const NumericError&) {
            report.diverged = true;
            return report;
        }
        if (!std::isfinite(loss)) {
            report.diverged = true;
            return report;
        }
        report.trace.push_back(loss);
        adam_step(model.params(), grads, state, cfg);
    }

    const double final_loss = train_loss(model, d, cfg.log_clamp);
    if (!std::isfinite(final_loss)) {
        report.diverged = true;
        return report;
    }
    report.final_loss = final_loss;
    return report;
}

} // namespace seqfreq
