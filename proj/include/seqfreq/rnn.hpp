#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqfreq/dataset.hpp"
#include "seqfreq/errors.hpp"
#include "seqfreq/matrix.hpp"
#include "seqfreq/rng.hpp"

namespace seqfreq {

enum class CellKind : std::uint8_t { kElman = 0, kLstm = 1, kGru = 2 };

/// Rows of the stacked gate block per hidden unit.
/// Gate ordering is fixed: LSTM blocks are [i, f, g, o], GRU blocks are
/// [r, z, n]. Serialized models rely on this ordering.
inline std::size_t gate_multiplier(CellKind kind) {
    switch (kind) {
        case CellKind::kElman: return 1;
        case CellKind::kLstm: return 4;
        case CellKind::kGru: return 3;
    }
    throw ConfigError("gate_multiplier: unknown cell kind");
}

inline std::string_view kind_name(CellKind kind) {
    switch (kind) {
        case CellKind::kElman: return "elman";
        case CellKind::kLstm: return "lstm";
        case CellKind::kGru: return "gru";
    }
    throw ConfigError("kind_name: unknown cell kind");
}

inline CellKind parse_kind(std::string_view name) {
    if (name == "elman") return CellKind::kElman;
    if (name == "lstm") return CellKind::kLstm;
    if (name == "gru") return CellKind::kGru;
    throw ConfigError("parse_kind: unknown cell kind '" + std::string(name) + "'");
}

struct Architecture {
    CellKind kind = CellKind::kElman;
    std::size_t num_layers = 1;
    std::size_t hidden_size = 1;
    std::size_t input_dim = 2; // one-hot over {a, b}

    void validate() const {
        if (num_layers < 1) throw ConfigError("Architecture: num_layers must be >= 1");
        if (hidden_size < 1) throw ConfigError("Architecture: hidden_size must be >= 1");
        if (input_dim != 2) throw ConfigError("Architecture: input_dim must be 2");
    }

    std::size_t layer_input_dim(std::size_t layer) const {
        return layer == 0 ? input_dim : hidden_size;
    }

    /// e.g. "lstm-l2-h200"
    std::string descriptor() const {
        return std::string(kind_name(kind)) + "-l" + std::to_string(num_layers) + "-h" +
               std::to_string(hidden_size);
    }

    static Architecture from_descriptor(std::string_view desc) {
        const auto d1 = desc.find("-l");
        const auto d2 = desc.find("-h", d1 == std::string_view::npos ? 0 : d1 + 2);
        if (d1 == std::string_view::npos || d2 == std::string_view::npos) {
            throw ConfigError("Architecture: bad descriptor '" + std::string(desc) + "'");
        }
        Architecture a;
        a.kind = parse_kind(desc.substr(0, d1));
        a.num_layers = std::stoull(std::string(desc.substr(d1 + 2, d2 - d1 - 2)));
        a.hidden_size = std::stoull(std::string(desc.substr(d2 + 2)));
        a.validate();
        return a;
    }

    bool operator==(const Architecture&) const = default;
};

/// RNN with a bias-free 2 x hidden linear decoder on the top layer.
///
/// Parameters live in one flat array; per layer the order is W_ih, W_hh,
/// b_ih, b_hh (matrices row-major), with the decoder last. Each gate block
/// carries two bias vectors. init_model fills the array front to back, so
/// this order also fixes which random draw lands where.
class RnnModel {
public:
    explicit RnnModel(Architecture arch) : arch_(arch) {
        arch_.validate();
        const std::size_t h = arch_.hidden_size;
        const std::size_t g = gate_multiplier(arch_.kind);
        std::size_t off = 0;
        layer_off_.reserve(arch_.num_layers);
        for (std::size_t l = 0; l < arch_.num_layers; ++l) {
            const std::size_t in = arch_.layer_input_dim(l);
            LayerOffsets lo{};
            lo.w_ih = off; off += g * h * in;
            lo.w_hh = off; off += g * h * h;
            lo.b_ih = off; off += g * h;
            lo.b_hh = off; off += g * h;
            layer_off_.push_back(lo);
        }
        decoder_off_ = off;
        off += 2 * h;
        params_.assign(off, 0.0);
    }

    const Architecture& arch() const { return arch_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    MatrixView w_ih(std::size_t l) {
        return {params_.data() + layer_off_[l].w_ih, gate_rows(), arch_.layer_input_dim(l)};
    }
    MatrixView w_hh(std::size_t l) {
        return {params_.data() + layer_off_[l].w_hh, gate_rows(), arch_.hidden_size};
    }
    std::span<double> b_ih(std::size_t l) { return {params_.data() + layer_off_[l].b_ih, gate_rows()}; }
    std::span<double> b_hh(std::size_t l) { return {params_.data() + layer_off_[l].b_hh, gate_rows()}; }
    MatrixView decoder() { return {params_.data() + decoder_off_, 2, arch_.hidden_size}; }

    ConstMatrixView w_ih(std::size_t l) const {
        return {params_.data() + layer_off_[l].w_ih, gate_rows(), arch_.layer_input_dim(l)};
    }
    ConstMatrixView w_hh(std::size_t l) const {
        return {params_.data() + layer_off_[l].w_hh, gate_rows(), arch_.hidden_size};
    }
    std::span<const double> b_ih(std::size_t l) const {
        return {params_.data() + layer_off_[l].b_ih, gate_rows()};
    }
    std::span<const double> b_hh(std::size_t l) const {
        return {params_.data() + layer_off_[l].b_hh, gate_rows()};
    }
    ConstMatrixView decoder() const { return {params_.data() + decoder_off_, 2, arch_.hidden_size}; }

    // Views into an external flat buffer laid out like params() — used for
    // gradient accumulators that mirror the parameter block.
    MatrixView w_ih_in(std::span<double> buf, std::size_t l) const {
        return {buf.data() + layer_off_[l].w_ih, gate_rows(), arch_.layer_input_dim(l)};
    }
    MatrixView w_hh_in(std::span<double> buf, std::size_t l) const {
        return {buf.data() + layer_off_[l].w_hh, gate_rows(), arch_.hidden_size};
    }
    std::span<double> b_ih_in(std::span<double> buf, std::size_t l) const {
        return {buf.data() + layer_off_[l].b_ih, gate_rows()};
    }
    std::span<double> b_hh_in(std::span<double> buf, std::size_t l) const {
        return {buf.data() + layer_off_[l].b_hh, gate_rows()};
    }
    MatrixView decoder_in(std::span<double> buf) const {
        return {buf.data() + decoder_off_, 2, arch_.hidden_size};
    }

private:
    struct LayerOffsets {
        std::size_t w_ih, w_hh, b_ih, b_hh;
    };

    std::size_t gate_rows() const { return gate_multiplier(arch_.kind) * arch_.hidden_size; }

    Architecture arch_;
    std::vector<LayerOffsets> layer_off_;
    std::size_t decoder_off_ = 0;
    std::vector<double> params_;
};

/// Every weight and bias uniform in [-1/sqrt(hidden), +1/sqrt(hidden)].
inline RnnModel init_model(const Architecture& arch, RngStream& rng) {
    RnnModel model(arch);
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden_size));
    for (double& p : model.params()) p = rng.next_uniform(-bound, bound);
    return model;
}

struct OutputSignal {
    std::vector<double> values; // p[n] = probability of label 1 for prefix s_{:n}
};

inline std::array<double, 2> softmax2(double l0, double l1) {
    const double m = l0 > l1 ? l0 : l1;
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

/// Per-layer hidden state (plus cell state for LSTM).
struct StepState {
    std::vector<std::vector<double>> h;
    std::vector<std::vector<double>> c;
};

inline StepState zero_state(const Architecture& arch) {
    StepState st;
    st.h.assign(arch.num_layers, std::vector<double>(arch.hidden_size, 0.0));
    if (arch.kind == CellKind::kLstm) {
        st.c.assign(arch.num_layers, std::vector<double>(arch.hidden_size, 0.0));
    }
    return st;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Gate cache sizes for one (layer, step) cell evaluation.
/// gates: LSTM [i,f,g,o] (post-activation), GRU [r,z,n] (post-activation).
/// extra: LSTM tanh(c_t); GRU the hidden-side pre-activations W_hh h + b_hh
/// (whose n chunk enters the candidate through the reset gate).
inline std::size_t gates_dim(const Architecture& arch) {
    return arch.kind == CellKind::kElman ? 0 : gate_multiplier(arch.kind) * arch.hidden_size;
}

inline std::size_t extra_dim(const Architecture& arch) {
    switch (arch.kind) {
        case CellKind::kElman: return 0;
        case CellKind::kLstm: return arch.hidden_size;
        case CellKind::kGru: return 3 * arch.hidden_size;
    }
    return 0;
}

/// One layer, one time step. Output spans must not alias the inputs.
/// gates/extra receive the cached values backward needs (see above).
inline void cell_forward(const RnnModel& model, std::size_t layer, std::span<const double> x,
                         std::span<const double> h_prev, std::span<const double> c_prev,
                         std::span<double> h_out, std::span<double> c_out,
                         std::span<double> gates, std::span<double> extra) {
    const Architecture& arch = model.arch();
    const std::size_t h = arch.hidden_size;
    switch (arch.kind) {
        case CellKind::kElman: {
            const auto b_ih = model.b_ih(layer);
            const auto b_hh = model.b_hh(layer);
            for (std::size_t i = 0; i < h; ++i) h_out[i] = b_ih[i] + b_hh[i];
            matvec_acc(model.w_ih(layer), x, h_out);
            matvec_acc(model.w_hh(layer), h_prev, h_out);
            for (std::size_t i = 0; i < h; ++i) h_out[i] = std::tanh(h_out[i]);
            break;
        }
        case CellKind::kLstm: {
            const auto b_ih = model.b_ih(layer);
            const auto b_hh = model.b_hh(layer);
            for (std::size_t i = 0; i < 4 * h; ++i) gates[i] = b_ih[i] + b_hh[i];
            matvec_acc(model.w_ih(layer), x, gates);
            matvec_acc(model.w_hh(layer), h_prev, gates);
            for (std::size_t i = 0; i < h; ++i) {
                const double gi = sigmoid(gates[i]);
                const double gf = sigmoid(gates[h + i]);
                const double gg = std::tanh(gates[2 * h + i]);
                const double go = sigmoid(gates[3 * h + i]);
                gates[i] = gi;
                gates[h + i] = gf;
                gates[2 * h + i] = gg;
                gates[3 * h + i] = go;
                const double c = gf * c_prev[i] + gi * gg;
                c_out[i] = c;
                const double tc = std::tanh(c);
                extra[i] = tc;
                h_out[i] = go * tc;
            }
            break;
        }
        case CellKind::kGru: {
            const auto b_ih = model.b_ih(layer);
            const auto b_hh = model.b_hh(layer);
            for (std::size_t i = 0; i < 3 * h; ++i) gates[i] = b_ih[i];
            for (std::size_t i = 0; i < 3 * h; ++i) extra[i] = b_hh[i];
            matvec_acc(model.w_ih(layer), x, gates);
            matvec_acc(model.w_hh(layer), h_prev, extra);
            for (std::size_t i = 0; i < h; ++i) {
                const double r = sigmoid(gates[i] + extra[i]);
                const double z = sigmoid(gates[h + i] + extra[h + i]);
                const double n = std::tanh(gates[2 * h + i] + r * extra[2 * h + i]);
                gates[i] = r;
                gates[h + i] = z;
                gates[2 * h + i] = n;
                h_out[i] = (1.0 - z) * n + z * h_prev[i];
            }
            break;
        }
    }
}

inline std::array<double, 2> decode_logits(const RnnModel& model, std::span<const double> h_top) {
    const auto dec = model.decoder();
    std::array<double, 2> logits{0.0, 0.0};
    matvec_acc(dec, h_top, logits);
    return logits;
}

} // namespace detail

/// Feed one symbol through every layer; returns the decoder logits.
/// State is advanced in place.
inline std::array<double, 2> step(const RnnModel& model, StepState& st, char symbol) {
    if (symbol != 'a' && symbol != 'b') {
        throw ConfigError(std::string("step: invalid symbol '") + symbol + "'");
    }
    const Architecture& arch = model.arch();
    const std::size_t h = arch.hidden_size;
    std::array<double, 2> one_hot{0.0, 0.0};
    one_hot[symbol == 'a' ? 0 : 1] = 1.0;

    std::vector<double> gates(detail::gates_dim(arch));
    std::vector<double> extra(detail::extra_dim(arch));
    std::vector<double> h_new(h), c_new;
    if (arch.kind == CellKind::kLstm) c_new.resize(h);

    std::span<const double> x(one_hot.data(), arch.input_dim);
    for (std::size_t l = 0; l < arch.num_layers; ++l) {
        std::span<const double> c_prev =
            arch.kind == CellKind::kLstm ? std::span<const double>(st.c[l]) : std::span<const double>();
        detail::cell_forward(model, l, x, st.h[l], c_prev, h_new, c_new, gates, extra);
        st.h[l].swap(h_new);
        if (arch.kind == CellKind::kLstm) st.c[l].swap(c_new);
        x = st.h[l];
    }

    const auto logits = detail::decode_logits(model, st.h[arch.num_layers - 1]);
    if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
        throw NumericError("step: non-finite activation");
    }
    return logits;
}

/// Runs the model over all prefixes from the zero state;
/// p[n] = softmax(logits_n)[1].
inline OutputSignal forward_signal(const RnnModel& model, const BinarySequence& seq) {
    StepState st = zero_state(model.arch());
    OutputSignal out;
    out.values.reserve(seq.size());
    for (std::size_t n = 0; n < seq.size(); ++n) {
        const auto logits = step(model, st, seq[n]);
        out.values.push_back(softmax2(logits[0], logits[1])[1]);
    }
    return out;
}

// --- checkpoint container ------------------------------------------------
//
// Binary layout: magic "SFRNNv01", kind u8, bias variant u8 (2 = two bias
// vectors per gate block), num_layers u32, hidden u32, input_dim u32,
// param_count u64, then raw little-endian doubles in parameter order.

namespace detail {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'R', 'N', 'N', 'v', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated stream");
    return value;
}

} // namespace detail

inline void save_model(std::ostream& os, const RnnModel& model) {
    os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::write_pod(os, static_cast<std::uint8_t>(model.arch().kind));
    detail::write_pod(os, static_cast<std::uint8_t>(2)); // bias variant
    detail::write_pod(os, static_cast<std::uint32_t>(model.arch().num_layers));
    detail::write_pod(os, static_cast<std::uint32_t>(model.arch().hidden_size));
    detail::write_pod(os, static_cast<std::uint32_t>(model.arch().input_dim));
    detail::write_pod(os, static_cast<std::uint64_t>(model.param_count()));
    os.write(reinterpret_cast<const char*>(model.params().data()),
             static_cast<std::streamsize>(model.param_count() * sizeof(double)));
    if (!os) throw DataError("save_model: write failed");
}

inline RnnModel load_model(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || !std::equal(std::begin(magic), std::end(magic), detail::kCheckpointMagic)) {
        throw DataError("load_model: bad magic");
    }
    const auto kind_code = detail::read_pod<std::uint8_t>(is);
    if (kind_code > 2) throw DataError("load_model: unknown cell kind");
    const auto bias_variant = detail::read_pod<std::uint8_t>(is);
    if (bias_variant != 2) throw DataError("load_model: unsupported bias variant");
    Architecture arch;
    arch.kind = static_cast<CellKind>(kind_code);
    arch.num_layers = detail::read_pod<std::uint32_t>(is);
    arch.hidden_size = detail::read_pod<std::uint32_t>(is);
    arch.input_dim = detail::read_pod<std::uint32_t>(is);
    arch.validate();
    const auto count = detail::read_pod<std::uint64_t>(is);
    RnnModel model(arch);
    if (count != model.param_count()) throw DataError("load_model: parameter count mismatch");
    is.read(reinterpret_cast<char*>(model.params().data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw DataError("load_model: truncated parameter block");
    for (double p : model.params()) {
        if (!std::isfinite(p)) throw DataError("load_model: non-finite parameter");
    }
    return model;
}

inline void save_model_file(const std::string& path, const RnnModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_model_file: cannot open " + path);
    save_model(os, model);
}

inline RnnModel load_model_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_model_file: cannot open " + path);
    return load_model(is);
}

} // namespace seqfreq
