#include "seqfreq/rnn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "oracles/reference_cells.hpp"
#include "seqfreq/dataset.hpp"
#include "seqfreq/errors.hpp"
#include "seqfreq/rng.hpp"

using namespace seqfreq;

TEST(ArchitectureTest, ValidatesFields) {
    Architecture ok{CellKind::kLstm, 2, 8};
    EXPECT_NO_THROW(ok.validate());
    Architecture zero_layers{CellKind::kLstm, 0, 8};
    EXPECT_THROW(zero_layers.validate(), ConfigError);
    Architecture zero_hidden{CellKind::kLstm, 1, 0};
    EXPECT_THROW(zero_hidden.validate(), ConfigError);
    Architecture bad_input{CellKind::kLstm, 1, 8, 3};
    EXPECT_THROW(bad_input.validate(), ConfigError);
}

TEST(ArchitectureTest, DescriptorRoundTrip) {
    const Architecture a{CellKind::kGru, 3, 200};
    EXPECT_EQ(a.descriptor(), "gru-l3-h200");
    EXPECT_EQ(Architecture::from_descriptor("gru-l3-h200"), a);
    EXPECT_EQ(Architecture::from_descriptor("elman-l1-h1"),
              (Architecture{CellKind::kElman, 1, 1}));
    EXPECT_THROW(Architecture::from_descriptor("gru-l3"), ConfigError);
    EXPECT_THROW(Architecture::from_descriptor("vanilla-l1-h4"), ConfigError);
    EXPECT_THROW(Architecture::from_descriptor("gru-l0-h4"), ConfigError);
}

TEST(RnnModelTest, ParameterCounts) {
    // One LSTM layer, hidden 200, input 2: 4*200*(2+200) weights,
    // 2*4*200 biases, 2*200 decoder weights.
    const RnnModel lstm(Architecture{CellKind::kLstm, 1, 200});
    EXPECT_EQ(lstm.param_count(), 163600u);

    // Minimal Elman: 1 + 1 weights, 2 biases, 2 decoder weights... plus
    // the second input column: W_ih is 1x2.
    const RnnModel elman(Architecture{CellKind::kElman, 1, 1});
    EXPECT_EQ(elman.param_count(), 7u);

    // Stacked layers change only the upper layers' input width.
    const RnnModel gru(Architecture{CellKind::kGru, 2, 8});
    const std::size_t layer0 = 3 * 8 * 2 + 3 * 8 * 8 + 2 * 3 * 8;
    const std::size_t layer1 = 3 * 8 * 8 + 3 * 8 * 8 + 2 * 3 * 8;
    EXPECT_EQ(gru.param_count(), layer0 + layer1 + 2 * 8);
}

TEST(RnnModelTest, InitIsBoundedAndSeedDeterministic) {
    const Architecture arch{CellKind::kLstm, 2, 16};
    RngStream rng_a(314);
    RngStream rng_b(314);
    const auto a = init_model(arch, rng_a);
    const auto b = init_model(arch, rng_b);
    const double bound = 1.0 / std::sqrt(16.0);
    for (std::size_t i = 0; i < a.param_count(); ++i) {
        EXPECT_GE(a.params()[i], -bound);
        EXPECT_LT(a.params()[i], bound);
        EXPECT_EQ(a.params()[i], b.params()[i]);
    }
}

TEST(RnnModelTest, ZeroModelOutputsOneHalf) {
    for (const auto kind : {CellKind::kElman, CellKind::kLstm, CellKind::kGru}) {
        const RnnModel model(Architecture{kind, 2, 4});
        StepState st = zero_state(model.arch());
        const auto logits = step(model, st, 'a');
        EXPECT_DOUBLE_EQ(logits[0], 0.0);
        EXPECT_DOUBLE_EQ(logits[1], 0.0);
        const auto p = softmax2(logits[0], logits[1]);
        EXPECT_DOUBLE_EQ(p[1], 0.5);
    }
}

TEST(RnnModelTest, StepRejectsUnknownSymbol) {
    const RnnModel model(Architecture{CellKind::kElman, 1, 2});
    StepState st = zero_state(model.arch());
    EXPECT_THROW(step(model, st, 'c'), ConfigError);
}

TEST(SoftmaxTest, NormalizedAndShiftInvariant) {
    const auto p = softmax2(1.3, -0.4);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
    const auto q = softmax2(1.3 + 100.0, -0.4 + 100.0);
    EXPECT_NEAR(p[0], q[0], 1e-12);
    // Large logits must not overflow.
    const auto r = softmax2(1000.0, 0.0);
    EXPECT_NEAR(r[0], 1.0, 1e-12);
}

// The production forward pass against the plainly-written cell equations,
// for every kind, both single and stacked layers.
TEST(ForwardTest, MatchesReferenceEquations) {
    RngStream rng(2718);
    for (const auto kind : {CellKind::kElman, CellKind::kLstm, CellKind::kGru}) {
        for (std::size_t layers : {1u, 2u, 3u}) {
            const Architecture arch{kind, layers, 5};
            auto local = rng.derive(arch.descriptor());
            const auto model = init_model(arch, local);
            const auto seq = sample_sequence(local, 12);

            const auto got = forward_signal(model, seq);
            const auto want = oracles::reference_forward(model, seq);
            ASSERT_EQ(got.values.size(), want.size());
            for (std::size_t t = 0; t < want.size(); ++t) {
                EXPECT_NEAR(got.values[t], want[t], 1e-12)
                    << arch.descriptor() << " step " << t;
            }
        }
    }
}

TEST(ForwardTest, SignalMatchesRepeatedStep) {
    RngStream rng(99);
    const Architecture arch{CellKind::kGru, 2, 6};
    const auto model = init_model(arch, rng);
    const auto seq = sample_sequence(rng, 20);

    const auto signal = forward_signal(model, seq);
    StepState st = zero_state(arch);
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto logits = step(model, st, seq[t]);
        EXPECT_DOUBLE_EQ(signal.values[t], softmax2(logits[0], logits[1])[1]);
    }
}

TEST(ForwardTest, ProbabilitiesAreProbabilities) {
    RngStream rng(404);
    const Architecture arch{CellKind::kLstm, 2, 8};
    const auto model = init_model(arch, rng);
    const auto seq = sample_sequence(rng, 50);
    for (const double p : forward_signal(model, seq).values) {
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
    }
}

TEST(CheckpointTest, RoundTripIsExact) {
    RngStream rng(17);
    for (const auto kind : {CellKind::kElman, CellKind::kLstm, CellKind::kGru}) {
        const Architecture arch{kind, 2, 7};
        auto local = rng.derive(arch.descriptor());
        const auto model = init_model(arch, local);

        std::stringstream ss;
        save_model(ss, model);
        const auto back = load_model(ss);
        EXPECT_EQ(back.arch(), model.arch());
        ASSERT_EQ(back.param_count(), model.param_count());
        for (std::size_t i = 0; i < model.param_count(); ++i) {
            EXPECT_EQ(back.params()[i], model.params()[i]);
        }
    }
}

TEST(CheckpointTest, RejectsCorruptStreams) {
    RngStream rng(18);
    const auto model = init_model(Architecture{CellKind::kGru, 1, 3}, rng);
    std::stringstream good;
    save_model(good, model);
    const std::string bytes = good.str();

    {
        std::stringstream bad(std::string("XXXXXXXX") + bytes.substr(8));
        EXPECT_THROW(load_model(bad), DataError);
    }
    {
        std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
        EXPECT_THROW(load_model(truncated), DataError);
    }
    {
        std::stringstream empty;
        EXPECT_THROW(load_model(empty), DataError);
    }
}
