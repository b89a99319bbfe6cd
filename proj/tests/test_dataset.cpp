#include "seqfreq/dataset.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "seqfreq/errors.hpp"
#include "seqfreq/rng.hpp"

using namespace seqfreq;

TEST(BinarySequenceTest, ValidatesAlphabetAndLength) {
    EXPECT_NO_THROW(BinarySequence("abba"));
    EXPECT_THROW(BinarySequence("a"), ConfigError);
    EXPECT_THROW(BinarySequence("abc"), ConfigError);
    EXPECT_THROW(BinarySequence(""), ConfigError);
}

TEST(BinarySequenceTest, OneHotIndex) {
    const BinarySequence s("ab");
    EXPECT_EQ(s.one_hot_index(0), 0u);
    EXPECT_EQ(s.one_hot_index(1), 1u);
}

TEST(LabelAssignmentTest, FromChangesKnownValues) {
    const auto la = LabelAssignment::from_changes(5, 0, {1});
    EXPECT_EQ(la.labels, (std::vector<int>{0, 0, 1, 1, 1}));
    EXPECT_EQ(la.change_count(), 1u);
}

TEST(LabelAssignmentTest, FromLabelsFindsChanges) {
    const auto la = LabelAssignment::from_labels({1, 1, 0, 0, 0, 1});
    EXPECT_EQ(la.change_positions, (std::vector<std::size_t>{1, 4}));
}

TEST(LabelAssignmentTest, RejectsAdjacentChanges) {
    // Changes at 1 and 2 mean labels flip at consecutive boundaries.
    EXPECT_THROW(LabelAssignment::from_changes(6, 0, {1, 2}), DataError);
}

TEST(LabelAssignmentTest, RejectsConstantLabels) {
    EXPECT_THROW(LabelAssignment::from_labels({0, 0, 0}), DataError);
}

TEST(LabelAssignmentTest, RejectsOutOfRangeChange) {
    EXPECT_THROW(LabelAssignment::from_changes(4, 0, {3}), DataError);
}

TEST(BuildDatasetTest, KnownValues) {
    // Changes at positions 1 and 6 with initial label 0.
    const BinarySequence seq("aababbaa");
    const auto la = LabelAssignment::from_changes(8, 0, {1, 6});
    const auto d = build_dataset(seq, la);
    ASSERT_EQ(d.entries.size(), 4u);
    EXPECT_EQ(d.entries[0], (TrainDataset::Entry{2, 0}));
    EXPECT_EQ(d.entries[1], (TrainDataset::Entry{3, 1}));
    EXPECT_EQ(d.entries[2], (TrainDataset::Entry{7, 1}));
    EXPECT_EQ(d.entries[3], (TrainDataset::Entry{8, 0}));
    EXPECT_EQ(d.change_count(), 2u);
}

TEST(BuildDatasetTest, RejectsLengthMismatch) {
    const BinarySequence seq("abab");
    const auto la = LabelAssignment::from_changes(5, 0, {1});
    EXPECT_THROW(build_dataset(seq, la), ConfigError);
}

TEST(ReconstructLabelsTest, RoundTripsRandomInstances) {
    RngStream rng(2024);
    for (int rep = 0; rep < 200; ++rep) {
        auto local = rng.derive("case/" + std::to_string(rep));
        const std::size_t n = 11 + local.next_below(90);
        const std::size_t max_changes = 1 + local.next_below(5);
        if (n < 2 * max_changes + 1) continue;
        const auto seq = sample_sequence(local, n);
        const auto la = sample_labels(local, n, max_changes);
        const auto d = build_dataset(seq, la);
        const auto back = reconstruct_labels(d, n);
        EXPECT_EQ(back.labels, la.labels);
        EXPECT_EQ(back.change_positions, la.change_positions);
    }
}

TEST(ReconstructLabelsTest, RejectsMalformedSets) {
    const BinarySequence seq("aaaaaa");
    TrainDataset odd{{{2, 0}}, seq};
    EXPECT_THROW(reconstruct_labels(odd, 6), DataError);

    TrainDataset gap{{{2, 0}, {4, 1}}, seq};
    EXPECT_THROW(reconstruct_labels(gap, 6), DataError);

    TrainDataset same_label{{{2, 0}, {3, 0}}, seq};
    EXPECT_THROW(reconstruct_labels(same_label, 6), DataError);

    // Second pair disagrees with the label implied by the first.
    TrainDataset inconsistent{{{2, 0}, {3, 1}, {5, 0}, {6, 1}}, seq};
    EXPECT_THROW(reconstruct_labels(inconsistent, 6), DataError);
}

TEST(SampleLabelsTest, RespectsPreconditions) {
    RngStream rng(1);
    EXPECT_THROW(sample_labels(rng, 10, 0), ConfigError);
    EXPECT_THROW(sample_labels(rng, 10, 5), ConfigError); // needs n >= 11
    EXPECT_NO_THROW(sample_labels(rng, 11, 5));
}

TEST(SampleLabelsTest, SmallestCaseEnumeratesAllOutcomes) {
    // n = 3, max_changes = 1: change position in {0, 1}, initial label in
    // {0, 1} -> exactly 4 possible assignments, all reachable.
    RngStream rng(77);
    std::set<std::vector<int>> seen;
    for (int i = 0; i < 400; ++i) {
        auto local = rng.derive("i/" + std::to_string(i));
        seen.insert(sample_labels(local, 3, 1).labels);
    }
    const std::set<std::vector<int>> expected{
        {0, 1, 1}, {1, 0, 0}, {0, 0, 1}, {1, 1, 0}};
    EXPECT_EQ(seen, expected);
}

TEST(SampleLabelsTest, ChangeCountIsUniform) {
    RngStream rng(31337);
    std::map<std::size_t, int> counts;
    const int reps = 100000;
    for (int i = 0; i < reps; ++i) {
        auto local = rng.derive("i/" + std::to_string(i));
        counts[sample_labels(local, 100, 5).change_count()] += 1;
    }
    ASSERT_EQ(counts.size(), 5u);
    for (const auto& [m, count] : counts) {
        EXPECT_GE(m, 1u);
        EXPECT_LE(m, 5u);
        EXPECT_NEAR(static_cast<double>(count) / reps, 0.2, 0.01);
    }
}

TEST(SampleLabelsTest, GapConstrainedPositionsAreUniform) {
    // n = 6, conditioned on m = 2: valid position pairs from {0..4} with
    // gap >= 2 are (0,2) (0,3) (0,4) (1,3) (1,4) (2,4) -> 6 equally likely.
    RngStream rng(555);
    std::map<std::vector<std::size_t>, int> counts;
    int total = 0;
    for (int i = 0; i < 200000; ++i) {
        auto local = rng.derive("i/" + std::to_string(i));
        const auto la = sample_labels(local, 6, 2);
        if (la.change_count() != 2) continue;
        counts[la.change_positions] += 1;
        ++total;
    }
    ASSERT_EQ(counts.size(), 6u);
    for (const auto& [positions, count] : counts) {
        ASSERT_EQ(positions.size(), 2u);
        EXPECT_GE(positions[1], positions[0] + 2);
        EXPECT_NEAR(static_cast<double>(count) / total, 1.0 / 6.0, 0.01);
    }
}

TEST(SampleSequenceTest, SymbolsAreFair) {
    RngStream rng(9);
    int a_count = 0;
    const int reps = 1000;
    for (int i = 0; i < reps; ++i) {
        auto local = rng.derive("i/" + std::to_string(i));
        const auto seq = sample_sequence(local, 100);
        for (std::size_t j = 0; j < seq.size(); ++j) {
            if (seq[j] == 'a') ++a_count;
        }
    }
    const double freq = static_cast<double>(a_count) / (reps * 100.0);
    EXPECT_GE(freq, 0.45);
    EXPECT_LE(freq, 0.55);
}

TEST(DatasetIoTest, RoundTripIsExact) {
    RngStream rng(12);
    const auto seq = sample_sequence(rng, 40);
    const auto la = sample_labels(rng, 40, 4);
    const auto d = build_dataset(seq, la);

    std::stringstream ss;
    write_dataset(ss, d);
    const auto back = read_dataset(ss);
    EXPECT_EQ(back.sequence.str(), d.sequence.str());
    EXPECT_EQ(back.entries, d.entries);
}

TEST(DatasetIoTest, RejectsMalformedInput) {
    {
        std::stringstream ss("abab");
        EXPECT_THROW(read_dataset(ss), DataError); // header missing the count
    }
    {
        std::stringstream ss("abab\t3\n");
        EXPECT_THROW(read_dataset(ss), DataError); // count disagrees with text
    }
    {
        std::stringstream ss("abab\t4\n2\t7\n");
        EXPECT_THROW(read_dataset(ss), DataError); // label outside {0,1}
    }
    {
        std::stringstream ss("abab\t4\n3\t0\n2\t1\n");
        EXPECT_THROW(read_dataset(ss), DataError); // out of order
    }
}
