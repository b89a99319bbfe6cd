#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "seqfreq/errors.hpp"
#include "seqfreq/rng.hpp"

namespace seqfreq {

/// A string over the alphabet {a, b}. Prefixes of it are the model inputs.
class BinarySequence {
public:
    explicit BinarySequence(std::string symbols) : symbols_(std::move(symbols)) {
        if (symbols_.size() < 2) {
            throw ConfigError("BinarySequence: length must be >= 2, got " +
                              std::to_string(symbols_.size()));
        }
        for (char c : symbols_) {
            if (c != 'a' && c != 'b') {
                throw ConfigError(std::string("BinarySequence: invalid symbol '") + c + "'");
            }
        }
    }

    std::size_t size() const { return symbols_.size(); }
    char operator[](std::size_t i) const { return symbols_[i]; }
    const std::string& str() const { return symbols_; }

    /// One-hot index of the symbol at position i: 'a' -> 0, 'b' -> 1.
    std::size_t one_hot_index(std::size_t i) const { return symbols_[i] == 'a' ? 0 : 1; }

private:
    std::string symbols_;
};

/// Dense per-prefix labels y_0..y_{N-1} plus the positions where they flip.
///
/// A change position i means labels[i] != labels[i+1]. Positions are kept
/// sorted; the construction rejects adjacent (overlapping) changes.
struct LabelAssignment {
    std::vector<int> labels;
    std::vector<std::size_t> change_positions;

    static LabelAssignment from_labels(std::vector<int> labels) {
        LabelAssignment la;
        la.labels = std::move(labels);
        for (std::size_t i = 0; i + 1 < la.labels.size(); ++i) {
            if (la.labels[i] != la.labels[i + 1]) la.change_positions.push_back(i);
        }
        la.validate();
        return la;
    }

    static LabelAssignment from_changes(std::size_t n, int initial_label,
                                        std::vector<std::size_t> positions) {
        LabelAssignment la;
        la.labels.resize(n);
        la.change_positions = std::move(positions);
        std::sort(la.change_positions.begin(), la.change_positions.end());
        int cur = initial_label;
        std::size_t next = 0;
        for (std::size_t i = 0; i < n; ++i) {
            la.labels[i] = cur;
            if (next < la.change_positions.size() && la.change_positions[next] == i) {
                cur = 1 - cur;
                ++next;
            }
        }
        la.validate();
        return la;
    }

    std::size_t change_count() const { return change_positions.size(); }

    void validate() const {
        if (labels.size() < 2) throw DataError("LabelAssignment: need >= 2 labels");
        for (int y : labels) {
            if (y != 0 && y != 1) throw DataError("LabelAssignment: labels must be 0/1");
        }
        if (change_positions.empty()) {
            throw DataError("LabelAssignment: at least one label change required");
        }
        for (std::size_t k = 0; k < change_positions.size(); ++k) {
            const std::size_t i = change_positions[k];
            if (i + 1 >= labels.size()) throw DataError("LabelAssignment: change position out of range");
            if (labels[i] == labels[i + 1]) throw DataError("LabelAssignment: inconsistent change position");
            if (k > 0 && change_positions[k - 1] + 1 >= i) {
                throw DataError("LabelAssignment: overlapping label changes");
            }
        }
        // No unlisted changes.
        std::size_t found = 0;
        for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
            if (labels[i] != labels[i + 1]) ++found;
        }
        if (found != change_positions.size()) {
            throw DataError("LabelAssignment: change positions incomplete");
        }
    }
};

/// The sparse train set: one (prefix_length, label) pair for each side of
/// every label change. Prefix s_{:i} has length i+1, so a change at
/// position i contributes entries with lengths i+1 and i+2.
struct TrainDataset {
    struct Entry {
        std::size_t prefix_length;
        int label;

        bool operator==(const Entry&) const = default;
    };

    std::vector<Entry> entries; // sorted by prefix_length
    BinarySequence sequence;

    std::size_t change_count() const { return entries.size() / 2; }
};

/// Each symbol drawn independently and uniformly from {a, b}.
inline BinarySequence sample_sequence(RngStream& rng, std::size_t n) {
    if (n < 2) throw ConfigError("sample_sequence: n must be >= 2");
    std::string s(n, 'a');
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.next_below(2) == 0 ? 'a' : 'b';
    }
    return BinarySequence(std::move(s));
}

/// Draw m uniform in {1..max_changes}, an initial fair-coin label, and m
/// change positions uniform over all subsets of {0..n-2} with pairwise
/// gaps >= 2. The gap constraint is realized through the standard
/// bijection onto unconstrained combinations: pick a_1<...<a_m from
/// {0..n-1-m} and map to a_t + (t-1).
inline LabelAssignment sample_labels(RngStream& rng, std::size_t n, std::size_t max_changes) {
    if (max_changes < 1) throw ConfigError("sample_labels: max_changes must be >= 1");
    if (n < 2 * max_changes + 1) {
        throw ConfigError("sample_labels: n must be >= 2*max_changes + 1 (got n=" +
                          std::to_string(n) + ", max_changes=" + std::to_string(max_changes) + ")");
    }
    const std::size_t m = 1 + static_cast<std::size_t>(rng.next_below(max_changes));
    const int y0 = static_cast<int>(rng.next_below(2));

    // Floyd's sampler: uniform m-subset of {0..k_total-1}.
    const std::size_t k_total = (n - 1) - m + 1;
    std::vector<std::size_t> picked;
    picked.reserve(m);
    for (std::size_t j = k_total - m; j < k_total; ++j) {
        const std::size_t t = static_cast<std::size_t>(rng.next_below(j + 1));
        if (std::find(picked.begin(), picked.end(), t) != picked.end()) {
            picked.push_back(j);
        } else {
            picked.push_back(t);
        }
    }
    std::sort(picked.begin(), picked.end());
    for (std::size_t t = 0; t < picked.size(); ++t) picked[t] += t;

    return LabelAssignment::from_changes(n, y0, std::move(picked));
}

/// D = {(s_{:i}, y_i), (s_{:i+1}, y_{i+1}) | y_i != y_{i+1}}, expressed
/// as prefix lengths.
inline TrainDataset build_dataset(const BinarySequence& seq, const LabelAssignment& la) {
    if (la.labels.size() != seq.size()) {
        throw ConfigError("build_dataset: label count does not match sequence length");
    }
    TrainDataset d{{}, seq};
    d.entries.reserve(2 * la.change_positions.size());
    for (std::size_t i : la.change_positions) {
        d.entries.push_back({i + 1, la.labels[i]});
        d.entries.push_back({i + 2, la.labels[i + 1]});
    }
    return d;
}

/// Recover the dense labels from D by interpolating between change pairs
/// and extending constantly before the first and after the last one.
inline LabelAssignment reconstruct_labels(const TrainDataset& d, std::size_t n) {
    const auto& e = d.entries;
    if (e.empty() || e.size() % 2 != 0) {
        throw DataError("reconstruct_labels: dataset must hold complete change pairs");
    }
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        if (e[k].prefix_length >= e[k + 1].prefix_length) {
            throw DataError("reconstruct_labels: prefix lengths not strictly increasing");
        }
    }
    std::vector<int> labels(n, 0);
    int prev_label = e[0].label;
    std::size_t prev_idx = 0;
    for (std::size_t k = 0; k < e.size(); k += 2) {
        const auto& lo = e[k];
        const auto& hi = e[k + 1];
        if (hi.prefix_length != lo.prefix_length + 1 || hi.label == lo.label) {
            throw DataError("reconstruct_labels: adjacent change pair missing or mislabeled");
        }
        if (lo.prefix_length < 1 || hi.prefix_length > n) {
            throw DataError("reconstruct_labels: prefix length out of range");
        }
        const std::size_t i = lo.prefix_length - 1; // change position
        if (k > 0 && lo.label != prev_label) {
            throw DataError("reconstruct_labels: labels inconsistent between change pairs");
        }
        for (std::size_t idx = prev_idx; idx <= i; ++idx) labels[idx] = lo.label;
        prev_label = hi.label;
        prev_idx = i + 1;
    }
    for (std::size_t idx = prev_idx; idx < n; ++idx) labels[idx] = prev_label;
    return LabelAssignment::from_labels(std::move(labels));
}

/// One header line "<sequence>\t<n>" followed by "<prefix_length>\t<label>"
/// records ordered by prefix length.
inline void write_dataset(std::ostream& os, const TrainDataset& d) {
    os << d.sequence.str() << '\t' << d.sequence.size() << '\n';
    for (const auto& entry : d.entries) {
        os << entry.prefix_length << '\t' << entry.label << '\n';
    }
}

inline TrainDataset read_dataset(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("read_dataset: missing header line");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("read_dataset: malformed header line");
    const std::string seq_str = line.substr(0, tab);
    const std::size_t n = std::stoull(line.substr(tab + 1));
    if (n != seq_str.size()) throw DataError("read_dataset: header length mismatch");

    TrainDataset d{{}, BinarySequence(seq_str)};
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::size_t len = 0;
        int label = -1;
        if (!(row >> len >> label) || (label != 0 && label != 1)) {
            throw DataError("read_dataset: malformed record line: " + line);
        }
        d.entries.push_back({len, label});
    }
    if (!std::is_sorted(d.entries.begin(), d.entries.end(),
                        [](const auto& a, const auto& b) { return a.prefix_length < b.prefix_length; })) {
        throw DataError("read_dataset: records not ordered by prefix length");
    }
    return d;
}

inline void write_dataset_file(const std::string& path, const TrainDataset& d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_dataset_file: cannot open " + path);
    write_dataset(os, d);
    if (!os) throw DataError("write_dataset_file: write failed: " + path);
}

inline TrainDataset read_dataset_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_dataset_file: cannot open " + path);
    return read_dataset(is);
}

} // namespace seqfreq
