#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "seqfreq/analysis.hpp"
#include "seqfreq/dataset.hpp"
#include "seqfreq/errors.hpp"
#include "seqfreq/rng.hpp"
#include "seqfreq/rnn.hpp"
#include "seqfreq/training.hpp"

namespace seqfreq {

struct ExperimentConfig {
    std::size_t n_datasets = 500;
    std::size_t seq_length = 100;
    std::size_t max_changes = 5;
    std::size_t seeds_per_dataset = 10;
    std::vector<Architecture> grid;
    TrainConfig train;
    std::uint64_t root_seed = 0;
    std::size_t worker_count = 1;
    bool share_datasets = true; // one dataset per id, reused by every grid point

    void validate() const {
        if (n_datasets < 1) throw ConfigError("ExperimentConfig: n_datasets must be >= 1");
        if (seeds_per_dataset < 1) throw ConfigError("ExperimentConfig: seeds_per_dataset must be >= 1");
        if (worker_count < 1) throw ConfigError("ExperimentConfig: worker_count must be >= 1");
        if (grid.empty()) throw ConfigError("ExperimentConfig: grid must be nonempty");
        if (max_changes < 1) throw ConfigError("ExperimentConfig: max_changes must be >= 1");
        if (seq_length < 2 * max_changes + 1) {
            throw ConfigError("ExperimentConfig: seq_length must be >= 2*max_changes + 1");
        }
        if (seq_length % 2 != 0) {
            throw ConfigError("ExperimentConfig: seq_length must be even for spectral analysis");
        }
        for (const auto& a : grid) a.validate();
        train.validate();
    }
};

inline void to_json(nlohmann::json& j, const Architecture& a) {
    j = nlohmann::json{{"kind", kind_name(a.kind)},
                       {"num_layers", a.num_layers},
                       {"hidden_size", a.hidden_size}};
}

inline void from_json(const nlohmann::json& j, Architecture& a) {
    a.kind = parse_kind(j.at("kind").get<std::string>());
    a.num_layers = j.at("num_layers").get<std::size_t>();
    a.hidden_size = j.at("hidden_size").get<std::size_t>();
    a.input_dim = 2;
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
    j = nlohmann::json{{"learning_rate", t.learning_rate}, {"epochs", t.epochs},
                       {"adam_beta1", t.adam_beta1},       {"adam_beta2", t.adam_beta2},
                       {"adam_epsilon", t.adam_epsilon},   {"log_clamp", t.log_clamp}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
    t.learning_rate = j.at("learning_rate").get<double>();
    t.epochs = j.at("epochs").get<std::size_t>();
    t.adam_beta1 = j.at("adam_beta1").get<double>();
    t.adam_beta2 = j.at("adam_beta2").get<double>();
    t.adam_epsilon = j.at("adam_epsilon").get<double>();
    t.log_clamp = j.at("log_clamp").get<double>();
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"n_datasets", c.n_datasets},
                       {"seq_length", c.seq_length},
                       {"max_changes", c.max_changes},
                       {"seeds_per_dataset", c.seeds_per_dataset},
                       {"grid", c.grid},
                       {"train", c.train},
                       {"root_seed", c.root_seed},
                       {"worker_count", c.worker_count},
                       {"share_datasets", c.share_datasets}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.n_datasets = j.at("n_datasets").get<std::size_t>();
    c.seq_length = j.at("seq_length").get<std::size_t>();
    c.max_changes = j.at("max_changes").get<std::size_t>();
    c.seeds_per_dataset = j.at("seeds_per_dataset").get<std::size_t>();
    c.grid = j.at("grid").get<std::vector<Architecture>>();
    c.train = j.at("train").get<TrainConfig>();
    c.root_seed = j.at("root_seed").get<std::uint64_t>();
    c.worker_count = j.at("worker_count").get<std::size_t>();
    c.share_datasets = j.value("share_datasets", true);
}

/// Outcome of one (dataset, architecture, seed) training cell. Metric fields
/// are empty when the run diverged; omega/k_max are additionally empty when
/// the output spectrum has no usable peak.
struct RunRecord {
    std::size_t dataset_id = 0;
    std::size_t seed = 0;
    CellKind kind = CellKind::kElman;
    std::size_t num_layers = 1;
    std::size_t hidden_size = 1;
    std::size_t m = 0; // label changes in the dataset
    std::optional<double> train_loss;
    std::optional<double> test_loss;
    std::optional<std::size_t> k_max;
    std::optional<double> omega_dom;
    bool diverged = false;
};

struct AggregateRow {
    std::size_t dataset_id = 0;
    CellKind kind = CellKind::kElman;
    std::size_t num_layers = 1;
    std::size_t hidden_size = 1;
    std::size_t m = 0;
    std::size_t seed_count = 0;
    std::size_t diverged_count = 0;
    std::optional<double> median_train_loss;
    std::optional<double> median_test_loss;
    std::optional<double> median_omega_dom;
    bool flagged = false; // every seed diverged; excluded from histograms
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string{};
}

inline std::string fmt_opt_count(const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : std::string{};
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::optional<double> parse_opt_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

inline std::optional<std::size_t> parse_opt_count(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return static_cast<std::size_t>(std::stoull(s));
}

} // namespace detail

inline constexpr const char* kRecordsHeader =
    "dataset_id,seed,arch,num_layers,hidden_size,m,train_loss,test_loss,k_max,omega_dom,diverged";

inline std::string record_to_csv(const RunRecord& r) {
    std::string out;
    out += std::to_string(r.dataset_id);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += kind_name(r.kind);
    out += ',';
    out += std::to_string(r.num_layers);
    out += ',';
    out += std::to_string(r.hidden_size);
    out += ',';
    out += std::to_string(r.m);
    out += ',';
    out += detail::fmt_opt(r.train_loss);
    out += ',';
    out += detail::fmt_opt(r.test_loss);
    out += ',';
    out += detail::fmt_opt_count(r.k_max);
    out += ',';
    out += detail::fmt_opt(r.omega_dom);
    out += ',';
    out += r.diverged ? '1' : '0';
    return out;
}

inline std::optional<RunRecord> parse_record(const std::string& line) {
    const auto f = detail::split_csv(line);
    if (f.size() != 11) return std::nullopt;
    try {
        RunRecord r;
        r.dataset_id = std::stoull(f[0]);
        r.seed = std::stoull(f[1]);
        r.kind = parse_kind(f[2]);
        r.num_layers = std::stoull(f[3]);
        r.hidden_size = std::stoull(f[4]);
        r.m = std::stoull(f[5]);
        r.train_loss = detail::parse_opt_double(f[6]);
        r.test_loss = detail::parse_opt_double(f[7]);
        r.k_max = detail::parse_opt_count(f[8]);
        r.omega_dom = detail::parse_opt_double(f[9]);
        if (f[10] != "0" && f[10] != "1") return std::nullopt;
        r.diverged = f[10] == "1";
        return r;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

/// Loads every well-formed record row; malformed rows (for example a line
/// torn by a crash mid-append) are skipped so a partial store stays usable.
inline std::vector<RunRecord> read_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open records file: " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line.rfind("dataset_id", 0) == 0) continue;
        }
        if (line.empty()) continue;
        if (auto r = parse_record(line)) out.push_back(*r);
    }
    return out;
}

namespace detail {

inline auto record_sort_key(const RunRecord& r) {
    return std::make_tuple(r.dataset_id, std::string(kind_name(r.kind)), r.num_layers,
                           r.hidden_size, r.seed);
}

inline void sort_records(std::vector<RunRecord>& records) {
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        return record_sort_key(a) < record_sort_key(b);
    });
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write file: " + tmp);
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace detail

inline void write_records_csv(const std::filesystem::path& path, std::vector<RunRecord> records) {
    detail::sort_records(records);
    std::string content = kRecordsHeader;
    content += '\n';
    for (const auto& r : records) {
        content += record_to_csv(r);
        content += '\n';
    }
    detail::atomic_write_text(path, content);
}

/// Lower-middle median: for even counts, the smaller of the two central
/// order statistics. Values are copied so callers keep their ordering.
inline double median_lower(std::vector<double> values) {
    if (values.empty()) throw ConfigError("median_lower: empty input");
    std::sort(values.begin(), values.end());
    return values[(values.size() - 1) / 2];
}

/// Per (dataset, grid point) medians over the non-diverged seeds.
inline std::vector<AggregateRow> aggregate_medians(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ConfigError("aggregate_medians: empty record store");
    using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t>;
    std::map<Key, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        groups[Key{kind_name(r.kind), r.num_layers, r.hidden_size, r.dataset_id}].push_back(&r);
    }
    std::vector<AggregateRow> rows;
    rows.reserve(groups.size());
    for (const auto& [key, members] : groups) {
        AggregateRow row;
        row.dataset_id = std::get<3>(key);
        row.kind = members.front()->kind;
        row.num_layers = std::get<1>(key);
        row.hidden_size = std::get<2>(key);
        row.m = members.front()->m;
        row.seed_count = members.size();
        std::vector<double> tr, te, om;
        for (const RunRecord* r : members) {
            if (r->diverged) {
                row.diverged_count += 1;
                continue;
            }
            if (r->train_loss) tr.push_back(*r->train_loss);
            if (r->test_loss) te.push_back(*r->test_loss);
            if (r->omega_dom) om.push_back(*r->omega_dom);
        }
        if (!tr.empty()) row.median_train_loss = median_lower(tr);
        if (!te.empty()) row.median_test_loss = median_lower(te);
        if (!om.empty()) row.median_omega_dom = median_lower(om);
        row.flagged = row.diverged_count == row.seed_count;
        rows.push_back(row);
    }
    return rows;
}

enum class HistField { kTestLoss, kOmegaDom };

struct Histogram {
    HistField field = HistField::kTestLoss;
    std::vector<double> edges;               // bins + 1 values
    std::vector<std::string> arch_labels;    // one per grid point seen
    std::vector<std::vector<std::size_t>> counts; // [arch][bin]
};

/// Equal-width histogram of aggregate medians, one count row per grid point.
/// Loss bins cover [0, max(observed max, ln 2)]; omega bins cover [0, pi]
/// with the last edge landing exactly on pi. Flagged rows and rows without
/// a value for the field are skipped.
inline Histogram histogram(const std::vector<AggregateRow>& rows, HistField field,
                           std::size_t bins) {
    if (bins < 2) throw ConfigError("histogram: bins must be >= 2");
    Histogram h;
    h.field = field;

    auto value_of = [field](const AggregateRow& r) -> std::optional<double> {
        return field == HistField::kTestLoss ? r.median_test_loss : r.median_omega_dom;
    };

    double lo = 0.0;
    double hi;
    if (field == HistField::kOmegaDom) {
        hi = std::numbers::pi;
    } else {
        hi = std::numbers::ln2;
        for (const auto& r : rows) {
            if (r.flagged) continue;
            if (const auto v = value_of(r)) hi = std::max(hi, *v);
        }
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
    h.edges[bins] = hi;

    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> arch_index;
    for (const auto& r : rows) {
        if (r.flagged) continue;
        const auto v = value_of(r);
        if (!v) continue;
        Architecture a{r.kind, r.num_layers, r.hidden_size};
        const auto key = std::make_tuple(std::string(kind_name(r.kind)), r.num_layers, r.hidden_size);
        auto [it, inserted] = arch_index.try_emplace(key, h.arch_labels.size());
        if (inserted) {
            h.arch_labels.push_back(a.descriptor());
            h.counts.emplace_back(bins, 0);
        }
        auto bin = static_cast<std::size_t>(
            std::max(0.0, std::floor((*v - lo) / width)));
        bin = std::min(bin, bins - 1);
        h.counts[it->second][bin] += 1;
    }
    return h;
}

struct ScatterRow {
    CellKind kind = CellKind::kElman;
    std::size_t num_layers = 1;
    std::size_t hidden_size = 1;
    std::size_t m = 0;
    std::size_t dataset_id = 0;
    std::size_t seed = 0;
    std::optional<double> train_loss;
    std::optional<double> test_loss;
    std::optional<double> omega_dom;
    std::optional<std::size_t> k_max;
    std::optional<double> median_test_loss; // the dataset's median, repeated per seed
    double baseline_loss = std::numbers::ln2;
};

/// Every raw seed value, grouped by label-change count and ordered within
/// each group by the dataset's median test loss. Groups whose every seed
/// diverged sort last within their m-group.
inline std::vector<ScatterRow> scatter_rows(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ConfigError("scatter_rows: empty record store");
    const auto aggregates = aggregate_medians(records);
    using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t>;
    std::map<Key, const AggregateRow*> medians;
    for (const auto& a : aggregates) {
        medians[Key{kind_name(a.kind), a.num_layers, a.hidden_size, a.dataset_id}] = &a;
    }
    std::vector<ScatterRow> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        ScatterRow s;
        s.kind = r.kind;
        s.num_layers = r.num_layers;
        s.hidden_size = r.hidden_size;
        s.m = r.m;
        s.dataset_id = r.dataset_id;
        s.seed = r.seed;
        s.train_loss = r.train_loss;
        s.test_loss = r.test_loss;
        s.omega_dom = r.omega_dom;
        s.k_max = r.k_max;
        s.median_test_loss =
            medians.at(Key{kind_name(r.kind), r.num_layers, r.hidden_size, r.dataset_id})
                ->median_test_loss;
        rows.push_back(s);
    }
    std::sort(rows.begin(), rows.end(), [](const ScatterRow& a, const ScatterRow& b) {
        const double ma = a.median_test_loss.value_or(std::numeric_limits<double>::infinity());
        const double mb = b.median_test_loss.value_or(std::numeric_limits<double>::infinity());
        return std::make_tuple(std::string(kind_name(a.kind)), a.num_layers, a.hidden_size, a.m,
                               ma, a.dataset_id, a.seed) <
               std::make_tuple(std::string(kind_name(b.kind)), b.num_layers, b.hidden_size, b.m,
                               mb, b.dataset_id, b.seed);
    });
    return rows;
}

inline void write_aggregate_csv(const std::filesystem::path& path,
                                const std::vector<AggregateRow>& rows) {
    std::string content =
        "dataset_id,arch,num_layers,hidden_size,m,seed_count,diverged_count,"
        "median_train_loss,median_test_loss,median_omega_dom,flagged\n";
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const AggregateRow& a, const AggregateRow& b) {
        return std::make_tuple(std::string(kind_name(a.kind)), a.num_layers, a.hidden_size,
                               a.dataset_id) <
               std::make_tuple(std::string(kind_name(b.kind)), b.num_layers, b.hidden_size,
                               b.dataset_id);
    });
    for (const auto& r : sorted) {
        content += std::to_string(r.dataset_id);
        content += ',';
        content += kind_name(r.kind);
        content += ',';
        content += std::to_string(r.num_layers);
        content += ',';
        content += std::to_string(r.hidden_size);
        content += ',';
        content += std::to_string(r.m);
        content += ',';
        content += std::to_string(r.seed_count);
        content += ',';
        content += std::to_string(r.diverged_count);
        content += ',';
        content += detail::fmt_opt(r.median_train_loss);
        content += ',';
        content += detail::fmt_opt(r.median_test_loss);
        content += ',';
        content += detail::fmt_opt(r.median_omega_dom);
        content += ',';
        content += r.flagged ? '1' : '0';
        content += '\n';
    }
    detail::atomic_write_text(path, content);
    nlohmann::json meta{{"median_convention", "lower-middle"},
                        {"medians_over", "non-diverged seeds only"}};
    detail::atomic_write_text(path.parent_path() / "aggregate_meta.json", meta.dump(2) + "\n");
}

inline void write_histogram_csv(const std::filesystem::path& path, const Histogram& h) {
    std::string content = "bin_lo,bin_hi";
    for (const auto& label : h.arch_labels) {
        content += ',';
        content += detail::csv_quote(label);
    }
    content += '\n';
    const std::size_t bins = h.edges.size() - 1;
    for (std::size_t b = 0; b < bins; ++b) {
        content += detail::fmt_double(h.edges[b]);
        content += ',';
        content += detail::fmt_double(h.edges[b + 1]);
        for (std::size_t a = 0; a < h.arch_labels.size(); ++a) {
            content += ',';
            content += std::to_string(h.counts[a][b]);
        }
        content += '\n';
    }
    detail::atomic_write_text(path, content);
}

inline void write_scatter_csv(const std::filesystem::path& path,
                              const std::vector<ScatterRow>& rows) {
    std::string content =
        "arch,num_layers,hidden_size,m,dataset_id,seed,train_loss,test_loss,"
        "omega_dom,k_max,median_test_loss,baseline_loss\n";
    for (const auto& r : rows) {
        content += kind_name(r.kind);
        content += ',';
        content += std::to_string(r.num_layers);
        content += ',';
        content += std::to_string(r.hidden_size);
        content += ',';
        content += std::to_string(r.m);
        content += ',';
        content += std::to_string(r.dataset_id);
        content += ',';
        content += std::to_string(r.seed);
        content += ',';
        content += detail::fmt_opt(r.train_loss);
        content += ',';
        content += detail::fmt_opt(r.test_loss);
        content += ',';
        content += detail::fmt_opt(r.omega_dom);
        content += ',';
        content += detail::fmt_opt_count(r.k_max);
        content += ',';
        content += detail::fmt_opt(r.median_test_loss);
        content += ',';
        content += detail::fmt_double(r.baseline_loss);
        content += '\n';
    }
    detail::atomic_write_text(path, content);
}

/// Per-arch run diagnostics: divergence and degenerate-spectrum counts that
/// the medians silently exclude.
inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<RunRecord>& records) {
    using Key = std::tuple<std::string, std::size_t, std::size_t>;
    struct Counts {
        std::size_t total = 0, diverged = 0, degenerate = 0;
    };
    std::map<Key, Counts> table;
    for (const auto& r : records) {
        auto& c = table[Key{kind_name(r.kind), r.num_layers, r.hidden_size}];
        c.total += 1;
        if (r.diverged) c.diverged += 1;
        else if (!r.omega_dom) c.degenerate += 1;
    }
    std::string content = "arch,num_layers,hidden_size,total_runs,diverged_runs,degenerate_spectra\n";
    for (const auto& [key, c] : table) {
        content += std::get<0>(key);
        content += ',';
        content += std::to_string(std::get<1>(key));
        content += ',';
        content += std::to_string(std::get<2>(key));
        content += ',';
        content += std::to_string(c.total);
        content += ',';
        content += std::to_string(c.diverged);
        content += ',';
        content += std::to_string(c.degenerate);
        content += '\n';
    }
    detail::atomic_write_text(path, content);
}

struct RunOptions {
    bool resume = false;
    std::size_t max_cells = 0; // 0 = no limit; otherwise stop after this many cells
    bool save_models = false;
    bool save_traces = false;  // include the full per-epoch loss trace in reports
};

struct RunSummary {
    std::size_t total_cells = 0;
    std::size_t already_done = 0;
    std::size_t executed = 0;
    std::size_t failed = 0;
    bool complete = false;
};

namespace detail {

struct DatasetInstance {
    std::size_t dataset_id = 0;
    std::string file_stem; // datasets/<stem>.tsv
    BinarySequence sequence{"ab"};
    LabelAssignment labels;
    TrainDataset train{{}, BinarySequence("ab")};
};

inline std::string dataset_label(std::size_t i) { return "ds/" + std::to_string(i); }

inline std::string cell_label(std::size_t i, const Architecture& a, std::size_t seed) {
    return "ds/" + std::to_string(i) + "/arch/" + a.descriptor() + "/seed/" + std::to_string(seed);
}

inline std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

inline DatasetInstance make_dataset(const ExperimentConfig& cfg, const RngStream& root,
                                    std::size_t id, const Architecture* per_arch) {
    DatasetInstance ds;
    ds.dataset_id = id;
    std::string label = dataset_label(id);
    ds.file_stem = "ds_" + zero_pad(id, 5);
    if (per_arch != nullptr) {
        label += "/arch/" + per_arch->descriptor();
        ds.file_stem += "_" + per_arch->descriptor();
    }
    RngStream rng = root.derive(label);
    ds.sequence = sample_sequence(rng, cfg.seq_length);
    ds.labels = sample_labels(rng, cfg.seq_length, cfg.max_changes);
    ds.train = build_dataset(ds.sequence, ds.labels);
    return ds;
}

struct Cell {
    std::size_t ds_index = 0;   // into the dataset table
    std::size_t grid_index = 0;
    std::size_t seed = 0;
};

inline RunRecord evaluate_cell(const ExperimentConfig& cfg, const RngStream& root,
                               const DatasetInstance& ds, const Architecture& arch,
                               std::size_t seed, TrainReport* report_out, RnnModel** model_out) {
    RunRecord rec;
    rec.dataset_id = ds.dataset_id;
    rec.seed = seed;
    rec.kind = arch.kind;
    rec.num_layers = arch.num_layers;
    rec.hidden_size = arch.hidden_size;
    rec.m = ds.labels.change_count();

    RngStream rng = root.derive(cell_label(ds.dataset_id, arch, seed));
    auto model = std::make_unique<RnnModel>(init_model(arch, rng));
    TrainReport report = fit(*model, ds.train, cfg.train);
    rec.diverged = report.diverged;
    if (!report.diverged) {
        rec.train_loss = report.final_loss;
        const OutputSignal signal = forward_signal(*model, ds.sequence);
        rec.test_loss = test_cross_entropy(signal, ds.labels, ds.train, cfg.train.log_clamp).value;
        if (const auto dom = dominant_frequency(signal)) {
            rec.k_max = dom->k_max;
            rec.omega_dom = dom->omega;
        }
    }
    if (report_out != nullptr) *report_out = std::move(report);
    if (model_out != nullptr) *model_out = model.release();
    return rec;
}

inline nlohmann::json report_json(const RunRecord& rec, const Architecture& arch,
                                  const TrainReport& report, bool with_trace) {
    nlohmann::json j{{"dataset_id", rec.dataset_id},
                     {"seed", rec.seed},
                     {"arch", arch.descriptor()},
                     {"diverged", rec.diverged}};
    if (rec.diverged) j["final_loss"] = nullptr;
    else j["final_loss"] = report.final_loss;
    if (with_trace) j["trace"] = report.trace;
    return j;
}

inline auto report_sort_key(const nlohmann::json& j) {
    return std::make_tuple(j.at("dataset_id").get<std::size_t>(),
                           j.at("arch").get<std::string>(),
                           j.at("seed").get<std::size_t>());
}

} // namespace detail

/// Reads SEQFREQ_WORKERS if set; otherwise the configured count.
inline std::size_t effective_worker_count(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("SEQFREQ_WORKERS")) {
        try {
            const auto n = static_cast<std::size_t>(std::stoull(env));
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        std::fprintf(stderr, "warning: ignoring invalid SEQFREQ_WORKERS value '%s'\n", env);
    }
    return cfg.worker_count;
}

/// Generates the dataset files and config.json for a store without training
/// anything. run_experiment performs the same generation implicitly.
inline void generate_store(const ExperimentConfig& cfg, const std::filesystem::path& store_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(store_dir / "datasets");
    nlohmann::json j = cfg;
    detail::atomic_write_text(store_dir / "config.json", j.dump(2) + "\n");

    const RngStream root(cfg.root_seed);
    const std::size_t dataset_copies = cfg.share_datasets ? 1 : cfg.grid.size();
    for (std::size_t i = 0; i < cfg.n_datasets; ++i) {
        for (std::size_t g = 0; g < dataset_copies; ++g) {
            const Architecture* arch = cfg.share_datasets ? nullptr : &cfg.grid[g];
            const auto ds = detail::make_dataset(cfg, root, i, arch);
            const auto path = store_dir / "datasets" / (ds.file_stem + ".tsv");
            if (fs::exists(path)) {
                const auto on_disk = read_dataset_file(path.string());
                if (on_disk.sequence.str() != ds.sequence.str() ||
                    on_disk.entries != ds.train.entries) {
                    throw DataError("store dataset mismatch: " + path.string());
                }
            } else {
                write_dataset_file(path.string(), ds.train);
            }
        }
    }
}

/// Executes the sweep. Each (dataset, grid point, seed) cell trains one
/// model and appends one record; records already present in the store are
/// not recomputed, which is all --resume does. When every cell is present
/// and none failed, records.csv and reports.jsonl are rewritten in
/// canonical order so equal configurations produce byte-identical stores.
inline RunSummary run_experiment(const ExperimentConfig& cfg_in,
                                 const std::filesystem::path& store_dir,
                                 const RunOptions& options = {}) {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = cfg_in;
    cfg.validate();

    const auto config_path = store_dir / "config.json";
    if (options.resume && fs::exists(config_path)) {
        std::ifstream in(config_path);
        nlohmann::json stored = nlohmann::json::parse(in);
        nlohmann::json requested = cfg;
        auto a = stored;
        auto b = requested;
        a.erase("worker_count");
        b.erase("worker_count");
        if (a != b) {
            throw ConfigError("resume: store config does not match (only worker_count may differ)");
        }
    }

    if (cfg.n_datasets * cfg.seeds_per_dataset >= 5000) {
        std::fprintf(stderr,
                     "warning: research-scale sweep (%zu datasets x %zu seeds); "
                     "expect on the order of days of CPU time\n",
                     cfg.n_datasets, cfg.seeds_per_dataset);
    }
    for (const auto& a : cfg.grid) {
        if (a.hidden_size >= 2000) {
            std::fprintf(stderr,
                         "warning: hidden size %zu is research scale; "
                         "expect very long training times\n",
                         a.hidden_size);
            break;
        }
    }

    generate_store(cfg, store_dir);

    // Materialize the dataset table.
    const RngStream root(cfg.root_seed);
    std::vector<detail::DatasetInstance> datasets;
    auto ds_index_for = [&](std::size_t dataset_id, std::size_t grid_index) {
        return cfg.share_datasets ? dataset_id : dataset_id * cfg.grid.size() + grid_index;
    };
    if (cfg.share_datasets) {
        datasets.reserve(cfg.n_datasets);
        for (std::size_t i = 0; i < cfg.n_datasets; ++i) {
            datasets.push_back(detail::make_dataset(cfg, root, i, nullptr));
        }
    } else {
        datasets.reserve(cfg.n_datasets * cfg.grid.size());
        for (std::size_t i = 0; i < cfg.n_datasets; ++i) {
            for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
                datasets.push_back(detail::make_dataset(cfg, root, i, &cfg.grid[g]));
            }
        }
    }

    // Figure out which cells are already in the store.
    const auto records_path = store_dir / "records.csv";
    const auto reports_path = store_dir / "reports.jsonl";
    using CellKey = std::tuple<std::size_t, std::string, std::size_t>;
    std::set<CellKey> done;
    if (fs::exists(records_path)) {
        for (const auto& r : read_records_csv(records_path)) {
            Architecture a{r.kind, r.num_layers, r.hidden_size};
            done.insert(CellKey{r.dataset_id, a.descriptor(), r.seed});
        }
    }

    RunSummary summary;
    summary.total_cells = cfg.n_datasets * cfg.grid.size() * cfg.seeds_per_dataset;
    summary.already_done = done.size();

    std::vector<detail::Cell> pending;
    for (std::size_t i = 0; i < cfg.n_datasets; ++i) {
        for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
            for (std::size_t s = 0; s < cfg.seeds_per_dataset; ++s) {
                if (done.count(CellKey{i, cfg.grid[g].descriptor(), s}) != 0) continue;
                pending.push_back({ds_index_for(i, g), g, s});
            }
        }
    }
    if (options.max_cells > 0 && pending.size() > options.max_cells) {
        pending.resize(options.max_cells);
    }

    if (options.save_models) fs::create_directories(store_dir / "models");

    std::ofstream records_out(records_path, std::ios::app);
    if (!records_out) throw DataError("cannot open records file for append");
    if (fs::file_size(records_path) == 0) {
        records_out << kRecordsHeader << '\n';
        records_out.flush();
    }
    std::ofstream reports_out(reports_path, std::ios::app);
    if (!reports_out) throw DataError("cannot open reports file for append");

    std::mutex io_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> failed{0};
    std::atomic<std::size_t> completed{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= pending.size()) return;
            const auto& cell = pending[idx];
            const auto& ds = datasets[cell.ds_index];
            const auto& arch = cfg.grid[cell.grid_index];
            try {
                TrainReport report;
                RnnModel* model_raw = nullptr;
                RunRecord rec = detail::evaluate_cell(cfg, root, ds, arch, cell.seed, &report,
                                                      options.save_models ? &model_raw : nullptr);
                std::unique_ptr<RnnModel> model(model_raw);
                if (model) {
                    const auto name = ds.file_stem + "_" + arch.descriptor() + "_s" +
                                      detail::zero_pad(cell.seed, 3) + ".bin";
                    save_model_file((store_dir / "models" / name).string(), *model);
                }
                const std::string record_line = record_to_csv(rec);
                const std::string report_line =
                    detail::report_json(rec, arch, report, options.save_traces).dump();
                {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    records_out << record_line << '\n';
                    records_out.flush();
                    reports_out << report_line << '\n';
                    reports_out.flush();
                }
                const auto n = completed.fetch_add(1) + 1;
                if (n % 50 == 0 || n == pending.size()) {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::fprintf(stderr, "progress: %zu/%zu cells this run\n", n, pending.size());
                }
            } catch (const std::exception& e) {
                failed.fetch_add(1);
                std::lock_guard<std::mutex> lock(io_mutex);
                std::fprintf(stderr, "cell failed (dataset %zu, %s, seed %zu): %s\n",
                             ds.dataset_id, arch.descriptor().c_str(), cell.seed, e.what());
            }
        }
    };

    const std::size_t workers = std::min(effective_worker_count(cfg),
                                         std::max<std::size_t>(pending.size(), 1));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    records_out.close();
    reports_out.close();

    summary.executed = completed.load();
    summary.failed = failed.load();
    summary.complete = summary.already_done + summary.executed == summary.total_cells;

    if (summary.complete && summary.failed == 0) {
        write_records_csv(records_path, read_records_csv(records_path));
        // Canonicalize report order the same way.
        std::vector<nlohmann::json> reports;
        {
            std::ifstream in(reports_path);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                reports.push_back(nlohmann::json::parse(line));
            }
        }
        std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
            return detail::report_sort_key(a) < detail::report_sort_key(b);
        });
        std::string content;
        for (const auto& j : reports) {
            content += j.dump();
            content += '\n';
        }
        detail::atomic_write_text(reports_path, content);
    }
    return summary;
}

} // namespace seqfreq
