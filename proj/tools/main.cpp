// Command-line front end for the sweep harness: dataset generation, the
// training sweep itself, and the aggregation/export passes over a store.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "seqfreq/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace seqfreq;

struct ConfigFlags {
    std::string config_file;
    std::size_t n_datasets = 0;
    std::size_t seq_length = 0;
    std::size_t max_changes = 0;
    std::size_t seeds = 0;
    std::vector<std::string> grid;
    double lr = 0.0;
    std::size_t epochs = 0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double epsilon = 0.0;
    double log_clamp = 0.0;
    std::uint64_t root_seed = 0;
    std::size_t workers = 0;
    bool share_datasets = true;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
    cmd->add_option("--config", f.config_file, "JSON config file to start from")
        ->check(CLI::ExistingFile);
    cmd->add_option("--n-datasets", f.n_datasets, "number of datasets");
    cmd->add_option("--seq-length", f.seq_length, "sequence length N");
    cmd->add_option("--max-changes", f.max_changes, "max label changes M");
    cmd->add_option("--seeds", f.seeds, "seeds per dataset");
    cmd->add_option("--grid", f.grid,
                    "grid points as descriptors, e.g. elman-l2-h32 lstm-l2-h32")
        ->delimiter(',');
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--beta1", f.beta1, "Adam beta1");
    cmd->add_option("--beta2", f.beta2, "Adam beta2");
    cmd->add_option("--epsilon", f.epsilon, "Adam epsilon");
    cmd->add_option("--log-clamp", f.log_clamp, "probability clamp for the log loss");
    cmd->add_option("--root-seed", f.root_seed, "root RNG seed");
    cmd->add_option("--workers", f.workers, "worker thread count");
    cmd->add_flag("--share-datasets,!--no-share-datasets", f.share_datasets,
                  "reuse one dataset per id across all grid points (default on)");
}

ExperimentConfig build_config(const CLI::App* cmd, const ConfigFlags& f,
                              const fs::path& store_dir, bool resume) {
    ExperimentConfig cfg;
    const fs::path stored = store_dir / "config.json";
    if (resume && fs::exists(stored)) {
        std::ifstream in(stored);
        cfg = nlohmann::json::parse(in).get<ExperimentConfig>();
    } else if (cmd->count("--config") > 0) {
        std::ifstream in(f.config_file);
        if (!in) throw ConfigError("cannot open config file: " + f.config_file);
        cfg = nlohmann::json::parse(in).get<ExperimentConfig>();
    }
    if (cmd->count("--n-datasets") > 0) cfg.n_datasets = f.n_datasets;
    if (cmd->count("--seq-length") > 0) cfg.seq_length = f.seq_length;
    if (cmd->count("--max-changes") > 0) cfg.max_changes = f.max_changes;
    if (cmd->count("--seeds") > 0) cfg.seeds_per_dataset = f.seeds;
    if (cmd->count("--grid") > 0) {
        cfg.grid.clear();
        for (const auto& desc : f.grid) cfg.grid.push_back(Architecture::from_descriptor(desc));
    }
    if (cmd->count("--lr") > 0) cfg.train.learning_rate = f.lr;
    if (cmd->count("--epochs") > 0) cfg.train.epochs = f.epochs;
    if (cmd->count("--beta1") > 0) cfg.train.adam_beta1 = f.beta1;
    if (cmd->count("--beta2") > 0) cfg.train.adam_beta2 = f.beta2;
    if (cmd->count("--epsilon") > 0) cfg.train.adam_epsilon = f.epsilon;
    if (cmd->count("--log-clamp") > 0) cfg.train.log_clamp = f.log_clamp;
    if (cmd->count("--root-seed") > 0) cfg.root_seed = f.root_seed;
    if (cmd->count("--workers") > 0) cfg.worker_count = f.workers;
    if (cmd->count("--share-datasets") > 0 || cmd->count("--no-share-datasets") > 0) {
        cfg.share_datasets = f.share_datasets;
    }
    if (cfg.grid.empty()) {
        throw ConfigError("no grid points given; pass --grid or a --config file");
    }
    return cfg;
}

std::vector<RunRecord> load_store_records(const fs::path& store_dir) {
    const auto path = store_dir / "records.csv";
    if (!fs::exists(path)) throw DataError("no records.csv in store: " + store_dir.string());
    auto records = read_records_csv(path);
    if (records.empty()) throw DataError("record store is empty: " + path.string());
    return records;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-bias laboratory for small recurrent networks"};
    app.require_subcommand(1);

    std::string store_dir;
    ConfigFlags flags;
    bool resume = false;
    bool save_models = false;
    bool save_traces = false;
    std::size_t max_cells = 0;
    std::size_t bins = 20;
    std::string field = "omega_dom";
    std::string out_file;

    auto* generate = app.add_subcommand("generate", "write config.json and dataset files only");
    generate->add_option("--store", store_dir, "store directory")->required();
    add_config_flags(generate, flags);

    auto* run = app.add_subcommand("run", "execute the full training sweep");
    run->add_option("--store", store_dir, "store directory")->required();
    add_config_flags(run, flags);
    run->add_flag("--resume", resume, "skip cells already present in the store");
    run->add_option("--max-cells", max_cells, "stop after this many cells (for staged runs)");
    run->add_flag("--save-models", save_models, "write a model checkpoint per cell");
    run->add_flag("--save-traces", save_traces, "include per-epoch loss traces in reports.jsonl");

    auto* aggregate = app.add_subcommand("aggregate", "write per-dataset medians and diagnostics");
    aggregate->add_option("--store", store_dir, "store directory")->required();

    auto* histogram_cmd = app.add_subcommand("histogram", "bin aggregate medians per architecture");
    histogram_cmd->add_option("--store", store_dir, "store directory")->required();
    histogram_cmd->add_option("--field", field, "test_loss or omega_dom")
        ->check(CLI::IsMember({"test_loss", "omega_dom"}));
    histogram_cmd->add_option("--bins", bins, "bin count (default 20)");
    histogram_cmd->add_option("--out", out_file, "output CSV path");

    auto* scatter = app.add_subcommand("scatter", "export every raw run, grouped and sorted");
    scatter->add_option("--store", store_dir, "store directory")->required();
    scatter->add_option("--out", out_file, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path store = store_dir;
        if (generate->parsed()) {
            const auto cfg = build_config(generate, flags, store, false);
            generate_store(cfg, store);
            std::printf("store ready: %s (%zu datasets)\n", store.string().c_str(),
                        cfg.n_datasets);
            return 0;
        }
        if (run->parsed()) {
            const auto cfg = build_config(run, flags, store, resume);
            RunOptions options;
            options.resume = resume;
            options.max_cells = max_cells;
            options.save_models = save_models;
            options.save_traces = save_traces;
            const auto summary = run_experiment(cfg, store, options);
            std::printf("cells: %zu total, %zu already done, %zu executed, %zu failed%s\n",
                        summary.total_cells, summary.already_done, summary.executed,
                        summary.failed, summary.complete ? ", store complete" : "");
            return summary.failed == 0 ? 0 : 1;
        }
        if (aggregate->parsed()) {
            const auto records = load_store_records(store);
            const auto rows = aggregate_medians(records);
            write_aggregate_csv(store / "aggregate.csv", rows);
            write_diagnostics_csv(store / "diagnostics.csv", records);
            std::printf("wrote %zu aggregate rows to %s\n", rows.size(),
                        (store / "aggregate.csv").string().c_str());
            return 0;
        }
        if (histogram_cmd->parsed()) {
            const auto records = load_store_records(store);
            const auto rows = aggregate_medians(records);
            const auto hist_field =
                field == "test_loss" ? HistField::kTestLoss : HistField::kOmegaDom;
            const auto hist = histogram(rows, hist_field, bins);
            const fs::path out =
                out_file.empty() ? store / ("histogram_" + field + ".csv") : fs::path(out_file);
            write_histogram_csv(out, hist);
            std::printf("wrote %zu-bin histogram to %s\n", bins, out.string().c_str());
            return 0;
        }
        if (scatter->parsed()) {
            const auto records = load_store_records(store);
            const auto rows = scatter_rows(records);
            const fs::path out = out_file.empty() ? store / "scatter.csv" : fs::path(out_file);
            write_scatter_csv(out, rows);
            std::printf("wrote %zu scatter rows to %s\n", rows.size(), out.string().c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
