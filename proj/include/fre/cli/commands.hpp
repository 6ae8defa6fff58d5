#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fre/cli/run_config.hpp"
#include "fre/train/evaluate.hpp"

namespace fre::cli {

namespace fs = std::filesystem;

// Files written into a train output directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kMetricsCsv = "metrics.csv";
inline constexpr const char* kStatsCsv = "activation_stats.csv";
inline constexpr const char* kSummaryJson = "summary.json";
inline constexpr const char* kSummaryText = "summary.txt";
// Files written into a search output directory.
inline constexpr const char* kHistoryFile = "history.jsonl";
inline constexpr const char* kBestConfigFile = "best_config.json";
inline constexpr const char* kScatterCsv = "scatter.csv";

struct GenerateOptions {
    fs::path out;
    int count = 50;
    std::uint64_t seed = 0;
    data::ClassScheme scheme = data::ClassScheme::ThreeClass;
    int image_size = 64;
    double noise = 0.08;
    std::array<int, 3> split{35, 5, 10};
};

// Writes images/, labels/, split.manifest and dataset.json.
void cmd_generate(const GenerateOptions& opt, std::ostream& log);

struct TrainOutcome {
    train::TrainState state;
    std::optional<train::EvalResult> val;   // best parameters on the validation split
    std::optional<train::EvalResult> test;  // best parameters on the test split, if non-empty
};

// Trains per the config and writes the run directory. With `resume`, picks
// up from last.ckpt when it exists and was written under the same config
// (train.epochs may differ, so a finished run can be extended).
TrainOutcome cmd_train(const Json& raw, bool resume, std::ostream& log);

// Continues from history.jsonl in the output directory when present;
// search.n_trials may be raised between invocations.
tpe::SearchResult cmd_search(const Json& raw, std::ostream& log);

struct EvalOptions {
    fs::path checkpoint;
    std::optional<fs::path> data_dir;  // on-disk dataset
    std::optional<Json> config;        // or the data section of a run config
    std::string split = "val";
    std::optional<fs::path> out;  // eval.csv and eval.json go here
};

train::EvalResult cmd_eval(const EvalOptions& opt, std::ostream& log);

// Reads run and search directories (never writes to them) and emits
// comparison.txt, comparison.csv, fig2_activation.csv, fig9_channel_sums.csv
// and tpe_scatter.csv into `out`.
void cmd_report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& log);

}  // namespace fre::cli
