#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fre/data/dataset.hpp"
#include "fre/data/synthetic.hpp"
#include "fre/model/config.hpp"
#include "fre/model/serialization.hpp"
#include "fre/tpe/tpe.hpp"
#include "fre/train/trainer.hpp"

namespace fre::cli {

using model::Json;

// Sub-seeds, each named_seed(seed, "<name>") unless set explicitly.
struct Seeds {
    std::uint64_t weights = 0;
    std::uint64_t fre = 0;
    std::uint64_t dropout = 0;
    std::uint64_t data = 0;
    std::uint64_t shuffle = 0;
};

struct DataConfig {
    std::optional<std::filesystem::path> path;  // on-disk dataset; otherwise synthetic
    data::ClassScheme scheme = data::ClassScheme::ThreeClass;
    data::SyntheticSpec synthetic;
    int count = 50;
    std::array<int, 3> split{35, 5, 10};
};

struct SearchConfig {
    int n_trials = 50;
    // Dimension names are dotted paths into the run config, e.g. "fre.B".
    tpe::SearchSpace space;
    tpe::TpeConfig tpe;
    std::optional<int> trial_epochs;
    bool vary_seed = false;  // give every trial its own top-level seed
};

struct RunConfig {
    std::uint64_t seed = 0;
    Seeds seeds;
    model::ModelConfig model;
    std::optional<layers::FreConfig> fre_section;  // kept for dropout derivation and echo
    std::optional<double> dropout_rate;
    bool dropout_from_fre = false;
    std::optional<train::SupervisionConfig> supervision;
    train::TrainConfig train;
    int checkpoint_every = 1;
    DataConfig data;
    std::optional<SearchConfig> search;
    std::filesystem::path output_dir = "run";

    std::vector<std::string> class_names() const;
};

// Parses and validates every section; throws ConfigError on the first problem.
RunConfig resolve(const Json& raw);

// Fully explicit form of a resolved config; resolve(to_json(c)) == c.
Json to_json(const RunConfig& cfg);

// Sets the value at a dotted path ("train.epochs"), creating objects as needed.
void set_path(Json& j, const std::string& dotted, Json value);

// Parses "a.b=value"; value is read as JSON when possible, else as a string.
void apply_override(Json& j, const std::string& assignment);

Json load_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Loads or generates the dataset described by cfg.data.
data::DatasetSplit load_data(const RunConfig& cfg);

}  // namespace fre::cli
