#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fre/random.hpp"

namespace fre::tpe {

enum class DimKind { Integer, Real };

struct Dimension {
    std::string name;
    DimKind kind = DimKind::Real;
    double lo = 0.0;
    double hi = 1.0;
    bool log = false;  // sample and model densities in log space
};

struct SearchSpace {
    std::vector<Dimension> dims;

    void validate() const;
    std::size_t index_of(const std::string& name) const;
};

// Coordinates in dimension order.
using Point = std::vector<double>;

enum class TrialStatus { Done, Failed };

struct TrialRecord {
    int index = 0;
    Point point;
    double objective = 0.0;  // meaningful when done
    std::uint64_t seed = 0;
    TrialStatus status = TrialStatus::Done;

    bool operator==(const TrialRecord&) const = default;
};

struct TpeConfig {
    double gamma = 0.25;
    int n_startup = 10;
    int n_ei = 24;
    std::uint64_t seed = 0;
    bool random_only = false;  // prior sampling for every trial (random search)

    void validate() const;
};

// Size of the "good" set for n completed trials: ceil(gamma * n).
int good_count(double gamma, int n);

// Uniform draw from the prior, rounded and clamped for integer dims.
Point sample_prior(const SearchSpace& space, Rng& rng);

// Next point for trial `trial_index`. Deterministic in (history, space, cfg,
// trial_index). Failed trials are ignored.
Point propose(const std::vector<TrialRecord>& history, const SearchSpace& space, const TpeConfig& cfg,
              int trial_index);

// Objective to maximize; may throw to signal a failed trial.
using Runner = std::function<double(const Point& point, std::uint64_t seed, int index)>;

struct SearchResult {
    std::vector<TrialRecord> history;
    std::optional<std::size_t> best;  // index into history; none when every trial failed
};

// Best done trial: highest objective, earliest on ties.
std::optional<std::size_t> best_trial(const std::vector<TrialRecord>& history);

// Runs trials until `n_trials` are recorded. With `history_path`, existing
// records there are taken as already run and the file is rewritten after
// every trial, one JSON object per line.
SearchResult run_search(const SearchSpace& space, const Runner& runner, int n_trials, const TpeConfig& cfg,
                        const std::optional<std::filesystem::path>& history_path = std::nullopt,
                        const std::function<void(const TrialRecord&)>& on_trial = {});

std::string trial_to_json_line(const TrialRecord& r, const SearchSpace& space);
TrialRecord trial_from_json_line(const std::string& line, const SearchSpace& space);
std::vector<TrialRecord> read_history(const std::filesystem::path& path, const SearchSpace& space);

}  // namespace fre::tpe
