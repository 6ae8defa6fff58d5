#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fre/data/dataset.hpp"
#include "fre/train/optimizer.hpp"
#include "fre/train/stats.hpp"

namespace fre::train {

struct TrainConfig {
    int epochs = 2000;
    int batch_size = 4;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;  // batch order
    StatHooks stats;
    int probe_size = 4;  // training images in the fixed stat-probe batch

    void validate() const;
};

struct HistoryRow {
    int epoch = 0;
    std::string split;  // "train" or "val"
    std::vector<std::optional<double>> per_class_iou;
    double mean_iou = 0.0;
    double loss = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

// Everything needed to continue a run after the last completed epoch.
struct TrainState {
    int epochs_done = 0;
    int best_epoch = 0;  // 0 until a validation pass has run
    double best_miou = -1.0;
    std::vector<std::vector<float>> best_parameters;
    std::vector<HistoryRow> history;
    std::vector<ActivationStat> stats;
};

struct EpochHooks {
    // Called after each epoch with the state so far.
    std::function<void(const model::Network<float>&, const Optimizer<float>&, const TrainState&)> on_epoch_end;
    // Filled before the first epoch when resuming.
    std::function<void(const model::Network<float>&, Optimizer<float>&)> restore_optimizer;
};

// Epochs are numbered from 1. Each epoch redraws the FRE selection, visits
// the training split in an order keyed by (seed, epoch), validates with the
// eval-phase forward and keeps the parameters of the best validation mIoU
// (earliest epoch on ties). Continues from `state` when it records
// completed epochs; `net` must then hold the matching parameters.
TrainState train(model::Network<float>& net, const data::DatasetSplit& splits, const TrainConfig& tc,
                 TrainState state = {}, const EpochHooks& hooks = {});

// Permutation of [0, n) keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// CSV header: epoch,split,<class>_iou...,miou,loss (absent IoU written as NA).
void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows,
                       const std::vector<std::string>& class_names);
std::vector<HistoryRow> parse_history_csv(std::istream& in);

}  // namespace fre::train
