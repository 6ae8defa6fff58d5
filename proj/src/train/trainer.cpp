#include "fre/train/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fre/random.hpp"
#include "fre/train/batch.hpp"
#include "fre/train/evaluate.hpp"
#include "fre/train/loss.hpp"

namespace fre::train {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (probe_size < 1) throw ConfigError("train: probe_size must be >= 1");
    optimizer.validate();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

TrainState train(model::Network<float>& net, const data::DatasetSplit& splits, const TrainConfig& tc,
                 TrainState state, const EpochHooks& hooks) {
    tc.validate();
    if (splits.train.empty()) throw DataError("", "training split is empty");
    if (splits.val.empty()) throw DataError("", "validation split is empty");
    const auto& cfg = net.config();

    Optimizer<float> optim(tc.optimizer, net.parameters());
    if (state.epochs_done > 0 && hooks.restore_optimizer) hooks.restore_optimizer(net, optim);

    std::vector<std::size_t> probe_idx(std::min<std::size_t>(splits.train.size(), static_cast<std::size_t>(tc.probe_size)));
    std::iota(probe_idx.begin(), probe_idx.end(), std::size_t{0});
    const auto probe = make_batch<float>(splits.train, probe_idx);

    ag::Tape<float> tape;
    for (int epoch = state.epochs_done + 1; epoch <= tc.epochs; ++epoch) {
        net.begin_epoch(epoch);
        const auto order = epoch_order(splits.train.size(), tc.seed, epoch);
        metrics::ConfusionMatrix train_cm(cfg.classes);
        double loss_sum = 0.0;
        std::size_t pixels = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size), ++batch_index) {
            const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(tc.batch_size));
            const auto batch = make_batch<float>(splits.train, std::span(order).subspan(start, count));
            tape.reset();
            const model::ForwardContext ctx{ag::Phase::Train, epoch, batch_index, true};
            const auto res = net.forward(tape, batch.images, ctx);
            const ag::Tensor<float>* aux = res.aux_logits ? &*res.aux_logits : nullptr;
            const auto loss = combined_loss(tape, res.logits, aux, batch.labels, cfg.supervision);
            const float value = loss.item();
            if (!std::isfinite(value)) throw NumericError(epoch, batch_index, "loss");
            net.parameters().zero_grad();
            tape.backward(loss);
            optim.step(net.parameters());

            train_cm.accumulate(argmax_channels(res.logits), batch.labels);
            loss_sum += static_cast<double>(value) * static_cast<double>(batch.labels.size());
            pixels += batch.labels.size();
        }
        tape.reset();

        const auto train_m = metrics::iou(train_cm);
        state.history.push_back({epoch, "train", train_m.per_class_iou, train_m.mean_iou, loss_sum / static_cast<double>(pixels)});
        const auto val = evaluate(net, splits.val, tc.batch_size);
        state.history.push_back({epoch, "val", val.metrics.per_class_iou, val.metrics.mean_iou, val.loss});
        if (val.metrics.mean_iou > state.best_miou) {
            state.best_miou = val.metrics.mean_iou;
            state.best_epoch = epoch;
            state.best_parameters = net.parameters().snapshot();
        }
        if (tc.stats.any()) {
            auto rows = record_activation_stats(net, probe.images, epoch, tc.stats);
            state.stats.insert(state.stats.end(), rows.begin(), rows.end());
        }
        state.epochs_done = epoch;
        if (hooks.on_epoch_end) hooks.on_epoch_end(net, optim, state);
    }
    return state;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& rows,
                       const std::vector<std::string>& class_names) {
    out << "epoch,split";
    for (const auto& c : class_names) out << ',' << c << "_iou";
    out << ",miou,loss\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        if (r.per_class_iou.size() != class_names.size()) throw ConfigError("history row class count mismatch");
        out << r.epoch << ',' << r.split;
        for (const auto& v : r.per_class_iou) {
            out << ',';
            if (v) out << *v;
            else out << "NA";
        }
        out << ',' << r.mean_iou << ',' << r.loss << '\n';
    }
}

std::vector<HistoryRow> parse_history_csv(std::istream& in) {
    auto split_line = [](const std::string& line) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        return f;
    };
    std::string line;
    if (!std::getline(in, line)) throw DataError("", "metric CSV is empty");
    const auto header = split_line(line);
    if (header.size() < 4 || header[0] != "epoch" || header[1] != "split" || header[header.size() - 2] != "miou" ||
        header.back() != "loss") {
        throw DataError("", "metric CSV header must be epoch,split,<class>_iou...,miou,loss");
    }
    const std::size_t classes = header.size() - 4;
    std::vector<HistoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (f.size() != header.size()) throw DataError("", "metric CSV row has " + std::to_string(f.size()) + " fields");
        HistoryRow r;
        r.epoch = std::stoi(f[0]);
        r.split = f[1];
        for (std::size_t c = 0; c < classes; ++c) {
            if (f[2 + c] == "NA") r.per_class_iou.emplace_back();
            else r.per_class_iou.emplace_back(std::stod(f[2 + c]));
        }
        r.mean_iou = std::stod(f[2 + classes]);
        r.loss = std::stod(f[3 + classes]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace fre::train
