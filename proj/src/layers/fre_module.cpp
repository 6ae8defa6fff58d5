#include "fre/layers/fre_module.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "fre/random.hpp"

namespace fre::layers {

void FreConfig::validate(int channels) const {
    if (mode == FreMode::Off) return;
    if (!(multiplier >= 1.0)) {
        throw ConfigError("fre: multiplier X must be >= 1, got " + std::to_string(multiplier));
    }
    if (mode == FreMode::RandomPerEpoch) {
        if (count < 1 || count > channels) {
            throw ConfigError("fre: count B must lie in [1, " + std::to_string(channels) + "], got " +
                              std::to_string(count));
        }
        return;
    }
    if (fixed_channels.empty()) throw ConfigError("fre: fixed-list mode needs at least one channel");
    std::set<int> seen;
    for (int c : fixed_channels) {
        if (c < 0 || c >= channels) {
            throw ConfigError("fre: fixed channel " + std::to_string(c) + " outside [0, " +
                              std::to_string(channels) + ")");
        }
        if (!seen.insert(c).second) throw ConfigError("fre: duplicate fixed channel " + std::to_string(c));
    }
}

SelectionState reselect(const SelectionState& state, int epoch, const FreConfig& cfg, int channels,
                        std::optional<int> batch) {
    SelectionState next = state;
    next.epoch = epoch;
    switch (cfg.mode) {
        case FreMode::Off:
            next.selected.clear();
            return next;
        case FreMode::FixedList:
            next.selected = cfg.fixed_channels;
            std::sort(next.selected.begin(), next.selected.end());
            return next;
        case FreMode::RandomPerEpoch:
            break;
    }
    const auto key_batch = static_cast<std::uint64_t>(batch ? *batch + 1 : 0);
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), key_batch}));
    std::vector<int> pool(static_cast<std::size_t>(channels));
    std::iota(pool.begin(), pool.end(), 0);
    const auto count = static_cast<std::size_t>(std::min(cfg.count, channels));
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    next.selected.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(next.selected.begin(), next.selected.end());
    return next;
}

template <typename T>
ag::Tensor<T> fre_forward(ag::Tape<T>& tape, const ag::Tensor<T>& features, const FreConfig& cfg,
                          const SelectionState& state, ag::Phase phase) {
    if (phase == ag::Phase::Eval || !cfg.active() || state.selected.empty()) return features;
    const int channels = features.dim(1);
    std::vector<T> factors(static_cast<std::size_t>(channels), T(1));
    for (int c : state.selected) {
        if (c < 0 || c >= channels) throw ShapeError("fre_forward", "channel", channels, c);
        factors[static_cast<std::size_t>(c)] = static_cast<T>(cfg.multiplier);
    }
    return ag::scale_channels<T>(tape, features, factors);
}

template ag::Tensor<float> fre_forward(ag::Tape<float>&, const ag::Tensor<float>&, const FreConfig&,
                                       const SelectionState&, ag::Phase);
template ag::Tensor<double> fre_forward(ag::Tape<double>&, const ag::Tensor<double>&, const FreConfig&,
                                        const SelectionState&, ag::Phase);

}  // namespace fre::layers
