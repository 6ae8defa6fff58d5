#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fre/autograd/ops.hpp"

namespace fre::layers {

enum class FreMode { RandomPerEpoch, FixedList, Off };

// Feature random enhancement: during training, `count` bottleneck channels
// are multiplied by `multiplier`; at inference the module is an identity.
struct FreConfig {
    int count = 1;            // number of channels enhanced per selection
    double multiplier = 1.0;  // constant gain applied to selected channels
    FreMode mode = FreMode::Off;
    std::vector<int> fixed_channels;
    std::uint64_t seed = 0;
    bool per_batch = false;  // redraw every batch instead of every epoch
    bool before_se = false;  // apply ahead of the bottleneck SE block

    bool active() const noexcept { return mode != FreMode::Off; }

    // Throws ConfigError when the config cannot apply to a layer of
    // `channels` feature maps.
    void validate(int channels) const;

    static std::vector<int> default_fixed_channels() { return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}; }
};

struct SelectionState {
    int epoch = -1;
    std::vector<int> selected;  // sorted ascending
};

// Draws `cfg.count` distinct channels uniformly without replacement from a
// generator keyed by (seed, epoch[, batch]). Fixed-list mode returns the
// configured channels; off mode selects nothing.
SelectionState reselect(const SelectionState& state, int epoch, const FreConfig& cfg, int channels,
                        std::optional<int> batch = std::nullopt);

template <typename T>
ag::Tensor<T> fre_forward(ag::Tape<T>& tape, const ag::Tensor<T>& features, const FreConfig& cfg,
                          const SelectionState& state, ag::Phase phase);

}  // namespace fre::layers
