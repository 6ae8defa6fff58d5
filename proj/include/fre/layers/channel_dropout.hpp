#pragma once

#include <cstdint>

#include "fre/autograd/ops.hpp"

namespace fre::layers {

void validate_dropout_rate(double rate);

// Dropout rate matching an enhancement of `count` out of `channels` maps.
inline double dropout_rate_for(int count, int channels) {
    return static_cast<double>(count) / static_cast<double>(channels);
}

// Zeroes each (sample, channel) map independently with probability `rate`
// and rescales survivors by 1 / (1 - rate). Identity in eval phase.
template <typename T>
ag::Tensor<T> channel_dropout(ag::Tape<T>& tape, const ag::Tensor<T>& features, double rate, ag::Phase phase,
                              std::uint64_t seed);

}  // namespace fre::layers
