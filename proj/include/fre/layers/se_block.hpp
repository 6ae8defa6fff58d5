#pragma once

#include "fre/autograd/ops.hpp"

namespace fre::layers {

inline int se_hidden_width(int channels, int reduction) {
    const int w = reduction > 0 ? channels / reduction : channels;
    return w < 1 ? 1 : w;
}

// Squeeze-and-excitation weights: squeeze (hidden, C) then excite (C, hidden).
template <typename T>
struct SeWeights {
    ag::Tensor<T> squeeze_w, squeeze_b;
    ag::Tensor<T> excite_w, excite_b;
};

// out = x * sigmoid(excite(relu(squeeze(global_avg_pool(x))))), gated per channel.
template <typename T>
ag::Tensor<T> se_block(ag::Tape<T>& tape, const ag::Tensor<T>& features, const SeWeights<T>& weights);

}  // namespace fre::layers
