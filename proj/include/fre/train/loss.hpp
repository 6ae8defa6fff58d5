#pragma once

#include <optional>
#include <span>

#include "fre/autograd/ops.hpp"
#include "fre/train/supervision.hpp"

namespace fre::train {

// Without supervision: CE(main). With it: (1 - lambda) * CE(main) + lambda * CE(aux).
// `aux` must be given exactly when `sup` is.
template <typename T>
ag::Tensor<T> combined_loss(ag::Tape<T>& tape, const ag::Tensor<T>& main, const ag::Tensor<T>* aux,
                            std::span<const int> labels, const std::optional<SupervisionConfig>& sup);

}  // namespace fre::train
