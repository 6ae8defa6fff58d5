#pragma once

#include <span>
#include <vector>

#include "fre/autograd/tensor.hpp"
#include "fre/data/dataset.hpp"

namespace fre::train {

template <typename T>
struct Batch {
    ag::Tensor<T> images;     // (N, C, H, W)
    std::vector<int> labels;  // N*H*W, row-major
};

// Stacks samples[indices[i]]; all must share channels and size.
template <typename T>
Batch<T> make_batch(const std::vector<data::Sample>& samples, std::span<const std::size_t> indices);

// Prediction per pixel: index of the largest logit, first on ties.
template <typename T>
std::vector<int> argmax_channels(const ag::Tensor<T>& logits);

}  // namespace fre::train
