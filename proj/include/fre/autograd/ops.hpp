#pragma once

#include <optional>
#include <span>

#include "fre/autograd/tape.hpp"
#include "fre/autograd/tensor.hpp"

namespace fre::ag {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// 2-D cross-correlation. input (N,C,H,W), kernel (O,C,KH,KW), bias (O) or
// undefined. Output spatial size is floor((H + 2p - KH) / stride) + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

// 2x2 max pooling with stride 2. Ties resolve to the first element in
// row-major window order.
template <typename T>
Tensor<T> maxpool2(Tape<T>& tape, const Tensor<T>& input);

// Nearest-neighbour upsampling by an integer factor in both spatial dims.
template <typename T>
Tensor<T> upsample_nearest(Tape<T>& tape, const Tensor<T>& input, int factor);

template <typename T>
Tensor<T> upsample_nearest2(Tape<T>& tape, const Tensor<T>& input) {
    return upsample_nearest(tape, input, 2);
}

// Concatenates along the channel axis; `b` may have zero channels.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    static BatchNormState init(int channels) {
        return {Tensor<T>(Shape{channels}, T(0)), Tensor<T>(Shape{channels}, T(1))};
    }
};

// Train: normalize by batch statistics (biased variance) and, when
// `update_running` is set, blend unbiased batch statistics into `state`
// with momentum 0.9. Eval: normalize by the running statistics.
template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Phase phase, bool update_running = true);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input);

// input (N, in), weight (out, in), bias (out) or undefined -> (N, out).
template <typename T>
Tensor<T> dense(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// (N,C,H,W) -> (N,C)
template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& input);

// out[n,c,:,:] = input[n,c,:,:] * gate[n,c]; differentiable in both.
template <typename T>
Tensor<T> gate_channels(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gate);

// Multiplies each channel by a constant factor. `factors` holds either C
// values (shared across the batch) or N*C values.
template <typename T>
Tensor<T> scale_channels(Tape<T>& tape, const Tensor<T>& input, std::span<const T> factors);

// Mean over scored pixels of -log softmax(logits)[label]. labels has
// N*H*W entries in row-major (n, h, w) order.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels,
                                std::optional<int> ignore_index = std::nullopt);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor);

}  // namespace fre::ag
