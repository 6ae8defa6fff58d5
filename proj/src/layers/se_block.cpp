#include "fre/layers/se_block.hpp"

namespace fre::layers {

template <typename T>
ag::Tensor<T> se_block(ag::Tape<T>& tape, const ag::Tensor<T>& features, const SeWeights<T>& weights) {
    auto pooled = ag::global_avg_pool(tape, features);
    auto hidden = ag::relu(tape, ag::dense(tape, pooled, weights.squeeze_w, weights.squeeze_b));
    auto gate = ag::sigmoid(tape, ag::dense(tape, hidden, weights.excite_w, weights.excite_b));
    return ag::gate_channels(tape, features, gate);
}

template ag::Tensor<float> se_block(ag::Tape<float>&, const ag::Tensor<float>&, const SeWeights<float>&);
template ag::Tensor<double> se_block(ag::Tape<double>&, const ag::Tensor<double>&, const SeWeights<double>&);

}  // namespace fre::layers
