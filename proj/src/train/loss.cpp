#include "fre/train/loss.hpp"

namespace fre::train {

template <typename T>
ag::Tensor<T> combined_loss(ag::Tape<T>& tape, const ag::Tensor<T>& main, const ag::Tensor<T>* aux,
                            std::span<const int> labels, const std::optional<SupervisionConfig>& sup) {
    if ((aux != nullptr) != sup.has_value()) {
        throw ConfigError("combined_loss: auxiliary logits must be supplied exactly when supervision is configured");
    }
    const auto main_loss = ag::softmax_cross_entropy(tape, main, labels);
    if (!sup) return main_loss;
    sup->validate();
    const auto aux_loss = ag::softmax_cross_entropy(tape, *aux, labels);
    const T lambda = static_cast<T>(sup->lambda);
    return ag::add(tape, ag::scale(tape, main_loss, T(1) - lambda), ag::scale(tape, aux_loss, lambda));
}

template ag::Tensor<float> combined_loss(ag::Tape<float>&, const ag::Tensor<float>&, const ag::Tensor<float>*,
                                         std::span<const int>, const std::optional<SupervisionConfig>&);
template ag::Tensor<double> combined_loss(ag::Tape<double>&, const ag::Tensor<double>&, const ag::Tensor<double>*,
                                          std::span<const int>, const std::optional<SupervisionConfig>&);

}  // namespace fre::train
