#include "fre/layers/channel_dropout.hpp"

#include <string>
#include <vector>

#include "fre/random.hpp"

namespace fre::layers {

void validate_dropout_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
}

template <typename T>
ag::Tensor<T> channel_dropout(ag::Tape<T>& tape, const ag::Tensor<T>& features, double rate, ag::Phase phase,
                              std::uint64_t seed) {
    validate_dropout_rate(rate);
    if (phase == ag::Phase::Eval || rate == 0.0) return features;
    const std::size_t maps = static_cast<std::size_t>(features.dim(0)) * features.dim(1);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Rng rng(seed);
    std::vector<T> factors(maps);
    for (auto& f : factors) f = uniform01(rng) < rate ? T(0) : keep_scale;
    return ag::scale_channels<T>(tape, features, factors);
}

template ag::Tensor<float> channel_dropout(ag::Tape<float>&, const ag::Tensor<float>&, double, ag::Phase,
                                           std::uint64_t);
template ag::Tensor<double> channel_dropout(ag::Tape<double>&, const ag::Tensor<double>&, double, ag::Phase,
                                            std::uint64_t);

}  // namespace fre::layers
