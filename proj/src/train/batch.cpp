#include "fre/train/batch.hpp"

namespace fre::train {

template <typename T>
Batch<T> make_batch(const std::vector<data::Sample>& samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ShapeError("make_batch", "no samples selected");
    const auto& first = samples.at(indices[0]);
    const int n = static_cast<int>(indices.size());
    const std::size_t plane = static_cast<std::size_t>(first.height) * first.width;
    const std::size_t image_size = plane * first.channels;
    Batch<T> batch{ag::Tensor<T>(ag::Shape{n, first.channels, first.height, first.width}), {}};
    batch.labels.reserve(plane * indices.size());
    auto dst = batch.images.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = samples.at(indices[i]);
        if (s.channels != first.channels || s.height != first.height || s.width != first.width) {
            throw ShapeError("make_batch", "sample '" + s.stem + "' differs in shape from '" + first.stem + "'");
        }
        for (std::size_t j = 0; j < image_size; ++j) dst[i * image_size + j] = static_cast<T>(s.image[j]);
        batch.labels.insert(batch.labels.end(), s.label.begin(), s.label.end());
    }
    return batch;
}

template <typename T>
std::vector<int> argmax_channels(const ag::Tensor<T>& logits) {
    if (logits.rank() != 4) throw ShapeError("argmax_channels", "rank", 4, logits.rank());
    const int n = logits.dim(0), c = logits.dim(1);
    const std::size_t plane = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
    std::vector<int> out(static_cast<std::size_t>(n) * plane, 0);
    auto x = logits.data();
    for (int b = 0; b < n; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            int best = 0;
            T best_v = x[base + p];
            for (int k = 1; k < c; ++k) {
                const T v = x[base + static_cast<std::size_t>(k) * plane + p];
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            out[static_cast<std::size_t>(b) * plane + p] = best;
        }
    }
    return out;
}

template Batch<float> make_batch(const std::vector<data::Sample>&, std::span<const std::size_t>);
template Batch<double> make_batch(const std::vector<data::Sample>&, std::span<const std::size_t>);
template std::vector<int> argmax_channels(const ag::Tensor<float>&);
template std::vector<int> argmax_channels(const ag::Tensor<double>&);

}  // namespace fre::train
