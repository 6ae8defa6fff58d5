#include "fre/train/evaluate.hpp"

#include <numeric>

#include "fre/train/batch.hpp"

namespace fre::train {

EvalResult evaluate(const Predictor& predict, const std::vector<data::Sample>& samples, int classes) {
    EvalResult out{metrics::ConfusionMatrix(classes), {}, 0.0};
    for (const auto& s : samples) out.confusion.accumulate(predict(s), s.label);
    out.metrics = metrics::iou(out.confusion);
    return out;
}

template <typename T>
EvalResult evaluate(model::Network<T>& net, const std::vector<data::Sample>& samples, int batch_size) {
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    EvalResult out{metrics::ConfusionMatrix(net.config().classes), {}, 0.0};
    ag::Tape<T> tape;
    tape.set_recording(false);
    const model::ForwardContext ctx{ag::Phase::Eval, 0, 0, false};
    double loss_sum = 0.0;
    std::size_t pixels = 0;
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t count = std::min(samples.size() - start, static_cast<std::size_t>(batch_size));
        const auto batch = make_batch<T>(samples, std::span(idx).subspan(start, count));
        const auto result = net.forward(tape, batch.images, ctx);
        out.confusion.accumulate(argmax_channels(result.logits), batch.labels);
        const double mean = static_cast<double>(ag::softmax_cross_entropy(tape, result.logits, std::span<const int>(batch.labels)).item());
        loss_sum += mean * static_cast<double>(batch.labels.size());
        pixels += batch.labels.size();
    }
    out.metrics = metrics::iou(out.confusion);
    out.loss = pixels > 0 ? loss_sum / static_cast<double>(pixels) : 0.0;
    return out;
}

template EvalResult evaluate(model::Network<float>&, const std::vector<data::Sample>&, int);
template EvalResult evaluate(model::Network<double>&, const std::vector<data::Sample>&, int);

}  // namespace fre::train
