#include "fre/model/unet.hpp"

#include <cmath>
#include <string>

#include "fre/layers/channel_dropout.hpp"
#include "fre/random.hpp"

namespace fre::model {

namespace {

// Kaiming-style fan-in scaling, seeded per parameter name so values do not
// depend on construction order.
template <typename T>
void kaiming_fill(ag::Tensor<T>& t, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
    Rng rng(named_seed(seed, name));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(standard_normal(rng) * stddev);
}

std::string stage_name(const char* kind, int stage) { return std::string(kind) + std::to_string(stage); }

}  // namespace

template <typename T>
ag::Tensor<T>& Network<T>::make_conv(const std::string& name, int out_ch, int in_ch, int k) {
    auto& w = params_.add(name, ag::Shape{out_ch, in_ch, k, k}, true);
    kaiming_fill(w, static_cast<std::size_t>(in_ch) * k * k, weight_seed_, name);
    return w;
}

template <typename T>
typename Network<T>::ConvBn Network<T>::make_conv_bn(const std::string& prefix, int in_ch, int out_ch) {
    ConvBn c;
    c.weight = make_conv(prefix + ".weight", out_ch, in_ch, 3);
    c.gamma = params_.add(prefix + ".bn.gamma", ag::Shape{out_ch}, true, T(1));
    c.beta = params_.add(prefix + ".bn.beta", ag::Shape{out_ch}, true, T(0));
    c.bn.running_mean = params_.add(prefix + ".bn.running_mean", ag::Shape{out_ch}, false, T(0));
    c.bn.running_var = params_.add(prefix + ".bn.running_var", ag::Shape{out_ch}, false, T(1));
    return c;
}

template <typename T>
typename Network<T>::Block Network<T>::make_block(const std::string& prefix, int in_ch, int out_ch) {
    Block b;
    b.first = make_conv_bn(prefix + ".conv1", in_ch, out_ch);
    b.second = make_conv_bn(prefix + ".conv2", out_ch, out_ch);
    const int hidden = layers::se_hidden_width(out_ch, cfg_.se_reduction);
    auto& sw = params_.add(prefix + ".se.squeeze_w", ag::Shape{hidden, out_ch}, true);
    kaiming_fill(sw, static_cast<std::size_t>(out_ch), weight_seed_, prefix + ".se.squeeze_w");
    b.se.squeeze_w = sw;
    b.se.squeeze_b = params_.add(prefix + ".se.squeeze_b", ag::Shape{hidden}, true);
    auto& ew = params_.add(prefix + ".se.excite_w", ag::Shape{out_ch, hidden}, true);
    kaiming_fill(ew, static_cast<std::size_t>(hidden), weight_seed_, prefix + ".se.excite_w");
    b.se.excite_w = ew;
    b.se.excite_b = params_.add(prefix + ".se.excite_b", ag::Shape{out_ch}, true);
    return b;
}

template <typename T>
Network<T> Network<T>::build(const ModelConfig& cfg, std::uint64_t weight_seed) {
    cfg.validate();
    Network net;
    net.cfg_ = cfg;
    net.weight_seed_ = weight_seed;

    int in_ch = cfg.input_channels;
    for (int s = 0; s < cfg.depth; ++s) {
        net.encoder_.push_back(net.make_block(stage_name("enc", s), in_ch, cfg.stage_width(s)));
        in_ch = cfg.stage_width(s);
    }
    const int deepest = cfg.stage_width(cfg.depth - 1);
    if (cfg.variant == ModelVariant::NoDeepLayers) {
        net.bridge_weight_ = net.make_conv("bridge.weight", cfg.bottleneck_width(), deepest, 1);
        net.bridge_bias_ = net.params_.add("bridge.bias", ag::Shape{cfg.bottleneck_width()}, true);
    } else {
        net.bottleneck_ = net.make_block("bottleneck", deepest, cfg.bottleneck_width());
    }
    net.decoder_.resize(static_cast<std::size_t>(cfg.depth));
    for (int s = cfg.depth - 1; s >= 0; --s) {
        const std::string prefix = stage_name("dec", s);
        auto& stage = net.decoder_[static_cast<std::size_t>(s)];
        stage.up_weight = net.make_conv(prefix + ".up.weight", cfg.stage_width(s), cfg.stage_width(s + 1), 3);
        stage.up_bias = net.params_.add(prefix + ".up.bias", ag::Shape{cfg.stage_width(s)}, true);
        stage.block = net.make_block(prefix, 2 * cfg.stage_width(s), cfg.stage_width(s));
    }
    net.head_weight_ = net.make_conv("head.weight", cfg.classes, cfg.stage_width(0), 1);
    net.head_bias_ = net.params_.add("head.bias", ag::Shape{cfg.classes}, true);
    if (cfg.variant == ModelVariant::Supervision) {
        net.aux_weight_ = net.make_conv("aux_head.weight", cfg.classes, cfg.bottleneck_width(), 1);
        net.aux_bias_ = net.params_.add("aux_head.bias", ag::Shape{cfg.classes}, true);
    }
    net.begin_epoch(0);
    return net;
}

template <typename T>
void Network<T>::begin_epoch(int epoch) {
    selection_ = layers::reselect(selection_, epoch, cfg_.fre, cfg_.bottleneck_width());
}

template <typename T>
ag::Tensor<T> Network<T>::run_convs(ag::Tape<T>& tape, Block& block, const ag::Tensor<T>& x,
                                    const ForwardContext& ctx) {
    ag::Tensor<T> undefined;
    auto h = ag::conv2d(tape, x, block.first.weight, undefined, 1, 1);
    h = ag::relu(tape, ag::batch_norm(tape, h, block.first.gamma, block.first.beta, block.first.bn, ctx.phase,
                                      ctx.update_bn_stats));
    h = ag::conv2d(tape, h, block.second.weight, undefined, 1, 1);
    h = ag::relu(tape, ag::batch_norm(tape, h, block.second.gamma, block.second.beta, block.second.bn, ctx.phase,
                                      ctx.update_bn_stats));
    return h;
}

template <typename T>
ag::Tensor<T> Network<T>::run_block(ag::Tape<T>& tape, Block& block, const ag::Tensor<T>& x,
                                    const ForwardContext& ctx) {
    return layers::se_block(tape, run_convs(tape, block, x, ctx), block.se);
}

template <typename T>
ag::Tensor<T> Network<T>::enhance(ag::Tape<T>& tape, const ag::Tensor<T>& x, const ForwardContext& ctx,
                                  const FeatureHook* hook) {
    ag::Tensor<T> out = x;
    if (cfg_.variant == ModelVariant::Fre) {
        if (cfg_.fre.per_batch && ctx.phase == ag::Phase::Train) {
            const auto sel = layers::reselect(selection_, ctx.epoch, cfg_.fre, cfg_.bottleneck_width(), ctx.batch);
            out = layers::fre_forward(tape, out, cfg_.fre, sel, ctx.phase);
        } else {
            out = layers::fre_forward(tape, out, cfg_.fre, selection_, ctx.phase);
        }
    } else if (cfg_.variant == ModelVariant::Dropout) {
        const auto seed = derive_seed(cfg_.dropout_seed, {static_cast<std::uint64_t>(ctx.epoch),
                                                          static_cast<std::uint64_t>(ctx.batch)});
        out = layers::channel_dropout(tape, out, *cfg_.dropout_rate, ctx.phase, seed);
    }
    if (hook != nullptr && *hook) out = (*hook)(tape, out);
    return out;
}

template <typename T>
ForwardResult<T> Network<T>::forward(ag::Tape<T>& tape, const ag::Tensor<T>& images, const ForwardContext& ctx,
                                     const FeatureHook* bottleneck_hook) {
    if (images.rank() != 4) throw ShapeError("unet.forward", "rank", 4, images.rank());
    if (images.dim(1) != cfg_.input_channels) {
        throw ShapeError("unet.forward", "channels", cfg_.input_channels, images.dim(1));
    }
    const int multiple = cfg_.spatial_multiple();
    for (int axis : {2, 3}) {
        if (images.dim(axis) % multiple != 0) {
            throw ShapeError("unet.forward", std::string(axis == 2 ? "height" : "width") + " " +
                                                 std::to_string(images.dim(axis)) +
                                                 " must be a multiple of " + std::to_string(multiple));
        }
    }

    ForwardResult<T> result;
    std::vector<ag::Tensor<T>> skips;
    ag::Tensor<T> x = images;
    for (auto& block : encoder_) {
        auto features = run_block(tape, block, x, ctx);
        skips.push_back(features);
        x = ag::maxpool2(tape, features);
    }
    result.deepest_skip = skips.back();

    if (bottleneck_) {
        // Enhancement sits after the bottleneck SE unless configured ahead of it.
        auto& b = *bottleneck_;
        auto h = run_convs(tape, b, x, ctx);
        if (cfg_.fre.before_se) {
            h = enhance(tape, h, ctx, bottleneck_hook);
            h = layers::se_block(tape, h, b.se);
        } else {
            h = layers::se_block(tape, h, b.se);
            h = enhance(tape, h, ctx, bottleneck_hook);
        }
        x = h;
        result.bottleneck = x;
    } else {
        x = ag::conv2d(tape, x, bridge_weight_, bridge_bias_, 1, 0);
    }

    if (cfg_.variant == ModelVariant::Supervision) {
        auto aux = ag::conv2d(tape, x, aux_weight_, aux_bias_, 1, 0);
        result.aux_logits = ag::upsample_nearest(tape, aux, multiple);
    }

    for (int s = cfg_.depth - 1; s >= 0; --s) {
        auto& stage = decoder_[static_cast<std::size_t>(s)];
        auto up = ag::conv2d(tape, ag::upsample_nearest2(tape, x), stage.up_weight, stage.up_bias, 1, 1);
        auto merged = ag::concat_channels(tape, skips[static_cast<std::size_t>(s)], up);
        x = run_block(tape, stage.block, merged, ctx);
    }
    result.logits = ag::conv2d(tape, x, head_weight_, head_bias_, 1, 0);
    return result;
}

template class Network<float>;
template class Network<double>;

}  // namespace fre::model
