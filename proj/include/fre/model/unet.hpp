#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fre/autograd/ops.hpp"
#include "fre/layers/fre_module.hpp"
#include "fre/layers/se_block.hpp"
#include "fre/model/config.hpp"
#include "fre/model/parameters.hpp"

namespace fre::model {

struct ForwardContext {
    ag::Phase phase = ag::Phase::Eval;
    int epoch = 0;
    int batch = 0;
    // Train-phase passes normally blend batch statistics into the running
    // statistics; probe passes turn this off.
    bool update_bn_stats = true;
};

template <typename T>
struct ForwardResult {
    ag::Tensor<T> logits;
    std::optional<ag::Tensor<T>> aux_logits;  // supervision variant only
    ag::Tensor<T> bottleneck;    // post-ReLU/SE bottleneck output as seen by the decoder; undefined without one
    ag::Tensor<T> deepest_skip;  // deepest encoder output carried by a skip connection
};

// U-Net with squeeze-and-excitation blocks. Encoder stages are
// 2x[conv3x3 -> BN -> ReLU] -> SE -> maxpool; decoder stages are
// upsample -> conv3x3 -> concat(skip) -> 2x[conv3x3 -> BN -> ReLU] -> SE.
template <typename T>
class Network {
public:
    // Applied at the enhancement site after FRE/dropout; used by
    // instrumentation and equivalence checks.
    using FeatureHook = std::function<ag::Tensor<T>(ag::Tape<T>&, const ag::Tensor<T>&)>;

    static Network build(const ModelConfig& cfg, std::uint64_t weight_seed);

    ForwardResult<T> forward(ag::Tape<T>& tape, const ag::Tensor<T>& images, const ForwardContext& ctx,
                             const FeatureHook* bottleneck_hook = nullptr);

    // Redraws the enhanced channel set for `epoch`.
    void begin_epoch(int epoch);
    const layers::SelectionState& selection() const { return selection_; }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& parameters() { return params_; }
    const ParameterStore<T>& parameters() const { return params_; }

private:
    struct ConvBn {
        ag::Tensor<T> weight, gamma, beta;
        ag::BatchNormState<T> bn;
    };
    struct Block {
        ConvBn first, second;
        layers::SeWeights<T> se;
    };
    struct UpStage {
        ag::Tensor<T> up_weight, up_bias;
        Block block;
    };

    Network() = default;

    ConvBn make_conv_bn(const std::string& prefix, int in_ch, int out_ch);
    Block make_block(const std::string& prefix, int in_ch, int out_ch);
    ag::Tensor<T>& make_conv(const std::string& name, int out_ch, int in_ch, int k);
    ag::Tensor<T> run_convs(ag::Tape<T>& tape, Block& block, const ag::Tensor<T>& x, const ForwardContext& ctx);
    ag::Tensor<T> run_block(ag::Tape<T>& tape, Block& block, const ag::Tensor<T>& x, const ForwardContext& ctx);
    ag::Tensor<T> enhance(ag::Tape<T>& tape, const ag::Tensor<T>& x, const ForwardContext& ctx,
                          const FeatureHook* hook);

    ModelConfig cfg_;
    std::uint64_t weight_seed_ = 0;
    ParameterStore<T> params_;
    std::vector<Block> encoder_;
    std::optional<Block> bottleneck_;
    ag::Tensor<T> bridge_weight_, bridge_bias_;  // no-deep-layers replacement
    std::vector<UpStage> decoder_;                // index = stage, run deepest first
    ag::Tensor<T> head_weight_, head_bias_;
    ag::Tensor<T> aux_weight_, aux_bias_;
    layers::SelectionState selection_;
};

}  // namespace fre::model
