#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "fre/layers/fre_module.hpp"
#include "fre/train/supervision.hpp"

namespace fre::model {

enum class ModelVariant { Baseline, NoDeepLayers, Supervision, Dropout, Fre };

std::string_view to_string(ModelVariant v);
ModelVariant parse_variant(std::string_view name);
// Row label used in comparison tables.
std::string_view display_name(ModelVariant v);

struct ModelConfig {
    int input_channels = 1;
    int classes = 3;
    int base_width = 32;
    int depth = 4;  // number of downsamplings
    int se_reduction = 16;
    ModelVariant variant = ModelVariant::Baseline;
    layers::FreConfig fre;
    std::optional<double> dropout_rate;
    std::optional<train::SupervisionConfig> supervision;
    std::uint64_t dropout_seed = 0;

    int stage_width(int stage) const { return base_width << stage; }
    int bottleneck_width() const { return base_width << depth; }
    int spatial_multiple() const { return 1 << depth; }

    void validate() const;
};

}  // namespace fre::model
