#include "fre/model/config.hpp"

#include <array>
#include <utility>

#include "fre/layers/channel_dropout.hpp"

namespace fre::model {

namespace {

constexpr std::array<std::pair<ModelVariant, std::string_view>, 5> kVariantNames{{
    {ModelVariant::Baseline, "baseline"},
    {ModelVariant::NoDeepLayers, "no_deep_layers"},
    {ModelVariant::Supervision, "supervision"},
    {ModelVariant::Dropout, "dropout"},
    {ModelVariant::Fre, "fre"},
}};

}  // namespace

std::string_view to_string(ModelVariant v) {
    for (const auto& [variant, name] : kVariantNames) {
        if (variant == v) return name;
    }
    return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
    for (const auto& [variant, n] : kVariantNames) {
        if (n == name) return variant;
    }
    throw ConfigError("unknown model variant '" + std::string(name) +
                      "' (expected baseline, no_deep_layers, supervision, dropout or fre)");
}

std::string_view display_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::Baseline: return "U-Net + SEblock";
        case ModelVariant::NoDeepLayers: return "U-Net + SEblock without deep layers";
        case ModelVariant::Supervision: return "U-Net + SEblock + Supervision";
        case ModelVariant::Dropout: return "Dropout (same percentage as FRE)";
        case ModelVariant::Fre: return "U-Net + SEblock + FRE";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw ConfigError(std::string("model: ") + what + " must be >= 1, got " + std::to_string(v));
    };
    positive(input_channels, "input_channels");
    positive(base_width, "base_width");
    positive(depth, "depth");
    positive(se_reduction, "se_reduction");
    if (classes < 2) throw ConfigError("model: classes must be >= 2, got " + std::to_string(classes));
    if (depth > 8) throw ConfigError("model: depth above 8 is not supported");

    const bool fre_on = fre.active();
    const bool drop_on = dropout_rate.has_value();
    const bool sup_on = supervision.has_value();
    auto expect = [&](bool f, bool d, bool s, const char* needs) {
        if (fre_on != f || drop_on != d || sup_on != s) {
            throw ConfigError("model: variant '" + std::string(to_string(variant)) + "' requires " + needs);
        }
    };
    switch (variant) {
        case ModelVariant::Baseline:
        case ModelVariant::NoDeepLayers:
            expect(false, false, false, "no FRE, dropout or supervision settings");
            break;
        case ModelVariant::Fre: expect(true, false, false, "an active FRE config and nothing else"); break;
        case ModelVariant::Dropout: expect(false, true, false, "a dropout rate and nothing else"); break;
        case ModelVariant::Supervision: expect(false, false, true, "a supervision config and nothing else"); break;
    }
    if (fre_on) fre.validate(bottleneck_width());
    if (drop_on) layers::validate_dropout_rate(*dropout_rate);
    if (sup_on) supervision->validate();
}

}  // namespace fre::model
