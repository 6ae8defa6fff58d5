#include "fre/model/serialization.hpp"

#include <algorithm>
#include <string>

namespace fre::model {

void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
        }
    }
}

std::string_view to_string(layers::FreMode mode) {
    switch (mode) {
        case layers::FreMode::RandomPerEpoch: return "random";
        case layers::FreMode::FixedList: return "fixed";
        case layers::FreMode::Off: return "off";
    }
    return "off";
}

layers::FreMode parse_fre_mode(std::string_view name) {
    if (name == "random") return layers::FreMode::RandomPerEpoch;
    if (name == "fixed") return layers::FreMode::FixedList;
    if (name == "off") return layers::FreMode::Off;
    throw ConfigError("fre.mode: expected random, fixed or off, got '" + std::string(name) + "'");
}

Json fre_config_to_json(const layers::FreConfig& cfg) {
    return Json{{"B", cfg.count},
                {"X", cfg.multiplier},
                {"mode", std::string(to_string(cfg.mode))},
                {"fixed_channels", cfg.fixed_channels},
                {"seed", cfg.seed},
                {"per_batch", cfg.per_batch},
                {"before_se", cfg.before_se}};
}

layers::FreConfig fre_config_from_json(const Json& j) {
    reject_unknown_keys(j, {"B", "X", "mode", "fixed_channels", "seed", "per_batch", "before_se"}, "fre");
    layers::FreConfig cfg;
    read_opt(j, "B", cfg.count, "fre");
    read_opt(j, "X", cfg.multiplier, "fre");
    std::string mode = "random";
    read_opt(j, "mode", mode, "fre");
    cfg.mode = parse_fre_mode(mode);
    read_opt(j, "fixed_channels", cfg.fixed_channels, "fre");
    if (cfg.mode == layers::FreMode::FixedList && cfg.fixed_channels.empty()) {
        cfg.fixed_channels = layers::FreConfig::default_fixed_channels();
    }
    read_opt(j, "seed", cfg.seed, "fre");
    read_opt(j, "per_batch", cfg.per_batch, "fre");
    read_opt(j, "before_se", cfg.before_se, "fre");
    return cfg;
}

Json model_config_to_json(const ModelConfig& cfg) {
    Json j{{"input_channels", cfg.input_channels},
           {"classes", cfg.classes},
           {"base_width", cfg.base_width},
           {"depth", cfg.depth},
           {"se_reduction", cfg.se_reduction},
           {"variant", std::string(to_string(cfg.variant))},
           {"fre", fre_config_to_json(cfg.fre)},
           {"dropout_rate", nullptr},
           {"supervision_lambda", nullptr},
           {"dropout_seed", cfg.dropout_seed}};
    if (cfg.dropout_rate) j["dropout_rate"] = *cfg.dropout_rate;
    if (cfg.supervision) j["supervision_lambda"] = cfg.supervision->lambda;
    return j;
}

ModelConfig model_config_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"input_channels", "classes", "base_width", "depth", "se_reduction", "variant", "fre",
                         "dropout_rate", "supervision_lambda", "dropout_seed"},
                        "model");
    ModelConfig cfg;
    read_opt(j, "input_channels", cfg.input_channels, "model");
    read_opt(j, "classes", cfg.classes, "model");
    read_opt(j, "base_width", cfg.base_width, "model");
    read_opt(j, "depth", cfg.depth, "model");
    read_opt(j, "se_reduction", cfg.se_reduction, "model");
    std::string variant = "baseline";
    read_opt(j, "variant", variant, "model");
    cfg.variant = parse_variant(variant);
    if (auto it = j.find("fre"); it != j.end() && !it->is_null()) {
        cfg.fre = fre_config_from_json(*it);
    } else {
        cfg.fre.mode = layers::FreMode::Off;
    }
    if (auto it = j.find("dropout_rate"); it != j.end() && !it->is_null()) cfg.dropout_rate = it->get<double>();
    if (auto it = j.find("supervision_lambda"); it != j.end() && !it->is_null()) {
        cfg.supervision = train::SupervisionConfig{it->get<double>()};
    }
    read_opt(j, "dropout_seed", cfg.dropout_seed, "model");
    return cfg;
}

}  // namespace fre::model
