#pragma once

#include <json.hpp>
#include <string>
#include <string_view>

#include "fre/errors.hpp"

#include "fre/layers/fre_module.hpp"
#include "fre/model/config.hpp"

namespace fre::model {

using Json = nlohmann::json;

// Assigns j[key] to `out` when present and not null; type errors become
// ConfigError naming where.key.
template <typename V>
void read_opt(const Json& j, const char* key, V& out, std::string_view where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    try {
        out = it->get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

std::string_view to_string(layers::FreMode mode);
layers::FreMode parse_fre_mode(std::string_view name);

Json fre_config_to_json(const layers::FreConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
layers::FreConfig fre_config_from_json(const Json& j);

Json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j);

// Throws ConfigError naming the first key of `j` that is not in `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where);

}  // namespace fre::model
