#include "fre/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "fre/layers/channel_dropout.hpp"
#include "fre/random.hpp"

namespace fre::cli {

using model::read_opt;
using model::reject_unknown_keys;

namespace {

const Json& section(const Json& raw, const char* key) {
    static const Json empty = Json::object();
    auto it = raw.find(key);
    if (it == raw.end() || it->is_null()) return empty;
    if (!it->is_object()) throw ConfigError(std::string(key) + ": expected a JSON object");
    return *it;
}

bool has(const Json& raw, const char* key) {
    auto it = raw.find(key);
    return it != raw.end() && !it->is_null();
}

Seeds resolve_seeds(std::uint64_t seed, const Json& j) {
    reject_unknown_keys(j, {"weights", "fre", "dropout", "data", "shuffle"}, "seeds");
    Seeds s{named_seed(seed, "weights"), named_seed(seed, "fre"), named_seed(seed, "dropout"),
            named_seed(seed, "data"), named_seed(seed, "shuffle")};
    read_opt(j, "weights", s.weights, "seeds");
    read_opt(j, "fre", s.fre, "seeds");
    read_opt(j, "dropout", s.dropout, "seeds");
    read_opt(j, "data", s.data, "seeds");
    read_opt(j, "shuffle", s.shuffle, "seeds");
    return s;
}

DataConfig resolve_data(const Json& j) {
    reject_unknown_keys(j, {"path", "scheme", "synthetic", "count", "split"}, "data");
    DataConfig d;
    std::string path;
    read_opt(j, "path", path, "data");
    if (!path.empty()) d.path = path;
    std::string scheme = "three_class";
    read_opt(j, "scheme", scheme, "data");
    d.scheme = data::parse_class_scheme(scheme);
    d.synthetic.scheme = d.scheme;
    const Json& s = section(j, "synthetic");
    reject_unknown_keys(s,
                        {"image_size", "min_cells", "max_cells", "min_radius", "max_radius", "membrane_width", "noise",
                         "blur_radius"},
                        "data.synthetic");
    read_opt(s, "image_size", d.synthetic.image_size, "data.synthetic");
    read_opt(s, "min_cells", d.synthetic.min_cells, "data.synthetic");
    read_opt(s, "max_cells", d.synthetic.max_cells, "data.synthetic");
    read_opt(s, "min_radius", d.synthetic.min_radius, "data.synthetic");
    read_opt(s, "max_radius", d.synthetic.max_radius, "data.synthetic");
    read_opt(s, "membrane_width", d.synthetic.membrane_width, "data.synthetic");
    read_opt(s, "noise", d.synthetic.noise, "data.synthetic");
    read_opt(s, "blur_radius", d.synthetic.blur_radius, "data.synthetic");
    read_opt(j, "count", d.count, "data");
    read_opt(j, "split", d.split, "data");
    if (d.split[0] < 1 || d.split[1] < 1 || d.split[2] < 0) {
        throw ConfigError("data.split: need at least one training and one validation image");
    }
    if (!d.path && d.count < d.split[0] + d.split[1] + d.split[2]) {
        throw ConfigError("data.count " + std::to_string(d.count) + " is smaller than the split total");
    }
    return d;
}

train::TrainConfig resolve_train(const Json& j, int& checkpoint_every) {
    reject_unknown_keys(j,
                        {"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "momentum", "probe_size",
                         "checkpoint_every", "stats"},
                        "train");
    train::TrainConfig t;
    read_opt(j, "epochs", t.epochs, "train");
    read_opt(j, "batch_size", t.batch_size, "train");
    std::string opt = "adam";
    read_opt(j, "optimizer", opt, "train");
    t.optimizer.kind = train::parse_optimizer(opt);
    read_opt(j, "lr", t.optimizer.lr, "train");
    read_opt(j, "beta1", t.optimizer.beta1, "train");
    read_opt(j, "beta2", t.optimizer.beta2, "train");
    read_opt(j, "momentum", t.optimizer.momentum, "train");
    read_opt(j, "probe_size", t.probe_size, "train");
    read_opt(j, "checkpoint_every", checkpoint_every, "train");
    if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
    const Json& s = section(j, "stats");
    reject_unknown_keys(s, {"site_means", "channel_sums", "channels"}, "train.stats");
    read_opt(s, "site_means", t.stats.site_means, "train.stats");
    read_opt(s, "channel_sums", t.stats.channel_sums, "train.stats");
    read_opt(s, "channels", t.stats.channels, "train.stats");
    t.validate();
    return t;
}

SearchConfig resolve_search(const Json& j) {
    reject_unknown_keys(j, {"n_trials", "space", "gamma", "n_startup", "n_ei", "trial_epochs", "vary_seed", "random"},
                        "search");
    SearchConfig s;
    read_opt(j, "n_trials", s.n_trials, "search");
    read_opt(j, "gamma", s.tpe.gamma, "search");
    read_opt(j, "n_startup", s.tpe.n_startup, "search");
    read_opt(j, "n_ei", s.tpe.n_ei, "search");
    read_opt(j, "random", s.tpe.random_only, "search");
    read_opt(j, "vary_seed", s.vary_seed, "search");
    int trial_epochs = 0;
    read_opt(j, "trial_epochs", trial_epochs, "search");
    if (trial_epochs > 0) s.trial_epochs = trial_epochs;
    auto it = j.find("space");
    if (it == j.end() || !it->is_array() || it->empty()) {
        throw ConfigError("search.space: expected a non-empty list of dimensions");
    }
    for (const auto& d : *it) {
        reject_unknown_keys(d, {"name", "type", "lo", "hi", "log"}, "search.space[]");
        tpe::Dimension dim;
        read_opt(d, "name", dim.name, "search.space[]");
        std::string type = "real";
        read_opt(d, "type", type, "search.space[]");
        if (type == "int") dim.kind = tpe::DimKind::Integer;
        else if (type != "real") throw ConfigError("search.space[].type must be int or real");
        if (!d.contains("lo") || !d.contains("hi")) throw ConfigError("search.space[] '" + dim.name + "' needs lo and hi");
        read_opt(d, "lo", dim.lo, "search.space[]");
        read_opt(d, "hi", dim.hi, "search.space[]");
        read_opt(d, "log", dim.log, "search.space[]");
        s.space.dims.push_back(dim);
    }
    if (s.n_trials < 1) throw ConfigError("search.n_trials must be >= 1");
    s.space.validate();
    s.tpe.validate();
    return s;
}

}  // namespace

std::vector<std::string> RunConfig::class_names() const {
    if (model.classes == data::class_count(data.scheme)) return data::class_names(data.scheme);
    std::vector<std::string> names;
    for (int c = 0; c < model.classes; ++c) names.push_back("class" + std::to_string(c));
    return names;
}

RunConfig resolve(const Json& raw) {
    reject_unknown_keys(raw,
                        {"seed", "seeds", "output_dir", "model", "fre", "dropout", "supervision", "train", "data",
                         "search"},
                        "config");
    RunConfig cfg;
    read_opt(raw, "seed", cfg.seed, "config");
    cfg.seeds = resolve_seeds(cfg.seed, section(raw, "seeds"));
    std::string out = cfg.output_dir.string();
    read_opt(raw, "output_dir", out, "config");
    cfg.output_dir = out;

    cfg.data = resolve_data(section(raw, "data"));
    cfg.data.synthetic.seed = cfg.seeds.data;

    const Json& m = section(raw, "model");
    reject_unknown_keys(m, {"input_channels", "classes", "base_width", "depth", "se_reduction", "variant"}, "model");
    auto& mc = cfg.model;
    mc.classes = data::class_count(cfg.data.scheme);
    read_opt(m, "input_channels", mc.input_channels, "model");
    read_opt(m, "classes", mc.classes, "model");
    read_opt(m, "base_width", mc.base_width, "model");
    read_opt(m, "depth", mc.depth, "model");
    read_opt(m, "se_reduction", mc.se_reduction, "model");
    std::string variant = "baseline";
    read_opt(m, "variant", variant, "model");
    mc.variant = model::parse_variant(variant);
    if (!cfg.data.path) {
        if (mc.classes != data::class_count(cfg.data.scheme)) {
            throw ConfigError("model.classes " + std::to_string(mc.classes) + " does not match data.scheme " +
                              data::to_string(cfg.data.scheme));
        }
        if (mc.input_channels != 1) throw ConfigError("synthetic data is single-channel; set model.input_channels to 1");
        cfg.data.synthetic.validate(mc.depth);
    }

    if (has(raw, "fre")) {
        Json fre = section(raw, "fre");
        const bool explicit_seed = fre.contains("seed");
        cfg.fre_section = model::fre_config_from_json(fre);
        if (!explicit_seed) cfg.fre_section->seed = cfg.seeds.fre;
        cfg.seeds.fre = cfg.fre_section->seed;
    }
    const Json& d = section(raw, "dropout");
    reject_unknown_keys(d, {"rate", "derive_from_fre"}, "dropout");
    double rate = 0.0;
    read_opt(d, "rate", rate, "dropout");
    read_opt(d, "derive_from_fre", cfg.dropout_from_fre, "dropout");
    if (has(d, "rate")) cfg.dropout_rate = rate;
    if (has(raw, "supervision")) {
        const Json& s = section(raw, "supervision");
        reject_unknown_keys(s, {"lambda"}, "supervision");
        train::SupervisionConfig sup;
        if (!has(s, "lambda")) throw ConfigError("supervision.lambda is required");
        read_opt(s, "lambda", sup.lambda, "supervision");
        sup.validate();
        cfg.supervision = sup;
    }

    mc.dropout_seed = cfg.seeds.dropout;
    mc.fre.mode = layers::FreMode::Off;
    switch (mc.variant) {
        case model::ModelVariant::Fre:
            if (!cfg.fre_section || !cfg.fre_section->active()) {
                throw ConfigError("variant fre needs a fre section with mode random or fixed");
            }
            mc.fre = *cfg.fre_section;
            break;
        case model::ModelVariant::Dropout:
            if (cfg.dropout_from_fre) {
                if (!cfg.fre_section) throw ConfigError("dropout.derive_from_fre needs a fre section");
                if (cfg.dropout_rate) throw ConfigError("give either dropout.rate or dropout.derive_from_fre, not both");
                mc.dropout_rate = layers::dropout_rate_for(cfg.fre_section->count, mc.bottleneck_width());
            } else if (cfg.dropout_rate) {
                mc.dropout_rate = cfg.dropout_rate;
            } else {
                throw ConfigError("variant dropout needs dropout.rate or dropout.derive_from_fre");
            }
            break;
        case model::ModelVariant::Supervision:
            if (!cfg.supervision) throw ConfigError("variant supervision needs supervision.lambda");
            mc.supervision = cfg.supervision;
            break;
        default: break;
    }
    mc.validate();
    if (cfg.fre_section && cfg.fre_section->active()) cfg.fre_section->validate(mc.bottleneck_width());

    cfg.train = resolve_train(section(raw, "train"), cfg.checkpoint_every);
    cfg.train.seed = cfg.seeds.shuffle;
    for (int ch : cfg.train.stats.channels) {
        if (ch < 0 || ch >= mc.bottleneck_width()) {
            throw ConfigError("train.stats.channels: channel " + std::to_string(ch) + " outside bottleneck width " +
                              std::to_string(mc.bottleneck_width()));
        }
    }
    if (has(raw, "search")) cfg.search = resolve_search(section(raw, "search"));
    if (cfg.search) {
        cfg.search->tpe.seed = named_seed(cfg.seed, "search");
        for (const auto& dim : cfg.search->space.dims) {
            Json probe = raw;
            set_path(probe, dim.name, dim.kind == tpe::DimKind::Integer ? Json(static_cast<long long>(dim.lo)) : Json(dim.lo));
            probe.erase("search");
            try {
                resolve(probe);
            } catch (const ConfigError& e) {
                throw ConfigError("search dimension '" + dim.name + "' does not apply to this config: " + e.what());
            }
        }
    }
    return cfg;
}

Json to_json(const RunConfig& cfg) {
    const auto& mc = cfg.model;
    Json j;
    j["seed"] = cfg.seed;
    j["seeds"] = Json{{"weights", cfg.seeds.weights}, {"fre", cfg.seeds.fre}, {"dropout", cfg.seeds.dropout},
                      {"data", cfg.seeds.data}, {"shuffle", cfg.seeds.shuffle}};
    j["output_dir"] = cfg.output_dir.string();
    j["model"] = Json{{"input_channels", mc.input_channels}, {"classes", mc.classes}, {"base_width", mc.base_width},
                      {"depth", mc.depth}, {"se_reduction", mc.se_reduction},
                      {"variant", std::string(model::to_string(mc.variant))}};
    if (cfg.fre_section) j["fre"] = model::fre_config_to_json(*cfg.fre_section);
    Json dropout = Json::object();
    if (cfg.dropout_rate) dropout["rate"] = *cfg.dropout_rate;
    if (cfg.dropout_from_fre) dropout["derive_from_fre"] = true;
    if (!dropout.empty()) j["dropout"] = dropout;
    if (cfg.supervision) j["supervision"] = Json{{"lambda", cfg.supervision->lambda}};
    const auto& t = cfg.train;
    j["train"] = Json{{"epochs", t.epochs},
                      {"batch_size", t.batch_size},
                      {"optimizer", std::string(train::to_string(t.optimizer.kind))},
                      {"lr", t.optimizer.lr},
                      {"beta1", t.optimizer.beta1},
                      {"beta2", t.optimizer.beta2},
                      {"momentum", t.optimizer.momentum},
                      {"probe_size", t.probe_size},
                      {"checkpoint_every", cfg.checkpoint_every},
                      {"stats", Json{{"site_means", t.stats.site_means},
                                     {"channel_sums", t.stats.channel_sums},
                                     {"channels", t.stats.channels}}}};
    const auto& d = cfg.data;
    const auto& s = d.synthetic;
    j["data"] = Json{{"scheme", data::to_string(d.scheme)},
                     {"count", d.count},
                     {"split", d.split},
                     {"synthetic", Json{{"image_size", s.image_size},
                                        {"min_cells", s.min_cells},
                                        {"max_cells", s.max_cells},
                                        {"min_radius", s.min_radius},
                                        {"max_radius", s.max_radius},
                                        {"membrane_width", s.membrane_width},
                                        {"noise", s.noise},
                                        {"blur_radius", s.blur_radius}}}};
    if (d.path) j["data"]["path"] = d.path->string();
    if (cfg.search) {
        const auto& sc = *cfg.search;
        Json space = Json::array();
        for (const auto& dim : sc.space.dims) {
            space.push_back(Json{{"name", dim.name},
                                 {"type", dim.kind == tpe::DimKind::Integer ? "int" : "real"},
                                 {"lo", dim.lo},
                                 {"hi", dim.hi},
                                 {"log", dim.log}});
        }
        j["search"] = Json{{"n_trials", sc.n_trials}, {"space", space},       {"gamma", sc.tpe.gamma},
                           {"n_startup", sc.tpe.n_startup}, {"n_ei", sc.tpe.n_ei}, {"vary_seed", sc.vary_seed},
                           {"random", sc.tpe.random_only}};
        if (sc.trial_epochs) j["search"]["trial_epochs"] = *sc.trial_epochs;
    }
    return j;
}

void set_path(Json& j, const std::string& dotted, Json value) {
    if (dotted.empty()) throw ConfigError("empty config path");
    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("malformed config path '" + dotted + "'");
        if (!node->is_object()) {
            if (!node->is_null()) throw ConfigError("config path '" + dotted + "' runs through a non-object");
            *node = Json::object();
        }
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

void apply_override(Json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    set_path(j, assignment.substr(0, eq), std::move(value));
}

Json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        out << text;
        if (!out.flush()) throw DataError(tmp.string(), "write failed");
    }
    std::filesystem::rename(tmp, path);
}

data::DatasetSplit load_data(const RunConfig& cfg) {
    if (cfg.data.path) return data::load_dataset(*cfg.data.path, cfg.model.classes, cfg.model.input_channels);
    const auto& sp = cfg.data.split;
    return data::split_in_order(data::generate(cfg.data.synthetic, cfg.data.count), sp[0], sp[1], sp[2]);
}

}  // namespace fre::cli
