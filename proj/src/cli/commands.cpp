#include "fre/cli/commands.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "fre/model/checkpoint.hpp"

namespace fre::cli {

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string(), "cannot read");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json iou_json(const metrics::SegMetrics& m) {
    Json per = Json::array();
    for (const auto& v : m.per_class_iou) per.push_back(v ? Json(*v) : Json(nullptr));
    return Json{{"per_class_iou", per}, {"miou", m.mean_iou}};
}

metrics::SegMetrics iou_from_json(const Json& j) {
    metrics::SegMetrics m;
    for (const auto& v : j.at("per_class_iou")) {
        m.per_class_iou.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    m.mean_iou = j.at("miou").get<double>();
    return m;
}

Json history_json(const std::vector<train::HistoryRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        Json per = Json::array();
        for (const auto& v : r.per_class_iou) per.push_back(v ? Json(*v) : Json(nullptr));
        out.push_back(Json{{"epoch", r.epoch}, {"split", r.split}, {"iou", per}, {"miou", r.mean_iou}, {"loss", r.loss}});
    }
    return out;
}

std::vector<train::HistoryRow> history_from_json(const Json& j) {
    std::vector<train::HistoryRow> rows;
    for (const auto& r : j) {
        train::HistoryRow h;
        h.epoch = r.at("epoch").get<int>();
        h.split = r.at("split").get<std::string>();
        for (const auto& v : r.at("iou")) {
            h.per_class_iou.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
        h.mean_iou = r.at("miou").get<double>();
        h.loss = r.at("loss").get<double>();
        rows.push_back(std::move(h));
    }
    return rows;
}

Json stats_json(const std::vector<train::ActivationStat>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        out.push_back(Json::array({r.epoch, std::string(train::to_string(r.site)), std::string(train::to_string(r.statistic)),
                                   r.channel ? Json(*r.channel) : Json(nullptr), r.value}));
    }
    return out;
}

std::vector<train::ActivationStat> stats_from_json(const Json& j) {
    std::vector<train::ActivationStat> rows;
    for (const auto& r : j) {
        train::ActivationStat s;
        s.epoch = r.at(0).get<int>();
        s.site = r.at(1).get<std::string>() == "skip" ? train::StatSite::Skip : train::StatSite::Bottleneck;
        s.statistic = r.at(2).get<std::string>() == "sum" ? train::StatKind::Sum : train::StatKind::Mean;
        if (!r.at(3).is_null()) s.channel = r.at(3).get<int>();
        s.value = r.at(4).get<double>();
        rows.push_back(s);
    }
    return rows;
}

void write_run_csvs(const fs::path& dir, const train::TrainState& state, const std::vector<std::string>& names) {
    std::ostringstream metrics_csv, stats_csv;
    train::write_history_csv(metrics_csv, state.history, names);
    train::write_stats_csv(stats_csv, state.stats);
    write_text_file(dir / kMetricsCsv, metrics_csv.str());
    write_text_file(dir / kStatsCsv, stats_csv.str());
}

std::string summary_text(const RunConfig& cfg, const TrainOutcome& outcome) {
    const auto names = cfg.class_names();
    std::ostringstream out;
    out << "variant: " << model::display_name(cfg.model.variant) << '\n';
    if (cfg.model.variant == model::ModelVariant::Fre) {
        out << "B = " << cfg.model.fre.count << ", X = " << cfg.model.fre.multiplier << '\n';
    }
    if (cfg.model.dropout_rate) out << "dropout rate = " << *cfg.model.dropout_rate << '\n';
    if (cfg.model.supervision) out << "lambda = " << cfg.model.supervision->lambda << '\n';
    out << "epochs: " << cfg.train.epochs << ", best validation epoch: " << outcome.state.best_epoch << '\n';
    const std::string label(model::display_name(cfg.model.variant));
    if (outcome.val) {
        std::vector<metrics::TableRow> rows{{label, outcome.val->metrics}};
        out << "\nvalidation\n" << metrics::format_table(rows, names);
    }
    if (outcome.test) {
        std::vector<metrics::TableRow> rows{{label, outcome.test->metrics}};
        out << "\ntest\n" << metrics::format_table(rows, names);
    }
    return out.str();
}

Json summary_json(const RunConfig& cfg, const TrainOutcome& outcome) {
    Json j;
    j["variant"] = std::string(model::to_string(cfg.model.variant));
    j["label"] = std::string(model::display_name(cfg.model.variant));
    j["class_names"] = cfg.class_names();
    if (cfg.model.variant == model::ModelVariant::Fre) {
        j["B"] = cfg.model.fre.count;
        j["X"] = cfg.model.fre.multiplier;
        j["fre_mode"] = std::string(model::to_string(cfg.model.fre.mode));
        if (cfg.model.fre.mode == layers::FreMode::FixedList) j["fixed_channels"] = cfg.model.fre.fixed_channels;
    }
    if (cfg.model.dropout_rate) j["dropout_rate"] = *cfg.model.dropout_rate;
    if (cfg.model.supervision) j["lambda"] = cfg.model.supervision->lambda;
    j["epochs"] = cfg.train.epochs;
    j["best_epoch"] = outcome.state.best_epoch;
    j["best_val_miou"] = outcome.state.best_miou;
    j["val"] = outcome.val ? iou_json(outcome.val->metrics) : Json(nullptr);
    j["test"] = outcome.test ? iou_json(outcome.test->metrics) : Json(nullptr);
    return j;
}

model::CheckpointData resume_checkpoint(const model::Network<float>& net, const train::Optimizer<float>& optim,
                                        const train::TrainState& state, const Json& config) {
    Json meta{{"config", config},
              {"epochs_done", state.epochs_done},
              {"best_epoch", state.best_epoch},
              {"best_miou", state.best_miou},
              {"history", history_json(state.history)},
              {"stats", stats_json(state.stats)},
              {"batch_size", config.at("train").at("batch_size")}};
    auto data = model::make_checkpoint(net, meta);
    for (auto& t : optim.export_state(net.parameters())) data.tensors.push_back(std::move(t));
    const auto& entries = net.parameters().entries();
    for (std::size_t k = 0; k < entries.size() && !state.best_parameters.empty(); ++k) {
        data.tensors.push_back({"best." + entries[k].name, entries[k].tensor.shape(), state.best_parameters[k]});
    }
    return data;
}

// Copy of j with j[a][b] removed; used where that one value may change on resume.
Json without(Json j, const char* a, const char* b) {
    if (j.contains(a) && j[a].is_object()) j[a].erase(b);
    return j;
}

std::string dir_name(const fs::path& p) {
    auto n = p.lexically_normal();
    if (n.filename().empty()) n = n.parent_path();
    return n.filename().string();
}

}  // namespace

void cmd_generate(const GenerateOptions& opt, std::ostream& log) {
    if (opt.out.empty()) throw ConfigError("generate: an output directory is required");
    data::SyntheticSpec spec;
    spec.seed = opt.seed;
    spec.scheme = opt.scheme;
    spec.image_size = opt.image_size;
    spec.noise = opt.noise;
    spec.validate();
    const int need = opt.split[0] + opt.split[1] + opt.split[2];
    if (opt.count < need) throw ConfigError("generate: count is smaller than the split total " + std::to_string(need));
    auto split = data::split_in_order(data::generate(spec, opt.count), opt.split[0], opt.split[1], opt.split[2]);
    data::write_dataset(opt.out, split);
    Json info{{"classes", data::class_count(opt.scheme)},
              {"class_names", data::class_names(opt.scheme)},
              {"scheme", data::to_string(opt.scheme)},
              {"channels", 1},
              {"image_size", opt.image_size},
              {"seed", opt.seed}};
    write_text_file(opt.out / "dataset.json", info.dump(2) + "\n");
    log << "wrote " << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
        << " train/val/test images to " << opt.out.string() << '\n';
}

TrainOutcome cmd_train(const Json& raw, bool resume, std::ostream& log) {
    const RunConfig cfg = resolve(raw);
    const Json echo = to_json(cfg);
    const auto splits = load_data(cfg);
    if (splits.train.empty() || splits.val.empty()) throw DataError("", "train and val splits must be non-empty");
    const auto names = cfg.class_names();
    const fs::path dir = cfg.output_dir;

    auto net = model::Network<float>::build(cfg.model, cfg.seeds.weights);
    train::TrainState state;
    std::optional<model::CheckpointData> last;
    if (resume && fs::exists(dir / kLastCheckpoint)) {
        last = model::read_checkpoint(dir / kLastCheckpoint);
        const Json& meta = last->meta();
        if (without(meta.at("config"), "train", "epochs") != without(echo, "train", "epochs")) {
            throw ConfigError("cannot resume: " + (dir / kLastCheckpoint).string() + " was written under a different config");
        }
        model::load_parameters(net.parameters(), *last);
        state.epochs_done = meta.at("epochs_done").get<int>();
        state.best_epoch = meta.at("best_epoch").get<int>();
        state.best_miou = meta.at("best_miou").get<double>();
        state.history = history_from_json(meta.at("history"));
        state.stats = stats_from_json(meta.at("stats"));
        for (const auto& e : net.parameters().entries()) {
            const auto* rec = last->find("best." + e.name);
            if (rec == nullptr) throw DataError((dir / kLastCheckpoint).string(), "missing best parameters");
            state.best_parameters.push_back(rec->values);
        }
        log << "resuming after epoch " << state.epochs_done << '\n';
    }

    fs::create_directories(dir);
    write_text_file(dir / kConfigFile, echo.dump(2) + "\n");

    train::EpochHooks hooks;
    hooks.restore_optimizer = [&](const model::Network<float>& n, train::Optimizer<float>& optim) {
        optim.import_state(n.parameters(), *last);
    };
    hooks.on_epoch_end = [&](const model::Network<float>& n, const train::Optimizer<float>& optim,
                             const train::TrainState& st) {
        const auto& val = st.history.back();
        const auto& tr = st.history[st.history.size() - 2];
        log << "epoch " << st.epochs_done << "/" << cfg.train.epochs << "  loss " << std::setprecision(4) << tr.loss
            << "  val mIoU " << val.mean_iou << (st.best_epoch == st.epochs_done ? "  *" : "") << '\n';
        if (st.best_epoch == st.epochs_done) {
            model::write_checkpoint(dir / kBestCheckpoint,
                                    model::make_checkpoint(n, Json{{"epoch", st.best_epoch},
                                                                   {"val_miou", st.best_miou},
                                                                   {"batch_size", cfg.train.batch_size},
                                                                   {"config", echo}}));
        }
        if (st.epochs_done % cfg.checkpoint_every == 0 || st.epochs_done == cfg.train.epochs) {
            model::write_checkpoint(dir / kLastCheckpoint, resume_checkpoint(n, optim, st, echo));
            write_run_csvs(dir, st, names);
        }
    };

    TrainOutcome outcome;
    outcome.state = train::train(net, splits, cfg.train, std::move(state), hooks);
    write_run_csvs(dir, outcome.state, names);

    net.parameters().restore(outcome.state.best_parameters);
    outcome.val = train::evaluate(net, splits.val, cfg.train.batch_size);
    if (!splits.test.empty()) outcome.test = train::evaluate(net, splits.test, cfg.train.batch_size);
    write_text_file(dir / kSummaryJson, summary_json(cfg, outcome).dump(2) + "\n");
    const auto text = summary_text(cfg, outcome);
    write_text_file(dir / kSummaryText, text);
    log << text;
    return outcome;
}

tpe::SearchResult cmd_search(const Json& raw, std::ostream& log) {
    const RunConfig cfg = resolve(raw);
    if (!cfg.search) throw ConfigError("search: the config has no search section");
    const auto& sc = *cfg.search;
    const Json echo = to_json(cfg);
    const auto splits = load_data(cfg);
    const fs::path dir = cfg.output_dir;
    if (fs::exists(dir / kConfigFile) && fs::exists(dir / kHistoryFile) &&
        without(load_json_file(dir / kConfigFile), "search", "n_trials") != without(echo, "search", "n_trials")) {
        throw ConfigError("search: " + dir.string() + " holds a search run under a different config");
    }
    fs::create_directories(dir);
    write_text_file(dir / kConfigFile, echo.dump(2) + "\n");

    Json base = raw;
    base.erase("search");
    auto trial_config = [&](const tpe::Point& p) {
        Json j = base;
        for (std::size_t k = 0; k < sc.space.dims.size(); ++k) {
            const auto& d = sc.space.dims[k];
            set_path(j, d.name, d.kind == tpe::DimKind::Integer ? Json(static_cast<long long>(p[k])) : Json(p[k]));
        }
        return j;
    };

    auto short_name = [](const std::string& path) {
        const auto dot = path.rfind('.');
        return dot == std::string::npos ? path : path.substr(dot + 1);
    };
    auto write_outputs = [&](const std::vector<tpe::TrialRecord>& history) {
        std::ostringstream csv;
        csv << "trial";
        for (const auto& d : sc.space.dims) csv << ',' << short_name(d.name);
        csv << ",mIoU,status\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (const auto& r : history) {
            csv << r.index;
            for (double v : r.point) csv << ',' << v;
            csv << ',';
            if (r.status == tpe::TrialStatus::Done) csv << r.objective;
            csv << ',' << (r.status == tpe::TrialStatus::Done ? "done" : "failed") << '\n';
        }
        write_text_file(dir / kScatterCsv, csv.str());
        if (auto best = tpe::best_trial(history)) {
            Json j = trial_config(history[*best].point);
            j["output_dir"] = (dir / "best_run").string();
            if (sc.vary_seed) j["seed"] = history[*best].seed;
            write_text_file(dir / kBestConfigFile, to_json(resolve(j)).dump(2) + "\n");
        }
    };

    std::vector<tpe::TrialRecord> seen = tpe::read_history(dir / kHistoryFile, sc.space);
    if (!seen.empty()) log << "resuming search after " << seen.size() << " trials\n";

    tpe::Runner runner = [&](const tpe::Point& p, std::uint64_t seed, int) {
        Json j = trial_config(p);
        if (sc.vary_seed) j["seed"] = seed;
        if (sc.trial_epochs) set_path(j, "train.epochs", *sc.trial_epochs);
        set_path(j, "train.stats", Json::object());
        const RunConfig tc = resolve(j);
        auto net = model::Network<float>::build(tc.model, tc.seeds.weights);
        const auto state = train::train(net, splits, tc.train);
        return state.best_miou;
    };
    auto on_trial = [&](const tpe::TrialRecord& r) {
        seen.push_back(r);
        log << "trial " << r.index + 1 << "/" << sc.n_trials;
        for (std::size_t k = 0; k < r.point.size(); ++k) log << "  " << short_name(sc.space.dims[k].name) << "=" << r.point[k];
        if (r.status == tpe::TrialStatus::Done) log << "  mIoU " << r.objective << '\n';
        else log << "  failed\n";
        write_outputs(seen);
    };
    auto result = tpe::run_search(sc.space, runner, sc.n_trials, sc.tpe, dir / kHistoryFile, on_trial);
    write_outputs(result.history);
    if (result.best) {
        const auto& b = result.history[*result.best];
        log << "best trial " << b.index + 1 << ": mIoU " << b.objective << '\n';
    }
    return result;
}

train::EvalResult cmd_eval(const EvalOptions& opt, std::ostream& log) {
    const auto ckpt = model::read_checkpoint(opt.checkpoint);
    const auto mc = ckpt.model_config();
    data::DatasetSplit splits;
    std::vector<std::string> names;
    if (opt.config) {
        const RunConfig cfg = resolve(*opt.config);
        if (cfg.model.classes != mc.classes) {
            throw ConfigError("class count mismatch: checkpoint has " + std::to_string(mc.classes) + ", config has " +
                              std::to_string(cfg.model.classes));
        }
        splits = load_data(cfg);
        names = cfg.class_names();
    } else if (opt.data_dir) {
        const fs::path info_path = *opt.data_dir / "dataset.json";
        if (fs::exists(info_path)) {
            const Json info = load_json_file(info_path);
            const int classes = info.at("classes").get<int>();
            if (classes != mc.classes) {
                throw ConfigError("class count mismatch: checkpoint has " + std::to_string(mc.classes) +
                                  ", dataset has " + std::to_string(classes));
            }
            names = info.at("class_names").get<std::vector<std::string>>();
        }
        splits = data::load_dataset(*opt.data_dir, mc.classes, mc.input_channels);
    } else {
        throw ConfigError("eval: give a dataset directory or a run config");
    }
    if (names.size() != static_cast<std::size_t>(mc.classes)) {
        names.clear();
        for (int c = 0; c < mc.classes; ++c) names.push_back("class" + std::to_string(c));
    }
    const auto& samples = splits.get(opt.split);
    if (samples.empty()) throw DataError("", "split '" + opt.split + "' is empty");

    auto net = model::network_from_checkpoint<float>(ckpt);
    int batch_size = 4;
    if (ckpt.meta().contains("batch_size")) batch_size = ckpt.meta().at("batch_size").get<int>();
    const auto res = train::evaluate(net, samples, batch_size);

    std::vector<metrics::TableRow> rows{{std::string(model::display_name(mc.variant)), res.metrics}};
    log << metrics::format_table(rows, names);
    if (opt.out) {
        fs::create_directories(*opt.out);
        write_text_file(*opt.out / "eval.csv", metrics::format_csv(rows, names));
        Json j = iou_json(res.metrics);
        j["split"] = opt.split;
        j["class_names"] = names;
        j["checkpoint"] = opt.checkpoint.string();
        j["loss"] = res.loss;
        write_text_file(*opt.out / "eval.json", j.dump(2) + "\n");
    }
    return res;
}

void cmd_report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& log) {
    if (dirs.empty()) throw ConfigError("report: give at least one run or search directory");
    struct Run {
        fs::path dir;
        Json config, summary;
        std::vector<train::ActivationStat> stats;
    };
    std::vector<Run> runs;
    std::vector<fs::path> searches;
    std::vector<std::string> missing;
    for (const auto& d : dirs) {
        if (fs::exists(d / kHistoryFile) || fs::exists(d / kScatterCsv)) {
            if (!fs::exists(d / kScatterCsv)) missing.push_back((d / kScatterCsv).string());
            searches.push_back(d);
            continue;
        }
        bool complete = true;
        for (const char* f : {kConfigFile, kSummaryJson, kMetricsCsv, kStatsCsv}) {
            if (!fs::exists(d / f)) {
                missing.push_back((d / f).string());
                complete = false;
            }
        }
        if (complete) runs.push_back({d, {}, {}, {}});
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += "\n  " + m;
        throw DataError("", "report: missing input files:" + list);
    }
    for (auto& r : runs) {
        r.config = load_json_file(r.dir / kConfigFile);
        r.summary = load_json_file(r.dir / kSummaryJson);
        std::ifstream in(r.dir / kStatsCsv);
        r.stats = train::parse_stats_csv(in);
    }
    fs::create_directories(out);

    // Comparison table on the test split (validation when a run has no test split).
    std::vector<metrics::TableRow> rows;
    std::vector<std::string> names;
    std::map<std::string, int> label_count;
    for (const auto& r : runs) label_count[r.summary.at("label").get<std::string>()]++;
    for (const auto& r : runs) {
        const auto run_names = r.summary.at("class_names").get<std::vector<std::string>>();
        if (names.empty()) names = run_names;
        else if (names != run_names) throw DataError(r.dir.string(), "report: runs disagree on class names");
        std::string label = r.summary.at("label").get<std::string>();
        if (label_count[label] > 1) label += " [" + dir_name(r.dir) + "]";
        const Json& m = r.summary.at("test").is_null() ? r.summary.at("val") : r.summary.at("test");
        rows.push_back({label, iou_from_json(m)});
    }
    if (!runs.empty()) {
        write_text_file(out / "comparison.txt", metrics::format_table(rows, names));
        write_text_file(out / "comparison.csv", metrics::format_csv(rows, names));
        log << metrics::format_table(rows, names);
    }

    std::ostringstream fig2;
    fig2 << "run,epoch,site,mean\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : runs) {
        for (const auto& s : r.stats) {
            if (s.statistic != train::StatKind::Mean) continue;
            fig2 << dir_name(r.dir) << ',' << s.epoch << ',' << train::to_string(s.site) << ',' << s.value << '\n';
        }
    }
    write_text_file(out / "fig2_activation.csv", fig2.str());

    // Per epoch: mean per-channel sum over enhanced / other recorded channels
    // of each fixed-list FRE run, plus the same enhanced channels in a
    // baseline run when one is given.
    auto sums_by_epoch = [](const Run& r) {
        std::map<int, std::map<int, double>> m;
        for (const auto& s : r.stats) {
            if (s.statistic == train::StatKind::Sum && s.channel) m[s.epoch][*s.channel] = s.value;
        }
        return m;
    };
    const Run* reference = nullptr;
    for (const auto& r : runs) {
        if (r.summary.at("variant") == "baseline" && !sums_by_epoch(r).empty()) {
            reference = &r;
            break;
        }
    }
    std::ostringstream fig9;
    fig9 << "run,epoch,no_module,enhanced,non_enhanced\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : runs) {
        if (r.summary.at("variant") != "fre" || r.summary.value("fre_mode", "") != "fixed") continue;
        const auto fixed = r.summary.at("fixed_channels").get<std::vector<int>>();
        const std::set<int> enhanced(fixed.begin(), fixed.end());
        const auto series = sums_by_epoch(r);
        const auto ref = reference ? sums_by_epoch(*reference) : std::map<int, std::map<int, double>>{};
        for (const auto& [epoch, chans] : series) {
            double e = 0, n = 0, b = 0;
            int ne = 0, nn = 0, nb = 0;
            for (const auto& [ch, v] : chans) {
                if (enhanced.count(ch)) {
                    e += v;
                    ++ne;
                } else {
                    n += v;
                    ++nn;
                }
            }
            if (auto it = ref.find(epoch); it != ref.end()) {
                for (const auto& [ch, v] : it->second) {
                    if (enhanced.count(ch)) {
                        b += v;
                        ++nb;
                    }
                }
            }
            fig9 << dir_name(r.dir) << ',' << epoch << ',';
            if (nb) fig9 << b / nb;
            fig9 << ',';
            if (ne) fig9 << e / ne;
            fig9 << ',';
            if (nn) fig9 << n / nn;
            fig9 << '\n';
        }
    }
    write_text_file(out / "fig9_channel_sums.csv", fig9.str());

    if (!searches.empty()) {
        std::ostringstream scatter;
        std::string header;
        for (const auto& s : searches) {
            std::istringstream in(read_text(s / kScatterCsv));
            std::string line;
            std::getline(in, line);
            if (header.empty()) {
                header = line;
                scatter << "search," << header << '\n';
            } else if (line != header) {
                throw DataError((s / kScatterCsv).string(), "report: search dimensions differ between searches");
            }
            while (std::getline(in, line)) {
                if (!line.empty()) scatter << dir_name(s) << ',' << line << '\n';
            }
        }
        write_text_file(out / "tpe_scatter.csv", scatter.str());
    }
    log << "report written to " << out.string() << '\n';
}

}  // namespace fre::cli
