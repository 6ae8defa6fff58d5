#include <gtest/gtest.h>

#include <sstream>

#include "fre/cli/commands.hpp"
#include "fre/model/checkpoint.hpp"
#include "support/test_support.hpp"

namespace cli = fre::cli;
namespace fs = std::filesystem;
using cli::Json;

namespace {

// Small enough to train in well under a second per epoch.
Json small_config(const fs::path& out, const std::string& variant = "baseline") {
    Json j = Json::parse(R"({
        "seed": 3,
        "model": {"base_width": 4, "depth": 2},
        "train": {"epochs": 2, "batch_size": 2},
        "data": {"count": 8, "split": [4, 2, 2],
                 "synthetic": {"image_size": 16, "min_radius": 4, "max_radius": 5, "membrane_width": 1,
                               "min_cells": 1, "max_cells": 2}}
    })");
    j["output_dir"] = out.string();
    j["model"]["variant"] = variant;
    if (variant == "fre") j["fre"] = Json{{"B", 3}, {"X", 5}, {"mode", "fixed"}, {"fixed_channels", {0, 1, 2}}};
    if (variant == "dropout") j["dropout"] = Json{{"rate", 0.2}};
    if (variant == "supervision") j["supervision"] = Json{{"lambda", 0.3257}};
    return j;
}

std::vector<std::string> listing(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST(RunConfigTest, DefaultsAndRoundTrip) {
    const auto cfg = cli::resolve(Json::object());
    EXPECT_EQ(cfg.model.bottleneck_width(), 512);
    EXPECT_EQ(cfg.model.classes, 3);
    EXPECT_EQ(cfg.seeds.weights, fre::named_seed(0, "weights"));
    EXPECT_EQ(cfg.data.split, (std::array<int, 3>{35, 5, 10}));
    EXPECT_EQ(cfg.train.epochs, 2000);
    const Json explicit_form = cli::to_json(cfg);
    EXPECT_EQ(cli::to_json(cli::resolve(explicit_form)), explicit_form);

    const auto fre = cli::resolve(small_config("x", "fre"));
    EXPECT_EQ(cli::to_json(cli::resolve(cli::to_json(fre))), cli::to_json(fre));
    EXPECT_EQ(fre.model.fre.count, 3);
    EXPECT_EQ(fre.model.fre.fixed_channels, (std::vector<int>{0, 1, 2}));
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadValues) {
    auto expect_reject = [](Json j, const std::string& needle) {
        try {
            cli::resolve(j);
            ADD_FAILURE() << "accepted " << j.dump();
        } catch (const fre::ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    expect_reject(Json{{"sede", 1}}, "sede");
    expect_reject(Json{{"model", {{"widht", 4}}}}, "widht");
    expect_reject(Json{{"train", {{"epochs", 0}}}}, "epochs");
    expect_reject(Json{{"model", {{"variant", "fre"}}}}, "fre");
    expect_reject(Json{{"model", {{"variant", "dropout"}}}}, "dropout");
    expect_reject(Json{{"model", {{"variant", "supervision"}}}}, "lambda");
    expect_reject(Json{{"supervision", {{"lambda", 1.5}}}}, "lambda");
    expect_reject(Json{{"fre", {{"B", 600}, {"X", 2}, {"mode", "random"}}}, {"model", {{"variant", "fre"}}}}, "B");
    expect_reject(Json{{"data", {{"synthetic", {{"image_size", 40}}}}}}, "multiple");
    expect_reject(Json{{"train", {{"stats", {{"channels", {600}}}}}}}, "channel");
}

TEST(RunConfigTest, DropoutRateDerivedFromFre) {
    Json j{{"model", {{"variant", "dropout"}}},
           {"fre", {{"B", 162}, {"X", 632}, {"mode", "random"}}},
           {"dropout", {{"derive_from_fre", true}}}};
    const auto cfg = cli::resolve(j);
    EXPECT_DOUBLE_EQ(*cfg.model.dropout_rate, 162.0 / 512.0);
    EXPECT_EQ(cfg.model.fre.mode, fre::layers::FreMode::Off);
    j["dropout"]["rate"] = 0.1;
    EXPECT_THROW(cli::resolve(j), fre::ConfigError);
}

TEST(RunConfigTest, OverridesAndPaths) {
    Json j = Json::object();
    cli::apply_override(j, "train.epochs=7");
    cli::apply_override(j, "model.variant=fre");
    cli::apply_override(j, "fre.fixed_channels=[1,2]");
    EXPECT_EQ(j["train"]["epochs"], 7);
    EXPECT_EQ(j["model"]["variant"], "fre");
    EXPECT_EQ(j["fre"]["fixed_channels"], Json::array({1, 2}));
    EXPECT_THROW(cli::apply_override(j, "novalue"), fre::ConfigError);
    EXPECT_THROW(cli::set_path(j, "train.epochs.inner", 1), fre::ConfigError);
    EXPECT_THROW(cli::set_path(j, "a..b", 1), fre::ConfigError);
}

TEST(CommandsTest, TrainWritesParseableArtifacts) {
    const auto dir = fretest::fresh_dir("cli_train");
    std::ostringstream log;
    auto cfg = small_config(dir / "run", "fre");
    cfg["train"]["stats"] = Json{{"site_means", true}, {"channel_sums", true}};
    const auto outcome = cli::cmd_train(cfg, false, log);
    for (const char* f : {cli::kConfigFile, cli::kBestCheckpoint, cli::kLastCheckpoint, cli::kMetricsCsv,
                          cli::kStatsCsv, cli::kSummaryJson, cli::kSummaryText}) {
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    }
    const Json echo = cli::load_json_file(dir / "run" / cli::kConfigFile);
    EXPECT_EQ(echo, cli::to_json(cli::resolve(cfg)));
    std::ifstream metrics(dir / "run" / cli::kMetricsCsv);
    EXPECT_EQ(fre::train::parse_history_csv(metrics), outcome.state.history);
    std::ifstream stats(dir / "run" / cli::kStatsCsv);
    EXPECT_EQ(fre::train::parse_stats_csv(stats), outcome.state.stats);
    const Json summary = cli::load_json_file(dir / "run" / cli::kSummaryJson);
    EXPECT_EQ(summary["best_val_miou"].get<double>(), outcome.state.best_miou);
    EXPECT_EQ(summary["B"], 3);
    const auto ckpt = fre::model::read_checkpoint(dir / "run" / cli::kBestCheckpoint);
    EXPECT_EQ(ckpt.meta().at("epoch"), outcome.state.best_epoch);
    EXPECT_NE(log.str().find("val mIoU"), std::string::npos);
}

TEST(CommandsTest, SummaryEchoesSearchedFreSettings) {
    const auto dir = fretest::fresh_dir("cli_echo");
    auto cfg = small_config(dir / "run", "fre");
    cfg["model"]["base_width"] = 16;
    cfg["model"]["depth"] = 4;
    cfg["fre"] = Json{{"B", 162}, {"X", 632}, {"mode", "random"}};
    cfg["train"]["epochs"] = 1;
    cfg["data"] = Json{{"count", 4}, {"split", {2, 1, 1}}, {"synthetic", {{"image_size", 16}, {"min_radius", 4},
                                                                          {"max_radius", 5}, {"membrane_width", 1}}}};
    std::ostringstream log;
    cli::cmd_train(cfg, false, log);
    const auto text = fretest::slurp(dir / "run" / cli::kSummaryText);
    EXPECT_NE(text.find("B = 162, X = 632"), std::string::npos) << text;
    const Json s = cli::load_json_file(dir / "run" / cli::kSummaryJson);
    EXPECT_EQ(s["B"], 162);
    EXPECT_EQ(s["X"], 632.0);
}

TEST(CommandsTest, RejectedConfigWritesNothing) {
    const auto dir = fretest::fresh_dir("cli_reject");
    auto cfg = small_config(dir / "run");
    cfg["train"]["optimiser"] = "adam";
    std::ostringstream log;
    EXPECT_THROW(cli::cmd_train(cfg, false, log), fre::ConfigError);
    EXPECT_FALSE(fs::exists(dir / "run"));
    EXPECT_TRUE(listing(dir).empty());
}

TEST(CommandsTest, ResumeExtendsAFinishedRun) {
    const auto dir = fretest::fresh_dir("cli_resume");
    std::ostringstream log;
    auto straight = small_config(dir / "straight");
    straight["train"]["epochs"] = 4;
    const auto full = cli::cmd_train(straight, false, log);

    auto part = small_config(dir / "part");
    cli::cmd_train(part, false, log);
    part["train"]["epochs"] = 4;
    const auto resumed = cli::cmd_train(part, true, log);
    EXPECT_EQ(resumed.state.history, full.state.history);
    EXPECT_EQ(resumed.state.best_parameters, full.state.best_parameters);

    part["train"]["lr"] = 0.5;
    EXPECT_THROW(cli::cmd_train(part, true, log), fre::ConfigError);
}

TEST(CommandsTest, SearchResumesWithRemainingTrials) {
    const auto dir = fretest::fresh_dir("cli_search");
    auto cfg = small_config(dir / "search", "fre");
    cfg["fre"]["mode"] = "random";
    cfg["search"] = Json{{"n_trials", 2},
                         {"n_startup", 2},
                         {"trial_epochs", 1},
                         {"space", {{{"name", "fre.B"}, {"type", "int"}, {"lo", 1}, {"hi", 16}},
                                    {{"name", "fre.X"}, {"type", "int"}, {"lo", 1}, {"hi", 1000}}}}};
    std::ostringstream log;
    const auto first = cli::cmd_search(cfg, log);
    ASSERT_EQ(first.history.size(), 2u);
    cfg["search"]["n_trials"] = 4;
    std::ostringstream log2;
    const auto second = cli::cmd_search(cfg, log2);
    ASSERT_EQ(second.history.size(), 4u);
    EXPECT_EQ(second.history[0], first.history[0]);
    EXPECT_NE(log2.str().find("resuming search after 2 trials"), std::string::npos);
    EXPECT_EQ(log2.str().find("trial 2/4"), std::string::npos);
    EXPECT_NE(log2.str().find("trial 4/4"), std::string::npos);

    const auto scatter = fretest::slurp(dir / "search" / cli::kScatterCsv);
    EXPECT_EQ(scatter.substr(0, scatter.find('\n')), "trial,B,X,mIoU,status");
    EXPECT_EQ(std::count(scatter.begin(), scatter.end(), '\n'), 5);
    const Json best = cli::load_json_file(dir / "search" / cli::kBestConfigFile);
    EXPECT_FALSE(best.contains("search"));
    EXPECT_EQ(best["fre"]["B"].get<int>(), static_cast<int>(second.history[*second.best].point[0]));

    auto other = cfg;
    other["train"]["lr"] = 0.01;
    EXPECT_THROW(cli::cmd_search(other, log2), fre::ConfigError);
    cfg["search"]["space"][0]["name"] = "fre.nothing";
    EXPECT_THROW(cli::resolve(cfg), fre::ConfigError);
}

TEST(CommandsTest, EvalReproducesBestValidationScore) {
    const auto dir = fretest::fresh_dir("cli_eval");
    std::ostringstream log;
    auto cfg = small_config(dir / "run", "supervision");
    cfg["train"]["epochs"] = 3;
    const auto outcome = cli::cmd_train(cfg, false, log);
    cli::EvalOptions opt;
    opt.checkpoint = dir / "run" / cli::kBestCheckpoint;
    opt.config = cfg;
    opt.out = dir / "eval";
    const auto a = cli::cmd_eval(opt, log);
    EXPECT_EQ(a.metrics.mean_iou, outcome.state.best_miou);
    const auto first_csv = fretest::slurp(dir / "eval" / "eval.csv");
    const auto b = cli::cmd_eval(opt, log);
    EXPECT_EQ(a.confusion, b.confusion);
    EXPECT_EQ(fretest::slurp(dir / "eval" / "eval.csv"), first_csv);

    // Same images through an on-disk dataset directory.
    cli::GenerateOptions gen;
    gen.out = dir / "disk";
    gen.count = 8;
    gen.image_size = 16;
    gen.split = {4, 2, 2};
    cli::cmd_generate(gen, log);
    cli::EvalOptions disk;
    disk.checkpoint = opt.checkpoint;
    disk.data_dir = gen.out;
    disk.split = "test";
    EXPECT_NO_THROW(cli::cmd_eval(disk, log));

    gen.out = dir / "four";
    gen.scheme = fre::data::ClassScheme::FourClass;
    cli::cmd_generate(gen, log);
    disk.data_dir = gen.out;
    EXPECT_THROW(cli::cmd_eval(disk, log), fre::ConfigError);
    EXPECT_THROW(cli::cmd_eval(cli::EvalOptions{opt.checkpoint, {}, {}, "val", {}}, log), fre::ConfigError);
}

TEST(CommandsTest, EvalOfInjectedOracleScoresOne) {
    // Head forced to class 0 on a dataset whose labels are all background.
    const auto dir = fretest::fresh_dir("cli_oracle");
    fre::model::ModelConfig mc;
    mc.base_width = 4;
    mc.depth = 2;
    auto net = fre::model::Network<float>::build(mc, 1);
    auto& w = net.parameters().get("head.weight");
    std::fill(w.data().begin(), w.data().end(), 0.0f);
    auto& b = net.parameters().get("head.bias");
    b[0] = 10.0f;
    b[1] = b[2] = 0.0f;
    fre::model::write_checkpoint(dir / "oracle.ckpt", fre::model::make_checkpoint(net, Json::object()));

    fre::data::DatasetSplit ds;
    for (int i = 0; i < 3; ++i) {
        fre::data::Sample s;
        s.stem = "blank" + std::to_string(i);
        s.height = s.width = 16;
        s.image.assign(256, 0.1f * static_cast<float>(i));
        s.label.assign(256, 0);
        ds.val.push_back(s);
    }
    ds.train.push_back(ds.val[0]);
    ds.train[0].stem = "t";
    fre::data::write_dataset(dir / "data", ds);
    cli::EvalOptions opt;
    opt.checkpoint = dir / "oracle.ckpt";
    opt.data_dir = dir / "data";
    std::ostringstream log;
    const auto res = cli::cmd_eval(opt, log);
    EXPECT_EQ(res.metrics.mean_iou, 1.0);
    EXPECT_NE(log.str().find("100.00"), std::string::npos) << log.str();
}

TEST(CommandsTest, ReportReadsRunsWithoutTouchingThem) {
    const auto dir = fretest::fresh_dir("cli_report");
    std::ostringstream log;
    std::vector<fs::path> runs;
    for (const char* v : {"baseline", "fre", "dropout", "supervision"}) {
        auto cfg = small_config(dir / v, v);
        cfg["train"]["stats"] = Json{{"site_means", true}, {"channel_sums", true}, {"channels", {0, 1, 2, 3, 4}}};
        cli::cmd_train(cfg, false, log);
        runs.push_back(dir / v);
    }
    auto no_deep = small_config(dir / "no_deep", "no_deep_layers");
    cli::cmd_train(no_deep, false, log);
    runs.push_back(dir / "no_deep");

    auto search = small_config(dir / "search", "fre");
    search["search"] = Json{{"n_trials", 1}, {"trial_epochs", 1},
                            {"space", {{{"name", "fre.X"}, {"type", "int"}, {"lo", 1}, {"hi", 100}}}}};
    cli::cmd_search(search, log);
    runs.push_back(dir / "search");

    std::map<std::string, std::string> before;
    for (const auto& p : listing(dir)) {
        if (fs::is_regular_file(p)) before[p] = fretest::slurp(p);
    }
    cli::cmd_report(runs, dir / "report", log);
    for (const auto& [p, bytes] : before) EXPECT_EQ(fretest::slurp(p), bytes) << p;

    const auto csv = fretest::slurp(dir / "report" / "comparison.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,membrane[%],nucleus[%],background[%],mIoU[%]");
    const auto fig2 = fretest::slurp(dir / "report" / "fig2_activation.csv");
    EXPECT_EQ(fig2.substr(0, fig2.find('\n')), "run,epoch,site,mean");
    EXPECT_NE(fig2.find("\nfre,2,bottleneck,"), std::string::npos);
    const auto fig9 = fretest::slurp(dir / "report" / "fig9_channel_sums.csv");
    EXPECT_EQ(fig9.substr(0, fig9.find('\n')), "run,epoch,no_module,enhanced,non_enhanced");
    EXPECT_EQ(std::count(fig9.begin(), fig9.end(), '\n'), 3);
    for (const auto& line : {std::string("\nfre,1,"), std::string("\nfre,2,")}) {
        EXPECT_NE(fig9.find(line), std::string::npos) << fig9;
    }
    const auto scatter = fretest::slurp(dir / "report" / "tpe_scatter.csv");
    EXPECT_EQ(scatter.substr(0, scatter.find('\n')), "search,trial,X,mIoU,status");

    fs::remove(dir / "fre" / cli::kStatsCsv);
    try {
        cli::cmd_report(runs, dir / "report2", log);
        ADD_FAILURE() << "report accepted a run without stats";
    } catch (const fre::DataError& e) {
        EXPECT_NE(std::string(e.what()).find(cli::kStatsCsv), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(dir / "report2"));
}
