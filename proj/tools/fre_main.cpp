#include <CLI11.hpp>

#include <iostream>

#include "fre/cli/commands.hpp"

using namespace fre;

namespace {

cli::Json load_config(const std::string& file, const std::vector<std::string>& overrides) {
    cli::Json raw = file.empty() ? cli::Json::object() : cli::load_json_file(file);
    for (const auto& o : overrides) cli::apply_override(raw, o);
    return raw;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"U-Net + SE segmentation with feature random enhancement"};
    app.require_subcommand(1);

    cli::GenerateOptions gen;
    std::string scheme = "three_class";
    std::vector<int> gen_split{35, 5, 10};
    auto* g = app.add_subcommand("generate", "write a synthetic dataset directory");
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--count", gen.count, "number of images")->capture_default_str();
    g->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    g->add_option("--scheme", scheme, "three_class or four_class")->capture_default_str();
    g->add_option("--size", gen.image_size, "image side in pixels")->capture_default_str();
    g->add_option("--noise", gen.noise, "Gaussian noise std-dev")->capture_default_str();
    g->add_option("--split", gen_split, "train val test counts")->expected(3);

    std::string config_file;
    std::vector<std::string> overrides;
    bool resume = false;
    auto* t = app.add_subcommand("train", "train one model");
    t->add_option("--config", config_file, "run config (JSON)");
    t->add_option("--set", overrides, "override, e.g. --set train.epochs=200");
    t->add_flag("--resume", resume, "continue from last.ckpt in the output directory");

    auto* s = app.add_subcommand("search", "TPE search over config values");
    s->add_option("--config", config_file, "run config with a search section")->required();
    s->add_option("--set", overrides, "override, e.g. --set search.n_trials=15");

    cli::EvalOptions ev;
    std::string data_dir, out_dir, eval_config;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    auto* data_opt = e->add_option("--data", data_dir, "dataset directory");
    e->add_option("--config", eval_config, "run config whose data section to use")->excludes(data_opt);
    e->add_option("--set", overrides, "override applied to --config");
    e->add_option("--split", ev.split, "train, val or test")->capture_default_str();
    e->add_option("--out", out_dir, "directory for eval.csv and eval.json");

    std::vector<std::string> report_dirs;
    std::string report_out;
    auto* r = app.add_subcommand("report", "comparison tables and plot data from run directories");
    r->add_option("dirs", report_dirs, "run and search directories")->required();
    r->add_option("--out", report_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) {
            gen.scheme = data::parse_class_scheme(scheme);
            gen.split = {gen_split.at(0), gen_split.at(1), gen_split.at(2)};
            cli::cmd_generate(gen, std::cout);
        } else if (t->parsed()) {
            cli::cmd_train(load_config(config_file, overrides), resume, std::cout);
        } else if (s->parsed()) {
            cli::cmd_search(load_config(config_file, overrides), std::cout);
        } else if (e->parsed()) {
            if (!data_dir.empty()) ev.data_dir = data_dir;
            if (!eval_config.empty()) ev.config = load_config(eval_config, overrides);
            if (!out_dir.empty()) ev.out = out_dir;
            cli::cmd_eval(ev, std::cout);
        } else if (r->parsed()) {
            std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
            cli::cmd_report(dirs, report_out, std::cout);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
