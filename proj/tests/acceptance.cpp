// One line per acceptance criterion; exit status is non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fre/cli/commands.hpp"
#include "fre/layers/fre_module.hpp"
#include "fre/train/loss.hpp"
#include "support/grad_cases.hpp"

using namespace fretest;
namespace ag = fre::ag;
namespace cli = fre::cli;
namespace fs = std::filesystem;
using cli::Json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

// ---- 1 ---------------------------------------------------------------------

void criterion1() {
    const auto t0 = Clock::now();
    auto cases = op_grad_cases();
    for (auto& c : model_grad_cases()) cases.push_back(std::move(c));
    double worst = 0;
    std::string worst_name;
    bool ok = true;
    for (const auto& c : cases) {
        const auto r = c.run();
        if (!(r.max_rel_err < 1e-3) || r.checked < kGradCoords) {
            ok = false;
            std::cout << "  " << c.name << ": rel err " << r.max_rel_err << " over " << r.checked << " coords (" << r.worst
                      << ")\n";
        }
        if (r.max_rel_err >= worst) {
            worst = r.max_rel_err;
            worst_name = c.name;
        }
    }
    const double secs = seconds_since(t0);
    report(1, ok && secs < 120,
           std::to_string(cases.size()) + " cases, worst rel err " + fmt(worst, 3) + " (" + worst_name + "), " +
               fmt(secs, 3) + " s");
}

// ---- 2 ---------------------------------------------------------------------

fre::model::ModelConfig c2_config(fre::model::ModelVariant v) {
    fre::model::ModelConfig cfg;
    cfg.base_width = 4;
    cfg.depth = 2;
    cfg.se_reduction = 2;
    cfg.variant = v;
    cfg.fre.mode = v == fre::model::ModelVariant::Fre ? fre::layers::FreMode::RandomPerEpoch : fre::layers::FreMode::Off;
    cfg.fre.count = 5;
    cfg.fre.multiplier = 250;
    cfg.fre.seed = 17;
    return cfg;
}

void criterion2() {
    using NetD = fre::model::Network<double>;
    using fre::model::ModelVariant;
    std::mt19937_64 rng(2);
    const auto x = random_tensor({2, 1, 16, 16}, rng, 0, 1, false);
    auto base = NetD::build(c2_config(ModelVariant::Baseline), 5);
    auto net = NetD::build(c2_config(ModelVariant::Fre), 5);
    const double X = 250;

    // Eval forward, bit-exact.
    bool eval_exact = true;
    for (int epoch : {1, 2, 7}) {
        net.begin_epoch(epoch);
        TapeD t1, t2;
        t1.set_recording(false);
        t2.set_recording(false);
        const auto a = net.forward(t1, x, {ag::Phase::Eval, epoch, 0, false}).logits;
        const auto b = base.forward(t2, x, {ag::Phase::Eval, epoch, 0, false}).logits;
        eval_exact = eval_exact && std::memcmp(a.raw(), b.raw(), a.numel() * sizeof(double)) == 0;
    }

    // Train forward against a baseline whose bottleneck is pre-scaled by a
    // hand-built factor tensor.
    net.begin_epoch(3);
    const auto selected = net.selection().selected;
    const std::set<int> chosen(selected.begin(), selected.end());
    NetD::FeatureHook prescale = [&](TapeD& t, const TensorD& h) {
        TensorD factor(h.shape(), 1.0);
        const std::size_t plane = static_cast<std::size_t>(h.dim(2)) * h.dim(3);
        for (int n = 0; n < h.dim(0); ++n)
            for (int c : chosen)
                for (std::size_t p = 0; p < plane; ++p) factor[(static_cast<std::size_t>(n) * h.dim(1) + c) * plane + p] = X;
        return ag::mul(t, h, factor);
    };
    const fre::model::ForwardContext ctx{ag::Phase::Train, 3, 0, false};
    double fwd_err = 0;
    {
        TapeD t1, t2;
        const auto a = net.forward(t1, x, ctx).logits;
        const auto b = base.forward(t2, x, ctx, &prescale).logits;
        for (std::size_t i = 0; i < a.numel(); ++i) fwd_err = std::max(fwd_err, rel_err(a[i], b[i], 1e-12));
    }

    // Gradient through the FRE layer inside the network.
    TensorD after;
    NetD::FeatureHook capture = [&](TapeD&, const TensorD& h) {
        after = h;
        return h;
    };
    TapeD tape;
    const auto res = net.forward(tape, x, ctx, &capture);
    std::vector<int> labels(static_cast<std::size_t>(2 * 16 * 16));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
    const auto loss = ag::softmax_cross_entropy<double>(tape, res.logits, labels);
    TensorD before;
    for (const auto& e : tape.entries()) {
        if (e.output.same_storage(after) && !e.inputs.empty()) before = e.inputs[0];
    }
    tape.backward(loss);
    double grad_err = 0;
    int live = 0;  // selected-channel entries with a nonzero gradient
    bool grad_found = before.defined() && !before.same_storage(after) && before.has_grad() && after.has_grad();
    if (grad_found) {
        const std::size_t plane = static_cast<std::size_t>(after.dim(2)) * after.dim(3);
        for (std::size_t i = 0; i < after.numel(); ++i) {
            const int c = static_cast<int>((i / plane) % static_cast<std::size_t>(after.dim(1)));
            const double expect = chosen.count(c) ? X * after.grad()[i] : after.grad()[i];
            live += chosen.count(c) && before.grad()[i] != 0.0;
            grad_err = std::max(grad_err, rel_err(before.grad()[i], expect, 1e-300));
        }
    }
    grad_found = grad_found && live > 0;
    report(2, eval_exact && fwd_err <= 1e-6 && grad_found && grad_err <= 1e-6,
           std::string("eval bit-exact ") + (eval_exact ? "yes" : "no") + ", train forward rel err " + fmt(fwd_err, 3) +
               ", gradient rel err " + (grad_found ? fmt(grad_err, 3) : std::string("n/a")) + " (B=" +
               std::to_string(selected.size()) + ", X=250, " + std::to_string(live) + " nonzero selected grads)");
}

// ---- 3 ---------------------------------------------------------------------

void criterion3() {
    const int epochs = 10000, channels = 512, count = 8;
    fre::layers::FreConfig cfg;
    cfg.mode = fre::layers::FreMode::RandomPerEpoch;
    cfg.count = count;
    cfg.multiplier = 250;
    cfg.seed = fre::named_seed(0, "fre");
    std::vector<int> hits(channels);
    for (int e = 1; e <= epochs; ++e) {
        for (int c : fre::layers::reselect({}, e, cfg, channels).selected) ++hits[static_cast<std::size_t>(c)];
    }
    const double p = static_cast<double>(count) / channels;
    const double mean = epochs * p, sd = std::sqrt(epochs * p * (1 - p));
    int outside = 0;
    double max_z = 0, chi2 = 0;
    for (int h : hits) {
        const double z = std::abs(h - mean) / sd;
        outside += z > 3.0;
        max_z = std::max(max_z, z);
        chi2 += (h - mean) * (h - mean) / mean;
    }
    const auto [lo, hi] = std::minmax_element(hits.begin(), hits.end());
    report(3, outside == 0,
           std::to_string(outside) + "/512 channels outside 3 sd (band " + fmt(mean - 3 * sd, 6) + ".." +
               fmt(mean + 3 * sd, 6) + ", counts " + std::to_string(*lo) + ".." + std::to_string(*hi) + ", max |z| " +
               fmt(max_z, 5) + ")");
    // With 512 channels a perfect sampler leaves ~1.4 outside 3 sd on average.
    std::cout << "  calibrated: max |z| " << fmt(max_z, 5) << " < 4.1 (family-wise band) "
              << (max_z < 4.1 ? "ok" : "exceeded") << "; chi-square " << fmt(chi2, 5) << " on 511 df, |chi2 - 511| < "
              << fmt(5 * std::sqrt(1022.0), 4) << " " << (std::abs(chi2 - 511) < 5 * std::sqrt(1022.0) ? "ok" : "exceeded")
              << "\n";
}

// ---- 4 ---------------------------------------------------------------------

void criterion4() {
    std::mt19937_64 rng(4);
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int classes = 2 + static_cast<int>(rng() % 4);
        const std::size_t n = 1 + rng() % 100;
        std::vector<int> pred(n), gt(n);
        for (auto& v : pred) v = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
        for (auto& v : gt) v = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
        fre::metrics::ConfusionMatrix cm(classes);
        cm.accumulate(pred, gt);
        const auto m = fre::metrics::iou(cm);
        const auto oracle = set_count_iou(pred, gt, classes);
        if (m.per_class_iou != oracle.per_class || m.mean_iou != oracle.mean) ++mismatches;
    }
    report(4, mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 pairs");
}

// ---- 5 ---------------------------------------------------------------------

void criterion5() {
    std::mt19937_64 rng(5);
    const auto main = random_tensor({2, 3, 8, 8}, rng, -3, 3, false);
    const auto aux = random_tensor({2, 3, 8, 8}, rng, -3, 3, false);
    std::vector<int> labels(128);
    for (auto& l : labels) l = static_cast<int>(rng() % 3);
    TapeD t;
    const double ce_main = ag::softmax_cross_entropy<double>(t, main, labels).item();
    const double ce_aux = ag::softmax_cross_entropy<double>(t, aux, labels).item();
    using fre::train::SupervisionConfig;
    const double at0 = fre::train::combined_loss<double>(t, main, &aux, labels, SupervisionConfig{0.0}).item();
    const double at1 = fre::train::combined_loss<double>(t, main, &aux, labels, SupervisionConfig{1.0}).item();
    const double lam = 0.3257;
    const double mid = fre::train::combined_loss<double>(t, main, &aux, labels, SupervisionConfig{lam}).item();
    const double closed = (1 - lam) * ce_main + lam * ce_aux;
    const bool ends = at0 == ce_main && at1 == ce_aux;
    report(5, ends && std::abs(mid - closed) <= 1e-12,
           std::string("endpoints bit-exact ") + (ends ? "yes" : "no") + ", |blend - closed form| " +
               fmt(std::abs(mid - closed), 3));
}

// ---- 6 ---------------------------------------------------------------------

void criterion6() {
    const auto t0 = Clock::now();
    fre::tpe::SearchSpace space{{{"B", fre::tpe::DimKind::Integer, 1, 512, false},
                                 {"X", fre::tpe::DimKind::Integer, 1, 1000, false}}};
    auto f = [](double b, double x) { return -((b - 100) * (b - 100) / (512.0 * 512.0) + (x - 300) * (x - 300) / 1e6); };
    std::vector<double> grid;
    grid.reserve(512 * 1000);
    for (int b = 1; b <= 512; ++b)
        for (int x = 1; x <= 1000; ++x) grid.push_back(f(b, x));
    std::sort(grid.begin(), grid.end(), std::greater<>());
    const double top1 = grid[grid.size() / 100 - 1];

    fre::tpe::Runner runner = [&](const fre::tpe::Point& p, std::uint64_t, int) { return f(p[0], p[1]); };
    int hits = 0;
    std::vector<double> tpe_best, rnd_best;
    for (std::uint64_t s = 0; s < 20; ++s) {
        fre::tpe::TpeConfig cfg;
        cfg.seed = fre::named_seed(s, "search");
        auto r = fre::tpe::run_search(space, runner, 50, cfg);
        tpe_best.push_back(r.history[*r.best].objective);
        hits += tpe_best.back() >= top1;
        cfg.random_only = true;
        auto q = fre::tpe::run_search(space, runner, 50, cfg);
        rnd_best.push_back(q.history[*q.best].objective);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[9] + v[10]);
    };
    const double secs = seconds_since(t0);
    report(6, hits >= 18 && median(tpe_best) >= median(rnd_best) && secs < 60,
           std::to_string(hits) + "/20 in top 1% (threshold " + fmt(top1, 4) + "), median best TPE " +
               fmt(median(tpe_best), 4) + " vs random " + fmt(median(rnd_best), 4) + ", " + fmt(secs, 3) + " s");
}

// ---- 7 ---------------------------------------------------------------------

Json desk_config(const fs::path& out) {
    Json j = Json::parse(R"({
        "seed": 0,
        "model": {"base_width": 8, "depth": 4, "variant": "baseline"},
        "train": {"epochs": 200, "batch_size": 4},
        "data": {"count": 50, "split": [35, 5, 10], "synthetic": {"image_size": 64}}
    })");
    j["output_dir"] = out.string();
    return j;
}

void criterion7(const fs::path& root) {
    std::ostringstream log;
    const auto t0 = Clock::now();
    const auto base = cli::cmd_train(desk_config(root / "baseline"), false, log);
    const double base_secs = seconds_since(t0);
    const double base_miou = base.state.best_miou;

    auto search = desk_config(root / "search");
    search["model"]["variant"] = "fre";
    search["fre"] = Json{{"B", 8}, {"X", 250}, {"mode", "random"}};
    search["search"] = Json{{"n_trials", 10},
                            {"n_startup", 5},
                            {"trial_epochs", 40},
                            {"space", {{{"name", "fre.B"}, {"type", "int"}, {"lo", 1}, {"hi", 128}},
                                       {{"name", "fre.X"}, {"type", "int"}, {"lo", 1}, {"hi", 1000}}}}};
    const auto found = cli::cmd_search(search, log);
    if (!found.best) {
        report(7, false, "every search trial failed");
        return;
    }
    const auto& best = found.history[*found.best];
    auto final_cfg = desk_config(root / "fre");
    final_cfg["model"]["variant"] = "fre";
    final_cfg["fre"] = Json{{"B", static_cast<int>(best.point[0])}, {"X", best.point[1]}, {"mode", "random"}};
    const auto fre = cli::cmd_train(final_cfg, false, log);
    const double fre_miou = fre.state.best_miou;
    report(7, base_miou >= 0.70 && base_secs < 900 && fre_miou >= base_miou - 0.02,
           "baseline best val mIoU " + fmt(base_miou) + " in " + fmt(base_secs, 3) + " s; FRE(B=" +
               std::to_string(static_cast<int>(best.point[0])) + ", X=" + std::to_string(static_cast<int>(best.point[1])) +
               ") " + fmt(fre_miou) + " (need >= " + fmt(base_miou - 0.02) + "); total " +
               fmt(seconds_since(t0), 4) + " s");
}

// ---- 8 ---------------------------------------------------------------------

Json small_run(const fs::path& out, const std::string& variant, int epochs) {
    Json j = Json::parse(R"({
        "seed": 1,
        "model": {"base_width": 8, "depth": 4},
        "train": {"batch_size": 4},
        "data": {"count": 16, "split": [10, 3, 3], "synthetic": {"image_size": 32, "min_radius": 5, "max_radius": 8,
                 "membrane_width": 1.5}}
    })");
    j["output_dir"] = out.string();
    j["model"]["variant"] = variant;
    j["train"]["epochs"] = epochs;
    return j;
}

bool read_csv_rows(const fs::path& path, std::vector<std::vector<std::string>>& rows) {
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return false;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return true;
}

void criterion8(const fs::path& root) {
    std::ostringstream log;
    const int epochs = 12;
    std::vector<int> first20(20);
    std::iota(first20.begin(), first20.end(), 0);

    auto fig9 = small_run(root / "fig9_fre", "fre", epochs);
    fig9["fre"] = Json{{"B", 10}, {"X", 10000}, {"mode", "fixed"}, {"fixed_channels", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}};
    fig9["train"]["stats"] = Json{{"channel_sums", true}, {"channels", first20}};
    cli::cmd_train(fig9, false, log);
    auto ref = small_run(root / "fig9_baseline", "baseline", epochs);
    ref["train"]["stats"] = Json{{"channel_sums", true}, {"channels", first20}};
    cli::cmd_train(ref, false, log);
    auto fig2 = small_run(root / "fig2_baseline", "baseline", epochs);
    fig2["train"]["stats"] = Json{{"site_means", true}};
    cli::cmd_train(fig2, false, log);
    cli::cmd_report({root / "fig9_fre", root / "fig9_baseline", root / "fig2_baseline"}, root / "report", log);

    std::vector<std::vector<std::string>> rows9, rows2;
    const bool have9 = read_csv_rows(root / "report" / "fig9_channel_sums.csv", rows9);
    const bool have2 = read_csv_rows(root / "report" / "fig2_activation.csv", rows2);

    // run,epoch,no_module,enhanced,non_enhanced
    bool ok9 = have9 && static_cast<int>(rows9.size()) == epochs;
    int prev = 0;
    double first_e = 0, last_e = 0, first_n = 0, last_n = 0, first_b = 0, last_b = 0;
    for (const auto& r : rows9) {
        if (r.size() != 5 || r[0] != "fig9_fre") {
            ok9 = false;
            continue;
        }
        const int epoch = std::stoi(r[1]);
        ok9 = ok9 && epoch > prev;
        prev = epoch;
        for (int k = 2; k < 5; ++k) ok9 = ok9 && !r[static_cast<std::size_t>(k)].empty() && std::isfinite(std::stod(r[static_cast<std::size_t>(k)]));
        if (!ok9) continue;
        if (epoch == 1) {
            first_b = std::stod(r[2]);
            first_e = std::stod(r[3]);
            first_n = std::stod(r[4]);
        }
        last_b = std::stod(r[2]);
        last_e = std::stod(r[3]);
        last_n = std::stod(r[4]);
    }

    // run,epoch,site,mean: both sites in every epoch, epochs increasing per site.
    bool ok2 = have2;
    std::map<std::string, std::vector<int>> per_site;
    for (const auto& r : rows2) {
        if (r.size() != 4 || r[0] != "fig2_baseline" || !std::isfinite(std::stod(r[3]))) {
            ok2 = false;
            continue;
        }
        per_site[r[2]].push_back(std::stoi(r[1]));
    }
    for (const char* site : {"bottleneck", "skip"}) {
        const auto& v = per_site[site];
        std::vector<int> want(epochs);
        std::iota(want.begin(), want.end(), 1);
        ok2 = ok2 && v == want;
    }
    report(8, ok9 && ok2,
           std::string("fig9 series ") + (ok9 ? "ok" : "bad") + " (" + std::to_string(rows9.size()) +
               " epochs), fig2 series " + (ok2 ? "ok" : "bad") + " (" + std::to_string(rows2.size()) + " rows)");
    if (ok9) {
        auto trend = [](double a, double b) { return b > a ? "rises" : "falls"; };
        std::cout << "  observed: no module " << fmt(first_b) << " -> " << fmt(last_b) << " (" << trend(first_b, last_b)
                  << "), enhanced " << fmt(first_e) << " -> " << fmt(last_e) << " (" << trend(first_e, last_e)
                  << "), non-enhanced " << fmt(first_n) << " -> " << fmt(last_n) << " (" << trend(first_n, last_n)
                  << ")\n";
    }
}

// ---- 9 ---------------------------------------------------------------------

std::vector<fs::path> pipeline(const fs::path& root) {
    std::ostringstream log;
    cli::GenerateOptions gen;
    gen.out = root / "data";
    gen.count = 12;
    gen.image_size = 32;
    gen.split = {6, 3, 3};
    gen.seed = 9;
    cli::cmd_generate(gen, log);

    auto run = small_run(root / "run", "fre", 3);
    run["fre"] = Json{{"B", 12}, {"X", 300}, {"mode", "random"}};
    run["train"]["stats"] = Json{{"site_means", true}, {"channel_sums", true}, {"channels", {0, 1, 2}}};
    cli::cmd_train(run, false, log);

    cli::EvalOptions ev;
    ev.checkpoint = root / "run" / cli::kBestCheckpoint;
    ev.data_dir = gen.out;
    ev.split = "test";
    ev.out = root / "eval";
    cli::cmd_eval(ev, log);

    auto search = small_run(root / "search", "fre", 2);
    search["fre"] = Json{{"B", 4}, {"X", 10}, {"mode", "random"}};
    search["search"] = Json{{"n_trials", 4},
                            {"n_startup", 2},
                            {"space", {{{"name", "fre.B"}, {"type", "int"}, {"lo", 1}, {"hi", 64}},
                                       {{"name", "fre.X"}, {"type", "int"}, {"lo", 1}, {"hi", 1000}}}}};
    cli::cmd_search(search, log);
    cli::cmd_report({root / "run", root / "search"}, root / "report", log);

    return {"run/metrics.csv", "run/activation_stats.csv", "eval/eval.csv", "search/scatter.csv",
            "report/comparison.csv", "report/fig2_activation.csv", "report/fig9_channel_sums.csv",
            "report/tpe_scatter.csv"};
}

void criterion9(const fs::path& root) {
    const auto files = pipeline(root / "first");
    pipeline(root / "second");
    int differ = 0, missing = 0;
    for (const auto& f : files) {
        const auto a = root / "first" / f, b = root / "second" / f;
        if (!fs::exists(a) || !fs::exists(b)) {
            ++missing;
            continue;
        }
        if (slurp(a) != slurp(b)) {
            ++differ;
            std::cout << "  differs: " << f.string() << "\n";
        }
    }
    report(9, differ == 0 && missing == 0,
           std::to_string(files.size() - static_cast<std::size_t>(differ + missing)) + "/" +
               std::to_string(files.size()) + " CSVs identical across generate/train/eval/search/report re-runs");
}

template <typename F>
void guarded(int id, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
    const auto root = fresh_dir("acceptance");

    if (want(1)) guarded(1, criterion1);
    if (want(2)) guarded(2, criterion2);
    if (want(3)) guarded(3, criterion3);
    if (want(4)) guarded(4, criterion4);
    if (want(5)) guarded(5, criterion5);
    if (want(6)) guarded(6, criterion6);
    if (want(8)) guarded(8, [&] { criterion8(root / "c8"); });
    if (want(9)) guarded(9, [&] { criterion9(root / "c9"); });
    if (want(7)) guarded(7, [&] { criterion7(root / "c7"); });
    return failures == 0 ? 0 : 1;
}
