#include "fre/tpe/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "fre/errors.hpp"

namespace fre::tpe {

using Json = nlohmann::json;

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLogSqrt2Pi = 0.91893853320467274;

double to_model(const Dimension& d, double x) { return d.log ? std::log(x) : x; }
double from_model(const Dimension& d, double t) { return d.log ? std::exp(t) : t; }

double finish(const Dimension& d, double x) {
    if (d.kind == DimKind::Integer) x = std::round(x);
    return std::clamp(x, d.lo, d.hi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

// Gaussian mixture over [lo, hi] in model space, each component truncated
// and renormalised to the interval.
struct Parzen {
    std::vector<double> mu;
    double sigma = 1.0;
    double lo = 0.0, hi = 1.0;
    std::vector<double> mass;

    Parzen(std::vector<double> centres, double lo_, double hi_) : mu(std::move(centres)), lo(lo_), hi(hi_) {
        const double range = hi - lo;
        sigma = std::max(range / (1.0 + static_cast<double>(mu.size())), 1e-3 * range);
        for (double m : mu) {
            mass.push_back(std::max(normal_cdf((hi - m) / sigma) - normal_cdf((lo - m) / sigma), 1e-300));
        }
    }

    double log_pdf(double t) const {
        if (mu.empty()) return -std::log(hi - lo);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double z = (t - mu[i]) / sigma;
            terms[i] = -0.5 * z * z - kLogSqrt2Pi - std::log(sigma) - std::log(mass[i]);
            best = std::max(best, terms[i]);
        }
        double acc = 0.0;
        for (double v : terms) acc += std::exp(v - best);
        return best + std::log(acc / static_cast<double>(mu.size()));
    }

    double sample(Rng& rng) const {
        if (mu.empty()) return lo + (hi - lo) * uniform01(rng);
        const double m = mu[static_cast<std::size_t>(uniform_below(rng, mu.size()))];
        for (int attempt = 0; attempt < 64; ++attempt) {
            const double t = m + sigma * standard_normal(rng);
            if (t >= lo && t <= hi) return t;
        }
        return std::clamp(m, lo, hi);
    }
};

}  // namespace

void SearchSpace::validate() const {
    if (dims.empty()) throw ConfigError("search space has no dimensions");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& d = dims[i];
        if (d.name.empty()) throw ConfigError("search dimension needs a name");
        if (!(d.lo < d.hi)) throw ConfigError("search dimension '" + d.name + "': need lo < hi");
        if (d.log && d.lo <= 0.0) throw ConfigError("search dimension '" + d.name + "': log scale needs lo > 0");
        for (std::size_t j = 0; j < i; ++j) {
            if (dims[j].name == d.name) throw ConfigError("duplicate search dimension '" + d.name + "'");
        }
    }
}

std::size_t SearchSpace::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i].name == name) return i;
    }
    throw ConfigError("no search dimension named '" + name + "'");
}

void TpeConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tpe: gamma must lie in (0, 1)");
    if (n_startup < 1) throw ConfigError("tpe: n_startup must be >= 1");
    if (n_ei < 1) throw ConfigError("tpe: n_ei must be >= 1");
}

int good_count(double gamma, int n) { return static_cast<int>(std::ceil(gamma * n - 1e-12)); }

Point sample_prior(const SearchSpace& space, Rng& rng) {
    Point p;
    for (const auto& d : space.dims) {
        const double lo = to_model(d, d.lo), hi = to_model(d, d.hi);
        p.push_back(finish(d, from_model(d, lo + (hi - lo) * uniform01(rng))));
    }
    return p;
}

Point propose(const std::vector<TrialRecord>& history, const SearchSpace& space, const TpeConfig& cfg,
              int trial_index) {
    space.validate();
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(trial_index)}));

    std::vector<const TrialRecord*> done;
    for (const auto& r : history) {
        if (r.status == TrialStatus::Done) done.push_back(&r);
    }
    if (cfg.random_only || static_cast<int>(done.size()) < cfg.n_startup) return sample_prior(space, rng);

    std::stable_sort(done.begin(), done.end(),
                     [](const TrialRecord* a, const TrialRecord* b) { return a->objective > b->objective; });
    const auto n_good = static_cast<std::size_t>(good_count(cfg.gamma, static_cast<int>(done.size())));

    std::vector<Parzen> good, bad;
    for (std::size_t k = 0; k < space.dims.size(); ++k) {
        const auto& d = space.dims[k];
        std::vector<double> g, b;
        for (std::size_t i = 0; i < done.size(); ++i) {
            (i < n_good ? g : b).push_back(to_model(d, done[i]->point.at(k)));
        }
        good.emplace_back(std::move(g), to_model(d, d.lo), to_model(d, d.hi));
        bad.emplace_back(std::move(b), to_model(d, d.lo), to_model(d, d.hi));
    }

    Point best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cfg.n_ei; ++c) {
        Point cand;
        double score = 0.0;
        for (std::size_t k = 0; k < space.dims.size(); ++k) {
            const auto& d = space.dims[k];
            const double x = finish(d, from_model(d, good[k].sample(rng)));
            const double t = to_model(d, x);
            score += good[k].log_pdf(t) - bad[k].log_pdf(t);
            cand.push_back(x);
        }
        if (best.empty() || score > best_score) {
            best_score = score;
            best = std::move(cand);
        }
    }
    return best;
}

std::optional<std::size_t> best_trial(const std::vector<TrialRecord>& history) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].status != TrialStatus::Done) continue;
        if (!best || history[i].objective > history[*best].objective) best = i;
    }
    return best;
}

std::string trial_to_json_line(const TrialRecord& r, const SearchSpace& space) {
    Json point = Json::object();
    for (std::size_t k = 0; k < space.dims.size(); ++k) {
        if (space.dims[k].kind == DimKind::Integer) point[space.dims[k].name] = static_cast<long long>(r.point.at(k));
        else point[space.dims[k].name] = r.point.at(k);
    }
    Json j{{"index", r.index}, {"point", point}, {"seed", r.seed},
           {"status", r.status == TrialStatus::Done ? "done" : "failed"}};
    j["objective"] = r.status == TrialStatus::Done ? Json(r.objective) : Json(nullptr);
    return j.dump();
}

TrialRecord trial_from_json_line(const std::string& line, const SearchSpace& space) {
    TrialRecord r;
    try {
        const Json j = Json::parse(line);
        r.index = j.at("index").get<int>();
        r.seed = j.at("seed").get<std::uint64_t>();
        const auto status = j.at("status").get<std::string>();
        if (status != "done" && status != "failed") throw ConfigError("unknown trial status '" + status + "'");
        r.status = status == "done" ? TrialStatus::Done : TrialStatus::Failed;
        if (r.status == TrialStatus::Done) r.objective = j.at("objective").get<double>();
        const auto& point = j.at("point");
        if (point.size() != space.dims.size()) throw ConfigError("trial point does not match the search space");
        for (const auto& d : space.dims) r.point.push_back(point.at(d.name).get<double>());
    } catch (const Json::exception& e) {
        throw DataError("", std::string("malformed trial record: ") + e.what());
    }
    return r;
}

std::vector<TrialRecord> read_history(const std::filesystem::path& path, const SearchSpace& space) {
    std::vector<TrialRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto r = trial_from_json_line(line, space);
        if (r.index != static_cast<int>(out.size())) {
            throw DataError(path.string(), "trial indices must run 0, 1, 2, ... in order");
        }
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

void persist(const std::filesystem::path& path, const std::vector<TrialRecord>& history, const SearchSpace& space) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError(tmp.string(), "cannot write search history");
        for (const auto& r : history) out << trial_to_json_line(r, space) << '\n';
        if (!out.flush()) throw DataError(tmp.string(), "write failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

SearchResult run_search(const SearchSpace& space, const Runner& runner, int n_trials, const TpeConfig& cfg,
                        const std::optional<std::filesystem::path>& history_path,
                        const std::function<void(const TrialRecord&)>& on_trial) {
    space.validate();
    cfg.validate();
    if (n_trials < 1) throw ConfigError("search: n_trials must be >= 1");
    SearchResult res;
    if (history_path) res.history = read_history(*history_path, space);
    if (static_cast<int>(res.history.size()) > n_trials) {
        throw ConfigError("search history already holds " + std::to_string(res.history.size()) +
                          " trials, more than n_trials = " + std::to_string(n_trials));
    }
    for (int index = static_cast<int>(res.history.size()); index < n_trials; ++index) {
        TrialRecord r;
        r.index = index;
        r.point = propose(res.history, space, cfg, index);
        r.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(index), hash_name("trial")});
        try {
            r.objective = runner(r.point, r.seed, index);
            r.status = std::isfinite(r.objective) ? TrialStatus::Done : TrialStatus::Failed;
        } catch (const std::exception&) {
            r.status = TrialStatus::Failed;
        }
        if (r.status == TrialStatus::Failed) r.objective = 0.0;
        res.history.push_back(r);
        if (history_path) persist(*history_path, res.history, space);
        if (on_trial) on_trial(r);
    }
    res.best = best_trial(res.history);
    return res;
}

}  // namespace fre::tpe
