#include "fre/train/stats.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace fre::train {

std::string_view to_string(StatSite s) { return s == StatSite::Bottleneck ? "bottleneck" : "skip"; }
std::string_view to_string(StatKind k) { return k == StatKind::Mean ? "mean" : "sum"; }

namespace {

template <typename T>
double mean_of(const ag::Tensor<T>& t) {
    double acc = 0.0;
    for (T v : t.data()) acc += static_cast<double>(v);
    return t.numel() ? acc / static_cast<double>(t.numel()) : 0.0;
}

}  // namespace

template <typename T>
std::vector<ActivationStat> record_activation_stats(model::Network<T>& net, const ag::Tensor<T>& images, int epoch,
                                                    const StatHooks& hooks) {
    std::vector<ActivationStat> rows;
    if (!hooks.any()) return rows;
    ag::Tape<T> tape;
    tape.set_recording(false);
    const model::ForwardContext ctx{ag::Phase::Train, epoch, 0, false};
    const auto res = net.forward(tape, images, ctx);

    if (hooks.site_means) {
        if (res.bottleneck.defined()) {
            rows.push_back({epoch, StatSite::Bottleneck, StatKind::Mean, std::nullopt, mean_of(res.bottleneck)});
        }
        rows.push_back({epoch, StatSite::Skip, StatKind::Mean, std::nullopt, mean_of(res.deepest_skip)});
    }
    if (hooks.channel_sums && res.bottleneck.defined()) {
        const auto& b = res.bottleneck;
        const int n = b.dim(0), c = b.dim(1);
        const std::size_t plane = static_cast<std::size_t>(b.dim(2)) * b.dim(3);
        std::vector<int> channels = hooks.channels;
        if (channels.empty()) {
            for (int k = 0; k < std::min(20, c); ++k) channels.push_back(k);
        }
        auto x = b.data();
        for (int ch : channels) {
            if (ch < 0 || ch >= c) {
                throw ConfigError("stat channel " + std::to_string(ch) + " outside bottleneck width " + std::to_string(c));
            }
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * plane;
                for (std::size_t p = 0; p < plane; ++p) acc += static_cast<double>(x[base + p]);
            }
            rows.push_back({epoch, StatSite::Bottleneck, StatKind::Sum, ch, acc / n});
        }
    }
    return rows;
}

template std::vector<ActivationStat> record_activation_stats(model::Network<float>&, const ag::Tensor<float>&, int,
                                                             const StatHooks&);
template std::vector<ActivationStat> record_activation_stats(model::Network<double>&, const ag::Tensor<double>&, int,
                                                             const StatHooks&);

void write_stats_csv(std::ostream& out, const std::vector<ActivationStat>& rows) {
    out << kStatCsvHeader << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        out << r.epoch << ',' << to_string(r.site) << ',' << to_string(r.statistic) << ',';
        if (r.channel) out << *r.channel;
        out << ',' << r.value << '\n';
    }
}

std::vector<ActivationStat> parse_stats_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kStatCsvHeader) {
        throw DataError("", "activation-stat CSV must start with '" + std::string(kStatCsvHeader) + "'");
    }
    std::vector<ActivationStat> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        auto bad = [&](const std::string& why) {
            return DataError("", "activation-stat CSV line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 5) throw bad("expected 5 fields");
        ActivationStat r;
        try {
            r.epoch = std::stoi(f[0]);
            r.value = std::stod(f[4]);
            if (!f[3].empty()) r.channel = std::stoi(f[3]);
        } catch (const std::exception&) {
            throw bad("malformed number");
        }
        if (f[1] == "bottleneck") r.site = StatSite::Bottleneck;
        else if (f[1] == "skip") r.site = StatSite::Skip;
        else throw bad("unknown site '" + f[1] + "'");
        if (f[2] == "mean") r.statistic = StatKind::Mean;
        else if (f[2] == "sum") r.statistic = StatKind::Sum;
        else throw bad("unknown statistic '" + f[2] + "'");
        if (!std::isfinite(r.value)) throw bad("non-finite value");
        rows.push_back(r);
    }
    return rows;
}

}  // namespace fre::train
