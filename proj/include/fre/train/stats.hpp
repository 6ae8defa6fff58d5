#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fre/model/unet.hpp"

namespace fre::train {

enum class StatSite { Bottleneck, Skip };
enum class StatKind { Mean, Sum };

std::string_view to_string(StatSite s);
std::string_view to_string(StatKind k);

struct ActivationStat {
    int epoch = 0;
    StatSite site = StatSite::Bottleneck;
    StatKind statistic = StatKind::Mean;
    std::optional<int> channel;
    double value = 0.0;

    bool operator==(const ActivationStat&) const = default;
};

struct StatHooks {
    bool site_means = false;     // mean activation at the bottleneck and deepest skip
    bool channel_sums = false;   // per-channel bottleneck sums
    std::vector<int> channels;   // channels for the sums; empty means the first min(20, C)

    bool any() const noexcept { return site_means || channel_sums; }
};

// Train-phase probe forward on `images` without recording, without touching
// batch-norm running statistics. Means run over every element of the site
// tensor; channel sums add up the H*W map of each image and average over
// the batch. The bottleneck site is read after enhancement.
template <typename T>
std::vector<ActivationStat> record_activation_stats(model::Network<T>& net, const ag::Tensor<T>& images, int epoch,
                                                    const StatHooks& hooks);

// CSV header: epoch,site,statistic,channel,value (channel blank when absent).
inline constexpr std::string_view kStatCsvHeader = "epoch,site,statistic,channel,value";
void write_stats_csv(std::ostream& out, const std::vector<ActivationStat>& rows);
std::vector<ActivationStat> parse_stats_csv(std::istream& in);

}  // namespace fre::train
