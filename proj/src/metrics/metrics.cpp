#include "fre/metrics/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "fre/errors.hpp"

namespace fre::metrics {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
    if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
    counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t n = 0;
    for (auto v : counts_) n += v;
    return n;
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
    std::int64_t n = 0;
    for (int p = 0; p < classes_; ++p) n += at(c, p);
    return n;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
    std::int64_t n = 0;
    for (int t = 0; t < classes_; ++t) n += at(t, c);
    return n;
}

void ConfusionMatrix::accumulate(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw DataError("", "confusion matrix: prediction has " + std::to_string(pred.size()) +
                                " pixels, ground truth has " + std::to_string(truth.size()));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], t = truth[i];
        if (p < 0 || p >= classes_ || t < 0 || t >= classes_) {
            throw DataError("", "confusion matrix: label out of range at pixel " + std::to_string(i) + " (pred " +
                                    std::to_string(p) + ", truth " + std::to_string(t) + ", classes " +
                                    std::to_string(classes_) + ")");
        }
        ++counts_[index(t, p)];
    }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ConfigError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const int> pred, std::span<const int> truth) {
    cm.accumulate(pred, truth);
    return cm;
}

SegMetrics iou(const ConfusionMatrix& cm) {
    SegMetrics m;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < cm.classes(); ++c) {
        const std::int64_t inter = cm.at(c, c);
        const std::int64_t uni = cm.row_sum(c) + cm.col_sum(c) - inter;
        if (uni == 0) {
            m.per_class_iou.emplace_back(std::nullopt);
            continue;
        }
        const double v = static_cast<double>(inter) / static_cast<double>(uni);
        m.per_class_iou.emplace_back(v);
        sum += v;
        ++present;
    }
    m.mean_iou = present == 0 ? 0.0 : sum / present;
    return m;
}

namespace {

std::string percent(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << *v * 100.0;
    return os.str();
}

}  // namespace

std::vector<std::size_t> column_order(std::span<const std::string> class_names) {
    std::vector<std::size_t> order;
    for (std::size_t c = 1; c < class_names.size(); ++c) order.push_back(c);
    if (!class_names.empty()) order.push_back(0);
    return order;
}

std::string format_table(std::span<const TableRow> rows, std::span<const std::string> class_names) {
    const auto order = column_order(class_names);
    std::vector<std::string> header{""};
    for (auto c : order) header.push_back(class_names[c] + "[%]");
    header.emplace_back("mIoU[%]");

    std::vector<std::vector<std::string>> cells{header};
    for (const auto& r : rows) {
        std::vector<std::string> line{r.label};
        for (auto c : order) {
            line.push_back(c < r.metrics.per_class_iou.size() ? percent(r.metrics.per_class_iou[c]) : "NA");
        }
        line.push_back(percent(r.metrics.mean_iou));
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::ostringstream os;
    auto rule = [&] {
        std::size_t total = 0;
        for (auto w : width) total += w + 3;
        os << std::string(total, '-') << '\n';
    };
    for (std::size_t row = 0; row < cells.size(); ++row) {
        const auto& line = cells[row];
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i == 0) {
                os << std::left << std::setw(static_cast<int>(width[i])) << line[i];
            } else {
                os << (i == 1 || i + 1 == line.size() ? " | " : "   ") << std::right
                   << std::setw(static_cast<int>(width[i])) << line[i];
            }
        }
        os << '\n';
        if (row == 0) rule();
    }
    return os.str();
}

std::string format_csv(std::span<const TableRow> rows, std::span<const std::string> class_names) {
    const auto order = column_order(class_names);
    std::ostringstream os;
    os << "label";
    for (auto c : order) os << ',' << class_names[c] << "[%]";
    os << ",mIoU[%]\n";
    for (const auto& r : rows) {
        os << '"' << r.label << '"';
        for (auto c : order) {
            os << ',' << (c < r.metrics.per_class_iou.size() ? percent(r.metrics.per_class_iou[c]) : "NA");
        }
        os << ',' << percent(r.metrics.mean_iou) << '\n';
    }
    return os.str();
}

}  // namespace fre::metrics
