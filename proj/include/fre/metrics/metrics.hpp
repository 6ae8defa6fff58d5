#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fre::metrics {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes);

    int classes() const noexcept { return classes_; }
    std::int64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }
    std::int64_t total() const;
    std::int64_t row_sum(int c) const;
    std::int64_t col_sum(int c) const;

    // Adds one count per pixel; throws DataError on out-of-range labels or
    // mismatched lengths.
    void accumulate(std::span<const int> pred, std::span<const int> truth);

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t index(int truth, int pred) const {
        return static_cast<std::size_t>(truth) * static_cast<std::size_t>(classes_) + static_cast<std::size_t>(pred);
    }

    int classes_;
    std::vector<std::int64_t> counts_;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const int> pred, std::span<const int> truth);

struct SegMetrics {
    // nullopt marks a class absent from both prediction and ground truth.
    std::vector<std::optional<double>> per_class_iou;
    double mean_iou = 0.0;  // mean over present classes; 0 when none are present
};

SegMetrics iou(const ConfusionMatrix& cm);

struct TableRow {
    std::string label;
    SegMetrics metrics;
};

// Column order for tables: classes 1..C-1, then class 0 (background).
std::vector<std::size_t> column_order(std::span<const std::string> class_names);

// Percentages with two decimals, one column per class plus mIoU.
std::string format_table(std::span<const TableRow> rows, std::span<const std::string> class_names);

// "label,<class>[%]...,mIoU[%]" CSV; absent classes are written as NA.
std::string format_csv(std::span<const TableRow> rows, std::span<const std::string> class_names);

}  // namespace fre::metrics
