#pragma once

#include <functional>
#include <vector>

#include "fre/data/dataset.hpp"
#include "fre/metrics/metrics.hpp"
#include "fre/model/unet.hpp"

namespace fre::train {

struct EvalResult {
    metrics::ConfusionMatrix confusion;
    metrics::SegMetrics metrics;
    double loss = 0.0;  // mean per-pixel cross-entropy of the main head; 0 for plain predictors
};

// Maps one sample to a per-pixel class map.
using Predictor = std::function<std::vector<int>(const data::Sample&)>;

EvalResult evaluate(const Predictor& predict, const std::vector<data::Sample>& samples, int classes);

// Eval-phase forward (FRE and dropout are identities, batch norm uses running
// statistics). Leaves parameters and running statistics untouched.
template <typename T>
EvalResult evaluate(model::Network<T>& net, const std::vector<data::Sample>& samples, int batch_size = 4);

}  // namespace fre::train
