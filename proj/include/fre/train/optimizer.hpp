#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "fre/model/checkpoint.hpp"
#include "fre/model/parameters.hpp"

namespace fre::train {

enum class OptimizerKind { Adam, Sgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.0;  // sgd only

    void validate() const;
};

// Updates trainable entries of a parameter store from their gradients.
// Entries without a gradient buffer are left alone.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, const model::ParameterStore<T>& params);

    void step(model::ParameterStore<T>& params);
    long steps() const noexcept { return step_; }

    // State as "optim.*" checkpoint records, and back.
    std::vector<model::NamedTensor> export_state(const model::ParameterStore<T>& params) const;
    void import_state(const model::ParameterStore<T>& params, const model::CheckpointData& data);

private:
    OptimizerConfig cfg_;
    long step_ = 0;
    std::vector<std::vector<T>> first_;   // Adam m, or SGD velocity
    std::vector<std::vector<T>> second_;  // Adam v
};

}  // namespace fre::train
