#include "fre/train/optimizer.hpp"

#include <cmath>

namespace fre::train {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer: lr must be finite and non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg, const model::ParameterStore<T>& params) : cfg_(cfg) {
    cfg_.validate();
    for (const auto& e : params.entries()) {
        const std::size_t n = e.trainable ? e.tensor.numel() : 0;
        first_.emplace_back(n, T(0));
        second_.emplace_back(cfg_.kind == OptimizerKind::Adam ? n : 0, T(0));
    }
}

template <typename T>
void Optimizer<T>::step(model::ParameterStore<T>& params) {
    auto& entries = params.entries();
    if (entries.size() != first_.size()) throw ConfigError("optimizer: parameter store changed since construction");
    ++step_;
    const T lr = static_cast<T>(cfg_.lr);
    if (cfg_.kind == OptimizerKind::Adam) {
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(step_)));
        const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(step_)));
        const T eps = static_cast<T>(cfg_.epsilon);
        for (std::size_t k = 0; k < entries.size(); ++k) {
            auto& e = entries[k];
            if (!e.trainable || !e.tensor.has_grad()) continue;
            auto w = e.tensor.data();
            auto g = e.tensor.grad();
            auto& m = first_[k];
            auto& v = second_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
    } else {
        const T mu = static_cast<T>(cfg_.momentum);
        for (std::size_t k = 0; k < entries.size(); ++k) {
            auto& e = entries[k];
            if (!e.trainable || !e.tensor.has_grad()) continue;
            auto w = e.tensor.data();
            auto g = e.tensor.grad();
            auto& vel = first_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                vel[i] = mu * vel[i] + g[i];
                w[i] -= lr * vel[i];
            }
        }
    }
}

template <typename T>
std::vector<model::NamedTensor> Optimizer<T>::export_state(const model::ParameterStore<T>& params) const {
    std::vector<model::NamedTensor> out;
    out.push_back({"optim.step", {1}, {static_cast<float>(step_)}});
    const auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        if (!entries[k].trainable) continue;
        const auto& shape = entries[k].tensor.shape();
        out.push_back({"optim.m." + entries[k].name, shape, std::vector<float>(first_[k].begin(), first_[k].end())});
        if (cfg_.kind == OptimizerKind::Adam) {
            out.push_back({"optim.v." + entries[k].name, shape, std::vector<float>(second_[k].begin(), second_[k].end())});
        }
    }
    return out;
}

template <typename T>
void Optimizer<T>::import_state(const model::ParameterStore<T>& params, const model::CheckpointData& data) {
    const auto* step = data.find("optim.step");
    if (step == nullptr) throw DataError("", "checkpoint holds no optimizer state");
    step_ = static_cast<long>(step->values.at(0));
    const auto& entries = params.entries();
    auto load = [&](const std::string& name, std::vector<T>& dst) {
        const auto* rec = data.find(name);
        if (rec == nullptr || rec->values.size() != dst.size()) {
            throw DataError("", "optimizer state '" + name + "' missing or mis-sized");
        }
        std::copy(rec->values.begin(), rec->values.end(), dst.begin());
    };
    for (std::size_t k = 0; k < entries.size(); ++k) {
        if (!entries[k].trainable) continue;
        load("optim.m." + entries[k].name, first_[k]);
        if (cfg_.kind == OptimizerKind::Adam) load("optim.v." + entries[k].name, second_[k]);
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace fre::train
