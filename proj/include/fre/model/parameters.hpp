#pragma once

#include <map>
#include <string>
#include <vector>

#include "fre/autograd/tensor.hpp"

namespace fre::model {

// Named tensors owned by one network. Trainable entries are updated by the
// optimizer; the rest (batch-norm running statistics) only by forward passes.
template <typename T>
class ParameterStore {
public:
    struct Entry {
        std::string name;
        ag::Tensor<T> tensor;
        bool trainable;
    };

    ag::Tensor<T>& add(const std::string& name, ag::Shape shape, bool trainable, T fill = T(0)) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, ag::Tensor<T>(std::move(shape), fill, trainable), trainable});
        return entries_.back().tensor;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    ag::Tensor<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
        return entries_[it->second].tensor;
    }
    const ag::Tensor<T>& get(const std::string& name) const {
        return const_cast<ParameterStore*>(this)->get(name);
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t trainable_scalars() const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (e.trainable) n += e.tensor.numel();
        }
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    // Deep copy of every value (not gradients), in entry order.
    std::vector<std::vector<T>> snapshot() const {
        std::vector<std::vector<T>> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
        return out;
    }

    void restore(const std::vector<std::vector<T>>& values) {
        if (values.size() != entries_.size()) throw ConfigError("parameter snapshot size mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto dst = entries_[i].tensor.data();
            if (values[i].size() != dst.size()) {
                throw ConfigError("parameter snapshot mismatch for '" + entries_[i].name + "'");
            }
            std::copy(values[i].begin(), values[i].end(), dst.begin());
        }
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace fre::model
