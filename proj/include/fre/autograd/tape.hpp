#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fre/autograd/tensor.hpp"

namespace fre::ag {

// Records differentiable operations in execution order. Because ops are
// appended as they run, the list is already topologically sorted and a
// single reverse sweep visits every node once.
//
// A tape supports one backward pass; call reset() before reusing it.
template <typename T>
class Tape {
public:
    // Reads the output gradient and accumulates into input gradients.
    using BackwardFn = std::function<void(std::span<const T> grad_out)>;

    struct Entry {
        std::string op;
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    bool recording() const noexcept { return recording_; }
    void set_recording(bool on) noexcept { recording_ = on; }

    // True when the op producing from `inputs` must be recorded.
    bool wants(std::initializer_list<const Tensor<T>*> inputs) const {
        if (!recording_) return false;
        for (const auto* t : inputs) {
            if (t != nullptr && t->defined() && t->requires_grad()) return true;
        }
        return false;
    }

    void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn) {
        if (consumed_) throw TapeError("cannot record onto a tape after backward(); call reset()");
        output.set_requires_grad(true);
        entries_.push_back(Entry{std::move(op), std::move(inputs), output, std::move(fn)});
    }

    void backward(const Tensor<T>& loss) {
        if (consumed_) throw TapeError("backward() already ran on this tape; call reset() first");
        if (!loss.defined() || loss.numel() != 1) {
            throw TapeError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
        }
        std::size_t last = entries_.size();
        for (std::size_t i = entries_.size(); i-- > 0;) {
            if (entries_[i].output.same_storage(loss)) {
                last = i;
                break;
            }
        }
        if (last == entries_.size()) throw TapeError("backward(): loss was not produced on this tape");

        for (auto& e : entries_) {
            for (auto& in : e.inputs) {
                if (in.defined() && in.requires_grad()) in.ensure_grad();
            }
        }
        Tensor<T> root = loss;
        root.ensure_grad()[0] += T(1);
        for (std::size_t i = last + 1; i-- > 0;) {
            auto& e = entries_[i];
            if (!e.output.has_grad()) continue;
            e.backward(e.output.grad());
        }
        consumed_ = true;
    }

    void reset() {
        entries_.clear();
        consumed_ = false;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
    std::vector<Entry> entries_;
    bool recording_ = true;
    bool consumed_ = false;
};

}  // namespace fre::ag
