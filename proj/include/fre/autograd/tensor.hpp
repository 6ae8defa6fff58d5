#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fre/errors.hpp"

namespace fre::ag {

// Up to four extents, interpreted as (batch, channel, height, width).
using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Phase { Train, Eval };

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first needed
    bool requires_grad = false;
};

// Shared handle to a dense row-major array. Copies alias the same storage;
// use clone() for a deep copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : impl_(std::make_shared<TensorStorage<T>>()) {
        validate(shape);
        impl_->data.assign(ag::numel(shape), fill);
        impl_->shape = std::move(shape);
        impl_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : impl_(std::make_shared<TensorStorage<T>>()) {
        validate(shape);
        if (values.size() != ag::numel(shape)) {
            throw ShapeError("Tensor", "numel", static_cast<long>(ag::numel(shape)),
                             static_cast<long>(values.size()));
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    T* raw() { return impl_->data.data(); }
    const T* raw() const { return impl_->data.data(); }
    T item() const {
        if (numel() != 1) throw ShapeError("item", "numel", 1, static_cast<long>(numel()));
        return impl_->data[0];
    }
    T& operator[](std::size_t i) { return impl_->data[i]; }
    const T& operator[](std::size_t i) const { return impl_->data[i]; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        impl_->requires_grad = flag;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    // Shallow-const, like the handle.
    std::span<T> grad() const { return impl_->grad; }
    // Allocates a zero gradient buffer if none exists.
    std::span<T> ensure_grad() const {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
        return impl_->grad;
    }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
    }
    void drop_grad() { impl_->grad.clear(); }

    Tensor clone() const {
        Tensor out(impl_->shape, impl_->data);
        out.impl_->requires_grad = impl_->requires_grad;
        return out;
    }

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }
    const void* id() const noexcept { return impl_.get(); }

private:
    static void validate(const Shape& shape) {
        if (shape.empty() || shape.size() > 4) {
            throw ShapeError("Tensor", "rank must be 1..4, got " + std::to_string(shape.size()));
        }
        for (int d : shape) {
            if (d < 0) throw ShapeError("Tensor", "negative extent in " + to_string(shape));
        }
    }

    std::shared_ptr<TensorStorage<T>> impl_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
    std::vector<To> values(src.numel());
    auto in = src.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<To>(in[i]);
    return Tensor<To>(src.shape(), std::move(values), src.requires_grad());
}

}  // namespace fre::ag
