#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gridformer/shape.hpp"

namespace gridformer {

template <typename T>
class Tape;

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() { return Dtype::f32; }
template <>
constexpr Dtype dtype_of<double>() { return Dtype::f64; }

// Dense rank<=4 value. The buffer is shared; ops never mutate an existing
// buffer, they allocate fresh ones. A tensor may carry a (tape, node) binding
// when it was produced by a recorded operation.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s) { return Tensor(s, std::vector<T>(s.numel(), T(0))); }
    static Tensor full(Shape s, T v) { return Tensor(s, std::vector<T>(s.numel(), v)); }
    static Tensor from(Shape s, std::vector<T> values) {
        if (static_cast<int64_t>(values.size()) != s.numel())
            throw ShapeError("data length " + std::to_string(values.size()) +
                             " does not match shape " + s.str());
        return Tensor(s, std::move(values));
    }
    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    // Uniform in [lo, hi) from the caller's generator.
    template <typename Rng>
    static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
        std::vector<T> v(s.numel());
        std::uniform_real_distribution<T> dist(lo, hi);
        for (auto& x : v) x = dist(rng);
        return Tensor(s, std::move(v));
    }

    bool empty() const { return !data_; }
    const Shape& shape() const { return shape_; }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    const T* data() const { return data_->data(); }
    T* mut() { return data_->data(); }  // callers must not mutate recorded values

    T item() const {
        if (size() != 1) throw ContractError("item() requires a 1-element tensor, shape is " + shape_.str());
        return (*data_)[0];
    }
    T operator[](int64_t i) const { return (*data_)[i]; }

    // Rank-4 accessors (N,C,H,W).
    T at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
        return (*data_)[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    const std::vector<T>& vec() const { return *data_; }

    bool on_tape() const { return tape_ != nullptr; }
    Tape<T>* tape() const { return tape_; }
    int node() const { return node_; }
    void bind(Tape<T>* t, int node) {
        tape_ = t;
        node_ = node;
    }
    Tensor detached() const {
        Tensor t = *this;
        t.tape_ = nullptr;
        t.node_ = -1;
        return t;
    }
    // Deep copy with its own buffer; the only safe base for in-place writes.
    Tensor clone() const { return Tensor(shape_, std::vector<T>(*data_)); }

private:
    Tensor(Shape s, std::vector<T> v)
        : shape_(s), data_(std::make_shared<std::vector<T>>(std::move(v))) {}

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    Tape<T>* tape_ = nullptr;
    int node_ = -1;
};

// Named trainable tensor. grad is empty until the first backward pass.
template <typename T>
struct Parameter {
    std::string path;
    Tensor<T> value;
    Tensor<T> grad;

    bool has_grad() const { return !grad.empty(); }
    void zero_grad() { grad = Tensor<T>::zeros(value.shape()); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gridformer
