#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vdd/errors.hpp"
#include "vdd/rng.hpp"

namespace vdd {

// Dense row-major tensor. Values are immutable after creation by convention;
// only the gradient buffer is mutated (by backward()). All creation paths
// reject non-finite values and zero extents.
template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;
    bool requires_grad = false;
    std::vector<S> grad;  // empty means "no gradient"; sized like data once touched

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
    void clear_grad() { grad.clear(); }

    int extent(int axis) const { return shape[static_cast<size_t>(axis)]; }
};

template <typename S>
using Ptr = std::shared_ptr<TensorT<S>>;

using Tensor = TensorT<float>;
using TensorPtr = Ptr<float>;

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

inline void check_shape_valid(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("empty shape");
    for (int e : shape)
        if (e < 1) throw ShapeError("non-positive extent in " + shape_str(shape));
}

template <typename S>
void check_finite(const TensorT<S>& t, const char* where) {
    for (S v : t.data)
        if (!std::isfinite(v)) throw NumericError(std::string(where) + " produced non-finite value");
}

template <typename S>
Ptr<S> make_tensor(std::vector<int> shape, std::vector<S> data) {
    check_shape_valid(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match " + shape_str(shape));
    auto t = std::make_shared<TensorT<S>>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    check_finite(*t, "make_tensor");
    return t;
}

template <typename S>
Ptr<S> zeros(std::vector<int> shape) {
    check_shape_valid(shape);
    auto t = std::make_shared<TensorT<S>>();
    t->data.assign(static_cast<size_t>(shape_numel(shape)), S(0));
    t->shape = std::move(shape);
    return t;
}

template <typename S>
Ptr<S> full(std::vector<int> shape, S value) {
    if (!std::isfinite(value)) throw NumericError("full() given non-finite value");
    check_shape_valid(shape);
    auto t = std::make_shared<TensorT<S>>();
    t->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    t->shape = std::move(shape);
    return t;
}

template <typename S>
Ptr<S> scalar(S value) {
    return full<S>({1}, value);
}

// Standard-normal samples from the counter-based stream; identical (shape,
// seed) pairs give bit-identical tensors.
template <typename S>
Ptr<S> randn(const std::vector<int>& shape, uint64_t seed) {
    check_shape_valid(shape);
    auto t = zeros<S>(shape);
    Rng rng(seed);
    for (auto& v : t->data) v = static_cast<S>(rng.normal());
    return t;
}

template <typename S>
Ptr<S> randn_like(const TensorT<S>& ref, uint64_t seed) {
    return randn<S>(ref.shape, seed);
}

// Draw from an existing stream, advancing its counter.
template <typename S>
Ptr<S> randn_from(Rng& rng, const std::vector<int>& shape) {
    check_shape_valid(shape);
    auto t = zeros<S>(shape);
    for (auto& v : t->data) v = static_cast<S>(rng.normal());
    return t;
}

template <typename S>
Ptr<S> clone(const TensorT<S>& t) {
    auto c = std::make_shared<TensorT<S>>();
    c->shape = t.shape;
    c->data = t.data;
    return c;
}

template <typename S>
bool same_shape(const TensorT<S>& a, const TensorT<S>& b) {
    return a.shape == b.shape;
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (!same_shape(a, b))
        throw ShapeError(std::string(op) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Convert between precisions (used by the 64-bit gradient-check suite).
template <typename To, typename From>
Ptr<To> cast(const TensorT<From>& t) {
    auto out = zeros<To>(t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) out->data[i] = static_cast<To>(t.data[i]);
    return out;
}

template <typename S>
double max_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

template <typename S>
double mean_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "mean_abs_diff");
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    return s / static_cast<double>(a.data.size());
}

template <typename S>
bool bitwise_equal(const TensorT<S>& a, const TensorT<S>& b) {
    return a.shape == b.shape && a.data == b.data;
}

// FNV-1a over the raw value bytes; used for frozen-parameter ledgers and
// checkpoint checksums.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

template <typename S>
uint64_t tensor_checksum(const TensorT<S>& t) {
    uint64_t h = fnv1a64(t.shape.data(), t.shape.size() * sizeof(int));
    return fnv1a64(t.data.data(), t.data.size() * sizeof(S), h);
}

}  // namespace vdd
