#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "awm/common.hpp"

namespace awm {

// Dense row-major float32 array with shape metadata.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(checked_count(shape), 0.0f) {}
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (checked_count(shape) != data.size())
            throw Error("tensor shape/data size mismatch");
    }

    size_t size() const { return data.size(); }
    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    int dim(size_t i) const { return shape.at(i); }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static size_t checked_count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw Error("negative tensor extent");
            n *= static_cast<size_t>(d);
        }
        return n;
    }
};

// Learnable tensor: value plus a gradient buffer of identical shape and an
// optional binary prune mask (1 = keep, 0 = forced zero).
struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor grad;
    std::vector<uint8_t> mask;  // empty = unmasked

    ParamTensor() = default;
    ParamTensor(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}

    size_t size() const { return value.size(); }
    bool has_mask() const { return !mask.empty(); }

    void zero_grad() { grad.fill(0.0f); }

    // Re-applies the mask so masked slots are exactly zero.
    void enforce_mask() {
        if (mask.empty()) return;
        for (size_t i = 0; i < value.size(); ++i)
            if (!mask[i]) value.data[i] = 0.0f;
    }
};

}  // namespace awm
