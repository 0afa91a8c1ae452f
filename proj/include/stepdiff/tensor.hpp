#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepdiff/rng.hpp"

namespace stepdiff {

/// Dense row-major tensor of 64-bit floats. Value-semantic; shapes are
/// explicit and product(shape) == data.size() always holds.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(numel_of(shape), fill) {}

    static Tensor from(std::vector<std::size_t> s, std::vector<double> values) {
        Tensor t;
        t.shape = std::move(s);
        if (numel_of(t.shape) != values.size())
            throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                        " does not match shape product " +
                                        std::to_string(numel_of(t.shape)));
        t.data = std::move(values);
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const {
        if (shape.size() != 2) throw std::logic_error("tensor: cols() requires rank 2");
        return shape[1];
    }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "{";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "}";
    }

    /// Glorot-style uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        Tensor t({fan_in, fan_out});
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : t.data) v = rng.uniform(-a, a);
        return t;
    }

    static Tensor randn(std::vector<std::size_t> s, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = sigma * rng.normal();
        return t;
    }
};

}  // namespace stepdiff
