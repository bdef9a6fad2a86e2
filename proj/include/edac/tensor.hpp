#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "edac/common.hpp"

namespace edac {

// Dense rank-2 array of f64, row-major. Scalars are 1x1, vectors n x 1 or 1 x n.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {
        if (r <= 0 || c <= 0) throw ShapeError("Tensor: non-positive shape " + shape_str());
    }
    Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
        if (r <= 0 || c <= 0 || v.size() != static_cast<size_t>(r) * c)
            throw ShapeError("Tensor: data length " + std::to_string(v.size()) +
                             " does not match shape " + shape_str());
    }

    static Tensor scalar(double x) { return Tensor(1, 1, {x}); }
    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double x) {
        Tensor t(r, c);
        for (auto& e : t.v) e = x;
        return t;
    }

    size_t size() const { return v.size(); }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double item() const {
        if (v.size() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_str());
        return v[0];
    }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace edac
