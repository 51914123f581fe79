#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltv {

// Thrown when a computation produces NaN/Inf or trips a numeric guard.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on shape/argument contract violations.
struct shape_error : std::invalid_argument {
    explicit shape_error(const std::string& msg) : std::invalid_argument(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor of doubles. Rank 0 is a scalar.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
    }

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw shape_error("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_.assign(1, v);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t extent(int64_t d) const { return shape_[static_cast<size_t>(d)]; }
    bool is_scalar() const { return numel() == 1 && shape_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2D access (H x W)
    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

    // 3D access (C x H x W)
    double& at(int64_t c, int64_t i, int64_t j) {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }
    double at(int64_t c, int64_t i, int64_t j) const {
        return data_[static_cast<size_t>((c * shape_[1] + i) * shape_[2] + j)];
    }

    double scalar_value() const {
        if (numel() != 1)
            throw shape_error("scalar_value() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Hard error on NaN/Inf; `where` names the producing op.
    void require_finite(const char* where) const {
        for (size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i]))
                throw numeric_error(std::string(where) + ": non-finite value " +
                                    std::to_string(data_[i]) + " at flat index " +
                                    std::to_string(i));
        }
    }

private:
    void validate_shape() const {
        for (int64_t e : shape_)
            if (e <= 0)
                throw shape_error("non-positive extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw shape_error("dot: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace ltv
