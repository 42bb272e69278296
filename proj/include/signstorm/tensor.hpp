#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace signstorm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense n-dimensional array of doubles, row-major, with an optional
// gradient buffer of the same shape. All graph values, images, weights and
// perturbations in this library are Tensors; everything is computed in
// 64-bit precision.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        for (int d : shape_)
            if (d <= 0) throw Error("Tensor: non-positive dimension in shape " + shape_str(shape_));
        data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
    }

    static Tensor from(Shape shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (shape_numel(t.shape_) != static_cast<int64_t>(values.size()))
            throw Error("Tensor: shape " + shape_str(t.shape_) + " does not match " +
                        std::to_string(values.size()) + " values");
        t.data_ = std::move(values);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool requires_grad = false;

    bool has_grad() const { return !grad_.empty(); }
    std::vector<double>& grad() {
        if (grad_.empty()) throw Error("Tensor: gradient buffer not allocated");
        return grad_;
    }
    const std::vector<double>& grad() const {
        if (grad_.empty()) throw Error("Tensor: gradient buffer not allocated");
        return grad_;
    }
    void alloc_grad() { grad_.assign(data_.size(), 0.0); }
    void drop_grad() { grad_.clear(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

// ---- elementwise helpers (plain value math, not graph ops) ----

inline Tensor clamp01(Tensor t) {
    for (auto& v : t.values()) v = std::min(1.0, std::max(0.0, v));
    return t;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline double norm_linf(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::fabs(v));
    return m;
}

inline double norm_l2(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

// Number of nonzero elements.
inline double norm_l0(const Tensor& t) {
    int64_t n = 0;
    for (double v : t.values())
        if (v != 0.0) ++n;
    return static_cast<double>(n);
}

// Number of spatial locations of an [H,W,C] tensor with any nonzero channel.
inline int changed_pixel_count(const Tensor& t) {
    if (t.rank() != 3) throw Error("changed_pixel_count: expected rank-3 tensor, got " + shape_str(t.shape()));
    const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
    int count = 0;
    for (int i = 0; i < h * w; ++i) {
        bool any = false;
        for (int k = 0; k < c; ++k) any = any || t[static_cast<int64_t>(i) * c + k] != 0.0;
        count += any ? 1 : 0;
    }
    return count;
}

} // namespace signstorm
