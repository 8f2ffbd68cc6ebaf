#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace refsr {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Wrong shapes / mismatched lattices between caller-supplied objects.
struct contract_error : error {
    using error::error;
};
// Parameter outside its mathematical domain (e.g. temperature <= 0).
struct domain_error : error {
    using error::error;
};
// Missing weights, unresolved dependency, malformed config.
struct config_error : error {
    using error::error;
};
struct io_error : error {
    using error::error;
};

// Image-plane point or displacement, (x = column, y = row).
struct Vec2 {
    double x = 0.0, y = 0.0;
};

// Dense row-major double tensor. All numeric work in this library runs in
// double precision; float32 appears only at the checkpoint boundary.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor scalar(double v) {
        Tensor t(std::vector<int>{1});
        t.data_[0] = v;
        return t;
    }
    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

    bool defined() const { return !shape_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
    double at(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
    double& at(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    double at(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    double& at(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double at(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    double item() const {
        if (data_.size() != 1) throw contract_error("Tensor::item on non-scalar");
        return data_[0];
    }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) throw contract_error("reshape: element count mismatch");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    double sum_all() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }
    double abs_max() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }
    double min_all() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::min(m, v);
        return m;
    }
    double max_all() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::max(m, v);
        return m;
    }
    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool equals(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw contract_error("negative dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string r = "[";
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) r += ",";
            r += std::to_string(s[i]);
        }
        return r + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw contract_error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace refsr
