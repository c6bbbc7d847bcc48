#include "tdae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tdae::nd {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
        n *= d;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw ShapeError("shape " + to_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                         " values");
    }
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::l2_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

double sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

Tensor sign(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.data()) v = sign(v);
    return out;
}

Tensor clamp_abs(const Tensor& t, double eps) {
    Tensor out = t;
    for (auto& v : out.data()) v = std::clamp(v, -eps, eps);
    return out;
}

}  // namespace tdae::nd
