#pragma once

#include <cstring>
#include <functional>
#include <vector>

#include "tdae/rng.hpp"
#include "tdae/tensor.hpp"

namespace tdae::testing {

inline bool bitwise_equal(const nd::Tensor& a, const nd::Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

inline nd::Tensor random_tensor(const nd::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    nd::Tensor t(shape, 0.0);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Central differences of a scalar function of a tensor.
inline nd::Tensor central_difference(const std::function<double(const nd::Tensor&)>& f, const nd::Tensor& x,
                                     double step) {
    nd::Tensor g(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        nd::Tensor up = x, down = x;
        up[i] += step;
        down[i] -= step;
        g[i] = (f(up) - f(down)) / (2.0 * step);
    }
    return g;
}

/// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double relative_error(const nd::Tensor& a, const nd::Tensor& b, double floor = 1e-8) {
    double worst = 0.0, scale = floor;
    for (std::size_t i = 0; i < b.size(); ++i) scale = std::max(scale, std::abs(b[i]));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst / scale;
}

}  // namespace tdae::testing
