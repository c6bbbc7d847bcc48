#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "tdae/tensor.hpp"

namespace tdae::metrics {

using nd::Tensor;

/// PSNR of identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// Single-channel image, row-major.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

/// Channel `c` of an [H,W,C] image (or an [H,W] image when c == 0).
Plane channel(const Tensor& image, std::size_t c);
/// ITU-R BT.601 luma (0.299, 0.587, 0.114); single-channel inputs pass through.
Plane luma(const Tensor& image);

/// 10 log10(peak^2 / MSE); kPsnrIdentical when MSE == 0.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows, K1 = 0.01, K2 = 0.03, unit dynamic
/// range, averaged over channels. Images smaller than 11 pixels use the largest odd window that
/// fits, with sigma scaled proportionally.
double ssim(const Tensor& a, const Tensor& b);

struct VifpResult {
    std::optional<double> value;  // empty when the reference carries no signal variance
    std::size_t scales = 0;       // scales actually evaluated (4 unless the image is too small)
};

/// Pixel-domain multi-scale VIF on luma. The first argument is the reference; the measure is not
/// symmetric. Throws nd::ShapeError when the image cannot hold even the first 17x17 scale.
VifpResult vifp_detailed(const Tensor& reference, const Tensor& distorted);
std::optional<double> vifp(const Tensor& reference, const Tensor& distorted);

/// Phase congruency map of a luma plane on the 0..255 scale: log-Gabor bank with 4 scales and
/// 4 orientations, noise-compensated energy normalized by summed amplitude.
Plane phase_congruency(const Plane& image);
/// Scharr gradient magnitude with zero padding.
Plane gradient_magnitude(const Plane& image);

/// FSIM on luma. Requires min side >= 32. Empty when neither image has any phase congruency.
std::optional<double> fsim(const Tensor& a, const Tensor& b);

struct MetricReport {
    double psnr = kPsnrIdentical;
    double ssim = 1.0;
    std::optional<double> vifp;
    std::optional<double> fsim;
    double mse = 0.0;
};

/// All metrics of `distorted` against `reference`.
MetricReport evaluate(const Tensor& reference, const Tensor& distorted);

}  // namespace tdae::metrics
