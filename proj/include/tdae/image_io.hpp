#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "tdae/tensor.hpp"

namespace tdae::io {

using nd::Tensor;

/// Unreadable, undecodable or unwritable image file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit RGB raster.
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3

    friend bool operator==(const Image8&, const Image8&) = default;
};

/// Reads an 8-bit PNG or binary PPM (P6, maxval 255), chosen by file signature. Grey, palette and
/// alpha PNGs are converted to RGB.
Image8 read_image(const std::filesystem::path& path);
/// Writes PNG when the extension is .png, binary PPM otherwise.
void write_image(const std::filesystem::path& path, const Image8& image);

std::vector<std::uint8_t> encode_png(const Image8& image);
Image8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image8& image);
Image8 decode_ppm(const std::vector<std::uint8_t>& bytes);

/// [H, W, 3] tensor with values k / 255.
Tensor to_tensor(const Image8& image);
/// Rounds each value to the nearest 1/255 step, clamped to [0, 255].
Image8 to_image8(const Tensor& image);

/// Quantized immunized image: delta snapped to whole 8-bit steps within +-budget_steps, added to
/// the quantized clean image and clipped to [0, 255].
Image8 snap_for_export(const Tensor& x0, const Tensor& delta_v, std::int64_t budget_steps);

/// Largest |a - b| over all channels, in 8-bit steps.
std::int64_t max_step_difference(const Image8& a, const Image8& b);

}  // namespace tdae::io
