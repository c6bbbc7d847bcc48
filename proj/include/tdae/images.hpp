#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tdae/tensor.hpp"

namespace tdae::images {

using nd::Tensor;

/// Number of distinct procedural generators; image i uses generator i % kGeneratorCount.
inline constexpr std::size_t kGeneratorCount = 10;

/// Name of the generator used for index i ("linear-gradient", "checkerboard", ...).
std::string generator_name(std::size_t index);

/// Seeded procedural RGB image of shape [size, size, 3], values on the 1/255 grid in [0, 1].
Tensor procedural_image(std::size_t index, std::uint64_t seed, std::size_t size = 32);

/// Images 0..count-1 of the procedural set.
std::vector<Tensor> procedural_set(std::size_t count, std::uint64_t seed, std::size_t size = 32);

/// Seeded embedding with entries uniform in [-scale, scale].
Tensor random_embedding(std::size_t dim, std::uint64_t seed, double scale = 1.0);

}  // namespace tdae::images
