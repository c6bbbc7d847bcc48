#include "tdae/images.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "tdae/rng.hpp"

namespace tdae::images {

namespace {

using Rgb = std::array<double, 3>;
// u, v in [0, 1)
using Painter = std::function<Rgb(double u, double v)>;

Rgb random_colour(Rng& rng) { return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}; }

Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

Painter make_painter(std::size_t kind, Rng& rng) {
    const Rgb a = random_colour(rng), b = random_colour(rng);
    switch (kind) {
        case 0: {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double cx = std::cos(angle), cy = std::sin(angle);
            return [=](double u, double v) {
                const double t = std::clamp(0.5 + 0.7 * ((u - 0.5) * cx + (v - 0.5) * cy), 0.0, 1.0);
                return mix(a, b, t);
            };
        }
        case 1: {
            const double px = rng.uniform(0.2, 0.8), py = rng.uniform(0.2, 0.8);
            return [=](double u, double v) {
                return mix(a, b, std::min(1.0, std::hypot(u - px, v - py) * 1.6));
            };
        }
        case 2: {
            const double fx = rng.uniform(2.0, 6.0), fy = rng.uniform(2.0, 6.0), ph = rng.uniform(0.0, 6.28);
            return [=](double u, double v) {
                const double t = 0.5 + 0.25 * std::sin(2 * std::numbers::pi * fx * u + ph) +
                                 0.25 * std::cos(2 * std::numbers::pi * fy * v);
                return mix(a, b, t);
            };
        }
        case 3: {
            const double cells = std::floor(rng.uniform(3.0, 7.0));
            return [=](double u, double v) {
                const auto iu = static_cast<long>(u * cells), iv = static_cast<long>(v * cells);
                return (iu + iv) % 2 == 0 ? a : b;
            };
        }
        case 4: {
            std::vector<std::array<double, 3>> disks(4);
            std::vector<Rgb> colours(4);
            for (std::size_t i = 0; i < disks.size(); ++i) {
                disks[i] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.08, 0.25)};
                colours[i] = random_colour(rng);
            }
            return [=](double u, double v) {
                Rgb out = mix(a, b, v);
                for (std::size_t i = 0; i < disks.size(); ++i)
                    if (std::hypot(u - disks[i][0], v - disks[i][1]) < disks[i][2]) out = colours[i];
                return out;
            };
        }
        case 5: {
            std::vector<std::array<double, 4>> rects(3);
            std::vector<Rgb> colours(3);
            for (std::size_t i = 0; i < rects.size(); ++i) {
                const double x0 = rng.uniform(0.0, 0.7), y0 = rng.uniform(0.0, 0.7);
                rects[i] = {x0, y0, x0 + rng.uniform(0.15, 0.4), y0 + rng.uniform(0.15, 0.4)};
                colours[i] = random_colour(rng);
            }
            return [=](double u, double v) {
                Rgb out = a;
                for (std::size_t i = 0; i < rects.size(); ++i)
                    if (u >= rects[i][0] && u < rects[i][2] && v >= rects[i][1] && v < rects[i][3]) out = colours[i];
                return out;
            };
        }
        case 6: {
            // bilinear-smoothed lattice noise
            constexpr std::size_t g = 6;
            std::vector<double> lattice((g + 1) * (g + 1));
            for (auto& x : lattice) x = rng.uniform();
            return [=](double u, double v) {
                const double x = u * g, y = v * g;
                const auto ix = static_cast<std::size_t>(x), iy = static_cast<std::size_t>(y);
                const double fx = smoothstep(x - ix), fy = smoothstep(y - iy);
                auto at = [&](std::size_t i, std::size_t j) { return lattice[j * (g + 1) + i]; };
                const double top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * fx;
                const double bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * fx;
                return mix(a, b, top + (bot - top) * fy);
            };
        }
        case 7: {
            const double freq = rng.uniform(3.0, 8.0), angle = rng.uniform(0.0, std::numbers::pi);
            const double cx = std::cos(angle), cy = std::sin(angle);
            return [=](double u, double v) {
                const double t = std::fmod(std::abs(freq * (u * cx + v * cy)), 1.0);
                return t < 0.5 ? a : b;
            };
        }
        case 8: {
            const Rgb c = random_colour(rng);
            const double px = rng.uniform(0.3, 0.7), py = rng.uniform(0.2, 0.4), size = rng.uniform(0.3, 0.5);
            return [=](double u, double v) {
                const double dy = v - py;
                if (dy >= 0.0 && dy < size && std::abs(u - px) < dy * 0.6) return c;
                return mix(a, b, u);
            };
        }
        default: {
            const double px = rng.uniform(0.3, 0.7), py = rng.uniform(0.3, 0.7), ring = rng.uniform(6.0, 12.0);
            return [=](double u, double v) {
                const double r = std::hypot(u - px, v - py);
                const double t = 0.5 + 0.5 * std::cos(2 * std::numbers::pi * ring * r);
                return mix(a, b, t * std::exp(-2.0 * r));
            };
        }
    }
}

}  // namespace

std::string generator_name(std::size_t index) {
    static const std::array<const char*, kGeneratorCount> names{
        "linear-gradient", "radial-gradient", "sinusoid", "checkerboard", "disks",
        "rectangles",      "value-noise",     "stripes",  "triangle",     "rings"};
    return names[index % kGeneratorCount];
}

Tensor procedural_image(std::size_t index, std::uint64_t seed, std::size_t size) {
    if (size == 0) throw std::invalid_argument("procedural_image: size must be positive");
    Rng rng(mix_seed(seed, 0x1A6E000 + index));
    const Painter paint = make_painter(index % kGeneratorCount, rng);
    Tensor img({size, size, 3}, 0.0);
    auto data = img.data();
    const double n = static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const Rgb px = paint((x + 0.5) / n, (y + 0.5) / n);
            for (std::size_t c = 0; c < 3; ++c)
                data[(y * size + x) * 3 + c] = std::round(std::clamp(px[c], 0.0, 1.0) * 255.0) / 255.0;
        }
    return img;
}

std::vector<Tensor> procedural_set(std::size_t count, std::uint64_t seed, std::size_t size) {
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(procedural_image(i, seed, size));
    return out;
}

Tensor random_embedding(std::size_t dim, std::uint64_t seed, double scale) {
    Rng rng(mix_seed(seed, 0xE3B));
    Tensor c({dim}, 0.0);
    for (auto& v : c.data()) v = rng.uniform(-scale, scale);
    return c;
}

}  // namespace tdae::images
