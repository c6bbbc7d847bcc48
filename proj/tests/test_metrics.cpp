#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "tdae/images.hpp"
#include "tdae/metrics.hpp"

using namespace tdae;
using namespace tdae::metrics;
using nd::Tensor;
using tdae::testing::random_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor noisy(const Tensor& x, double amplitude, std::uint64_t seed) {
    const Tensor n = random_tensor(x.shape(), seed, -1.0, 1.0);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i] + amplitude * n[i], 0.0, 1.0);
    return out;
}

using Grid = std::vector<std::vector<double>>;

Grid zeros(std::size_t h, std::size_t w) { return Grid(h, std::vector<double>(w, 0.0)); }

Grid luma_grid(const Tensor& t, double scale) {
    const std::size_t h = t.shape()[0], w = t.shape()[1];
    const std::size_t cn = t.rank() == 3 ? t.shape()[2] : 1;
    Grid g = zeros(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t base = (y * w + x) * cn;
            g[y][x] = cn == 1 ? t[base] : 0.299 * t[base] + 0.587 * t[base + 1] + 0.114 * t[base + 2];
            g[y][x] *= scale;
        }
    return g;
}

Grid gaussian_2d(std::size_t n, double sigma) {
    Grid k = zeros(n, n);
    const double mid = (static_cast<double>(n) - 1) / 2;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double di = static_cast<double>(i) - mid, dj = static_cast<double>(j) - mid;
            k[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            total += k[i][j];
        }
    for (auto& row : k)
        for (auto& v : row) v /= total;
    return k;
}

// filter2(k, a, 'valid')
Grid valid(const Grid& a, const Grid& k) {
    const std::size_t n = k.size(), oh = a.size() - n + 1, ow = a[0].size() - n + 1;
    Grid out = zeros(oh, ow);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) out[y][x] += k[i][j] * a[y + i][x + j];
    return out;
}

double ssim_reference(const Tensor& a, const Tensor& b) {
    const double c1 = 1e-4, c2 = 9e-4;
    const Grid w = gaussian_2d(11, 1.5);
    const std::size_t h = a.shape()[0], wd = a.shape()[1], cn = a.shape()[2];
    double total = 0.0;
    for (std::size_t c = 0; c < cn; ++c) {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t y = 0; y + 11 <= h; ++y)
            for (std::size_t x = 0; x + 11 <= wd; ++x) {
                double ma = 0, mb = 0;
                for (std::size_t i = 0; i < 11; ++i)
                    for (std::size_t j = 0; j < 11; ++j) {
                        ma += w[i][j] * a[((y + i) * wd + x + j) * cn + c];
                        mb += w[i][j] * b[((y + i) * wd + x + j) * cn + c];
                    }
                double va = 0, vb = 0, cov = 0;
                for (std::size_t i = 0; i < 11; ++i)
                    for (std::size_t j = 0; j < 11; ++j) {
                        const double da = a[((y + i) * wd + x + j) * cn + c] - ma;
                        const double db = b[((y + i) * wd + x + j) * cn + c] - mb;
                        va += w[i][j] * da * da;
                        vb += w[i][j] * db * db;
                        cov += w[i][j] * da * db;
                    }
                acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        total += acc / static_cast<double>(count);
    }
    return total / static_cast<double>(cn);
}

struct VifpReference {
    double value;
    std::size_t scales;
};

VifpReference vifp_reference(const Tensor& reference, const Tensor& distorted) {
    const double sigma_nsq = 2.0, tiny = 1e-10;
    Grid ref = luma_grid(reference, 255.0), dist = luma_grid(distorted, 255.0);
    double num = 0, den = 0;
    std::size_t scales = 0;
    for (std::size_t scale = 1; scale <= 4; ++scale) {
        const std::size_t n = std::size_t(std::pow(2.0, 5.0 - static_cast<double>(scale))) + 1;
        const Grid win = gaussian_2d(n, static_cast<double>(n) / 5);
        if (scale > 1) {
            if (std::min(ref.size(), ref[0].size()) < n) break;
            auto down = [&](const Grid& g) {
                const Grid f = valid(g, win);
                Grid out;
                for (std::size_t y = 0; y < f.size(); y += 2) {
                    out.emplace_back();
                    for (std::size_t x = 0; x < f[0].size(); x += 2) out.back().push_back(f[y][x]);
                }
                return out;
            };
            Grid r = down(ref);
            if (std::min(r.size(), r[0].size()) < n) break;
            ref = r;
            dist = down(dist);
        }
        const Grid mu1 = valid(ref, win), mu2 = valid(dist, win);
        for (std::size_t y = 0; y < mu1.size(); ++y)
            for (std::size_t x = 0; x < mu1[0].size(); ++x) {
                double s11 = 0, s22 = 0, s12 = 0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double r = ref[y + i][x + j], d = dist[y + i][x + j];
                        s11 += win[i][j] * r * r;
                        s22 += win[i][j] * d * d;
                        s12 += win[i][j] * r * d;
                    }
                double sigma1 = s11 - mu1[y][x] * mu1[y][x];
                double sigma2 = s22 - mu2[y][x] * mu2[y][x];
                const double sigma12 = s12 - mu1[y][x] * mu2[y][x];
                sigma1 = std::max(sigma1, 0.0);
                sigma2 = std::max(sigma2, 0.0);
                double g = sigma12 / (sigma1 + tiny);
                double sv = sigma2 - g * sigma12;
                if (sigma1 < tiny) {
                    g = 0;
                    sv = sigma2;
                    sigma1 = 0;
                }
                if (sigma2 < tiny) {
                    g = 0;
                    sv = 0;
                }
                if (g < 0) {
                    sv = sigma2;
                    g = 0;
                }
                if (sv <= tiny) sv = tiny;
                num += std::log10(1 + g * g * sigma1 / (sv + sigma_nsq));
                den += std::log10(1 + sigma1 / sigma_nsq);
            }
        scales = scale;
    }
    return {num / den, scales};
}

// Naive separable DFT.
using Cplx = std::complex<double>;
using CGrid = std::vector<std::vector<Cplx>>;

CGrid dft2(CGrid a, bool inverse) {
    const std::size_t rows = a.size(), cols = a[0].size();
    const double sgn = inverse ? 1.0 : -1.0;
    auto transform = [&](std::vector<Cplx>& v) {
        const std::size_t n = v.size();
        std::vector<Cplx> out(n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t m = 0; m < n; ++m)
                out[k] += v[m] * std::polar(1.0, sgn * 2 * kPi * static_cast<double>((k * m) % n) / static_cast<double>(n));
        v = out;
    };
    for (auto& row : a) transform(row);
    for (std::size_t c = 0; c < cols; ++c) {
        std::vector<Cplx> col(rows);
        for (std::size_t r = 0; r < rows; ++r) col[r] = a[r][c];
        transform(col);
        for (std::size_t r = 0; r < rows; ++r) a[r][c] = col[r];
    }
    if (inverse)
        for (auto& row : a)
            for (auto& v : row) v /= static_cast<double>(rows * cols);
    return a;
}

Grid ifftshift(const Grid& g) {
    const std::size_t rows = g.size(), cols = g[0].size();
    Grid out = zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r][c] = g[(r + rows / 2) % rows][(c + cols / 2) % cols];
    return out;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

// Even-sized images only.
Grid phase_congruency_reference(const Grid& im) {
    const std::size_t rows = im.size(), cols = im[0].size(), nscale = 4, norient = 4;
    const double theta_sigma = kPi / 4 / 1.2;
    Grid xs = zeros(rows, cols), ys = zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            xs[r][c] = (static_cast<double>(c) - static_cast<double>(cols) / 2) / static_cast<double>(cols);
            ys[r][c] = (static_cast<double>(r) - static_cast<double>(rows) / 2) / static_cast<double>(rows);
        }
    Grid radius = zeros(rows, cols), theta = zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            radius[r][c] = std::hypot(xs[r][c], ys[r][c]);
            theta[r][c] = std::atan2(-ys[r][c], xs[r][c]);
        }
    radius = ifftshift(radius);
    theta = ifftshift(theta);
    Grid lp = zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) lp[r][c] = 1 / (1 + std::pow(radius[r][c] / 0.45, 30));
    radius[0][0] = 1;

    std::vector<Grid> log_gabor;
    for (std::size_t s = 0; s < nscale; ++s) {
        const double fo = 1 / (6 * std::pow(2.0, static_cast<double>(s)));
        Grid lg = zeros(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double l = std::log(radius[r][c] / fo);
                lg[r][c] = std::exp(-l * l / (2 * std::log(0.55) * std::log(0.55))) * lp[r][c];
            }
        lg[0][0] = 0;
        log_gabor.push_back(lg);
    }

    CGrid spectrum(rows, std::vector<Cplx>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) spectrum[r][c] = im[r][c];
    spectrum = dft2(spectrum, false);

    Grid energy_all = zeros(rows, cols), an_all = zeros(rows, cols);
    for (std::size_t o = 0; o < norient; ++o) {
        const double angl = static_cast<double>(o) * kPi / norient;
        Grid spread = zeros(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double st = std::sin(theta[r][c]), ct = std::cos(theta[r][c]);
                const double dtheta = std::abs(std::atan2(st * std::cos(angl) - ct * std::sin(angl),
                                                          ct * std::cos(angl) + st * std::sin(angl)));
                spread[r][c] = std::exp(-dtheta * dtheta / (2 * theta_sigma * theta_sigma));
            }
        Grid sum_e = zeros(rows, cols), sum_o = zeros(rows, cols), sum_an = zeros(rows, cols);
        std::vector<CGrid> eo;
        std::vector<Grid> ifft_filt;
        double em_n = 0;
        for (std::size_t s = 0; s < nscale; ++s) {
            CGrid filt(rows, std::vector<Cplx>(cols)), prod(rows, std::vector<Cplx>(cols));
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    const double f = log_gabor[s][r][c] * spread[r][c];
                    filt[r][c] = f;
                    prod[r][c] = spectrum[r][c] * f;
                    if (s == 0) em_n += f * f;
                }
            const CGrid resp = dft2(prod, true);
            const CGrid spatial = dft2(filt, true);
            Grid fr = zeros(rows, cols);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    fr[r][c] = spatial[r][c].real() * std::sqrt(static_cast<double>(rows * cols));
                    sum_an[r][c] += std::abs(resp[r][c]);
                    sum_e[r][c] += resp[r][c].real();
                    sum_o[r][c] += resp[r][c].imag();
                }
            eo.push_back(resp);
            ifft_filt.push_back(fr);
        }
        Grid energy = zeros(rows, cols);
        std::vector<double> e2;
        double sum_an2 = 0, sum_aiaj = 0;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double xe = std::hypot(sum_e[r][c], sum_o[r][c]) + 1e-4;
                const double me = sum_e[r][c] / xe, mo = sum_o[r][c] / xe;
                for (std::size_t s = 0; s < nscale; ++s) {
                    const double e = eo[s][r][c].real(), od = eo[s][r][c].imag();
                    energy[r][c] += e * me + od * mo - std::abs(e * mo - od * me);
                    sum_an2 += ifft_filt[s][r][c] * ifft_filt[s][r][c];
                    for (std::size_t t = s + 1; t < nscale; ++t) sum_aiaj += ifft_filt[s][r][c] * ifft_filt[t][r][c];
                }
                e2.push_back(std::norm(eo[0][r][c]));
            }
        const double noise_power = -median_of(e2) / std::log(0.5) / em_n;
        const double tau = std::sqrt((2 * noise_power * sum_an2 + 4 * noise_power * sum_aiaj) / 2);
        const double t = (tau * std::sqrt(kPi / 2) + 2 * std::sqrt((2 - kPi / 2) * tau * tau)) / 1.7;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                energy_all[r][c] += std::max(energy[r][c] - t, 0.0);
                an_all[r][c] += sum_an[r][c];
            }
    }
    Grid pc = zeros(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) pc[r][c] = an_all[r][c] > 0 ? energy_all[r][c] / an_all[r][c] : 0;
    return pc;
}

Grid scharr_reference(const Grid& im) {
    const double dx[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
    const double dy[3][3] = {{3, 10, 3}, {0, 0, 0}, {-3, -10, -3}};
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(im.size()), cols = static_cast<std::ptrdiff_t>(im[0].size());
    Grid out = zeros(im.size(), im[0].size());
    for (std::ptrdiff_t y = 0; y < rows; ++y)
        for (std::ptrdiff_t x = 0; x < cols; ++x) {
            double gx = 0, gy = 0;
            for (std::ptrdiff_t i = 0; i < 3; ++i)
                for (std::ptrdiff_t j = 0; j < 3; ++j) {
                    const std::ptrdiff_t sy = y + 1 - i, sx = x + 1 - j;
                    if (sy < 0 || sx < 0 || sy >= rows || sx >= cols) continue;
                    gx += dx[i][j] / 16 * im[sy][sx];
                    gy += dy[i][j] / 16 * im[sy][sx];
                }
            out[y][x] = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

double fsim_reference(const Tensor& a, const Tensor& b) {
    const Grid y1 = luma_grid(a, 255), y2 = luma_grid(b, 255);
    const Grid pc1 = phase_congruency_reference(y1), pc2 = phase_congruency_reference(y2);
    const Grid g1 = scharr_reference(y1), g2 = scharr_reference(y2);
    double num = 0, den = 0;
    for (std::size_t r = 0; r < y1.size(); ++r)
        for (std::size_t c = 0; c < y1[0].size(); ++c) {
            const double s_pc = (2 * pc1[r][c] * pc2[r][c] + 0.85) / (pc1[r][c] * pc1[r][c] + pc2[r][c] * pc2[r][c] + 0.85);
            const double s_g = (2 * g1[r][c] * g2[r][c] + 160) / (g1[r][c] * g1[r][c] + g2[r][c] * g2[r][c] + 160);
            const double m = std::max(pc1[r][c], pc2[r][c]);
            num += s_pc * s_g * m;
            den += m;
        }
    return num / den;
}

Plane scaled_luma_plane(const Tensor& t) {
    Plane p = luma(t);
    for (auto& v : p.data) v *= 255;
    return p;
}

}  // namespace

TEST_CASE("psnr examples", "[metrics]") {
    const Tensor x = random_tensor({8, 8, 3}, 1, 0.0, 1.0);
    CHECK(psnr(x, x) == kPsnrIdentical);
    CHECK(std::isinf(psnr(x, x)));
    Tensor zero({4, 4, 3}, 0.0), tenth({4, 4, 3}, 0.1);
    CHECK(psnr(zero, tenth) == Catch::Approx(20.0).epsilon(1e-12));
    CHECK(psnr(zero, tenth, 255.0) == Catch::Approx(20.0 + 20 * std::log10(255.0)).epsilon(1e-12));
    // uniform +-eps error gives 20 log10(1/eps)
    Tensor signs({4, 4, 3}, 0.0);
    for (std::size_t i = 0; i < signs.size(); ++i) signs[i] = (i % 2 ? 8.0 : -8.0) / 255;
    CHECK(psnr(zero, signs) == Catch::Approx(-20 * std::log10(8.0 / 255)).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(zero, Tensor({4, 4, 1}, 0.0)), nd::ShapeError);
}

TEST_CASE("psnr matches an element loop", "[metrics]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Tensor a = random_tensor({16, 12, 3}, seed, 0, 1), b = random_tensor({16, 12, 3}, seed + 50, 0, 1);
        long double sse = 0;
        for (std::size_t i = 0; i < a.size(); ++i) sse += (long double)(a[i] - b[i]) * (a[i] - b[i]);
        const double expected = 10 * std::log10(1.0 / static_cast<double>(sse / a.size()));
        CHECK(std::abs(psnr(a, b) - expected) < 1e-10);
        CHECK(psnr(a, b) == psnr(b, a));
    }
}

TEST_CASE("ssim examples", "[metrics]") {
    const Tensor x = random_tensor({16, 16, 3}, 2, 0, 1);
    CHECK(ssim(x, x) == Catch::Approx(1.0).epsilon(1e-12));
    const double c1 = 1e-4;
    CHECK(ssim(Tensor({16, 16, 3}, 0.0), Tensor({16, 16, 3}, 1.0)) == Catch::Approx(c1 / (1 + c1)).epsilon(1e-9));
    CHECK(ssim(Tensor({8, 8, 1}, 0.3), Tensor({8, 8, 1}, 0.3)) == Catch::Approx(1.0));
    CHECK_THROWS_AS(ssim(Tensor({16}, 0.0), Tensor({16}, 0.0)), nd::ShapeError);
}

TEST_CASE("ssim matches direct windowed statistics", "[metrics]") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Tensor a = random_tensor({16, 16, 3}, seed, 0, 1);
        const Tensor b = noisy(a, 0.2, seed + 7);
        CHECK(std::abs(ssim(a, b) - ssim_reference(a, b)) < 1e-6);
        CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
        const Tensor c = images::procedural_image(seed, seed, 32);
        CHECK(std::abs(ssim(c, noisy(c, 0.05, seed)) - ssim_reference(c, noisy(c, 0.05, seed))) < 1e-6);
    }
}

TEST_CASE("vifp examples", "[metrics]") {
    const Tensor x = images::procedural_image(6, 1, 32);
    REQUIRE(vifp(x, x).has_value());
    CHECK(*vifp(x, x) == Catch::Approx(1.0).margin(1e-6));
    const auto flat = vifp(x, Tensor(x.shape(), 0.5));
    REQUIRE(flat.has_value());
    CHECK(*flat == Catch::Approx(0.0).margin(1e-12));
    CHECK_FALSE(vifp(Tensor({32, 32, 3}, 0.4), Tensor({32, 32, 3}, 0.6)).has_value());
    CHECK(vifp_detailed(x, x).scales == 2);
    CHECK(vifp_detailed(images::procedural_image(6, 1, 64), images::procedural_image(6, 1, 64)).scales == 4);
    CHECK_THROWS_AS(vifp(Tensor({16, 16, 3}, 0.1), Tensor({16, 16, 3}, 0.1)), nd::ShapeError);
}

TEST_CASE("vifp matches a direct multi-scale computation", "[metrics]") {
    for (std::size_t size : {32u, 48u}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const Tensor a = images::procedural_image(seed + 3, seed, size);
            const Tensor b = noisy(a, 0.08, seed);
            const auto got = vifp_detailed(a, b);
            const auto expected = vifp_reference(a, b);
            REQUIRE(got.value.has_value());
            CHECK(got.scales == expected.scales);
            CHECK(std::abs(*got.value - expected.value) < 1e-5);
        }
    }
}

TEST_CASE("fsim examples", "[metrics]") {
    const Tensor x = images::procedural_image(6, 2, 32);
    REQUIRE(fsim(x, x).has_value());
    CHECK(*fsim(x, x) == Catch::Approx(1.0).epsilon(1e-12));
    const Tensor y = noisy(x, 0.1, 3);
    CHECK(std::abs(*fsim(x, y) - *fsim(y, x)) < 1e-9);
    CHECK_FALSE(fsim(Tensor({32, 32, 3}, 0.2), Tensor({32, 32, 3}, 0.2)).has_value());
    CHECK_THROWS_AS(fsim(Tensor({31, 40, 3}, 0.2), Tensor({31, 40, 3}, 0.2)), nd::ShapeError);
}

TEST_CASE("fsim matches an independent direct-DFT computation", "[metrics]") {
    for (std::uint64_t seed : {1u, 2u}) {
        const Tensor a = images::procedural_image(seed == 1 ? 6 : 3, seed, 64);
        const Tensor b = noisy(a, 0.06, seed);
        const double expected = fsim_reference(a, b);
        INFO("fsim " << *fsim(a, b) << " reference " << expected);
        CHECK(std::abs(*fsim(a, b) - expected) < 1e-3);

        const Grid ref_pc = phase_congruency_reference(luma_grid(a, 255));
        const Plane pc = phase_congruency(scaled_luma_plane(a));
        double worst = 0;
        for (std::size_t r = 0; r < 64; ++r)
            for (std::size_t c = 0; c < 64; ++c) worst = std::max(worst, std::abs(pc.at(r, c) - ref_pc[r][c]));
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("metric ranges and monotonicity in noise", "[metrics][property]") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const Tensor x = images::procedural_image(seed, seed, 32);
        MetricReport prev = evaluate(x, x);
        CHECK(std::isinf(prev.psnr));
        CHECK(prev.mse == 0.0);
        for (double amp : {0.02, 0.08, 0.25}) {
            const Tensor n = random_tensor(x.shape(), seed + 90, -1, 1);
            Tensor y = x;
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += amp * n[i];
            const MetricReport r = evaluate(x, y);
            CHECK(r.psnr < prev.psnr);
            CHECK(r.ssim < prev.ssim);
            CHECK(r.ssim >= -1.0);
            CHECK(r.ssim <= 1.0);
            REQUIRE(r.vifp.has_value());
            REQUIRE(r.fsim.has_value());
            CHECK(*r.vifp < *prev.vifp);
            CHECK(*r.fsim < *prev.fsim);
            CHECK(*r.fsim > 0.0);
            CHECK(*r.fsim <= 1.0);
            CHECK(*r.vifp >= 0.0);
            CHECK(r.mse == Catch::Approx(std::pow(10.0, -r.psnr / 10)).epsilon(1e-12));
            prev = r;
        }
    }
}

TEST_CASE("luma and channel extraction", "[metrics]") {
    Tensor x({1, 2, 3}, 0.0);
    x[0] = 1.0;
    x[4] = 1.0;
    const Plane l = luma(x);
    CHECK(l.at(0, 0) == Catch::Approx(0.299));
    CHECK(l.at(0, 1) == Catch::Approx(0.587));
    CHECK(channel(x, 1).at(0, 1) == 1.0);
    const Tensor gray({2, 2, 1}, 0.25);
    CHECK(luma(gray).at(1, 1) == 0.25);
}
