#include "tdae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft.hpp"

namespace tdae::metrics {

namespace {

using detail::Complex;

void require_image(const Tensor& t, const char* what) {
    if (t.rank() != 2 && t.rank() != 3) {
        throw nd::ShapeError(std::string(what) + ": expected [H,W] or [H,W,C] image, got " + nd::to_string(t.shape()));
    }
}

std::size_t channel_count(const Tensor& t) { return t.rank() == 3 ? t.shape()[2] : 1; }

std::vector<double> gaussian_1d(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double mid = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double x = static_cast<double>(i) - mid;
        k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (auto& v : k) v /= total;
    return k;
}

// Separable correlation keeping only fully-covered positions.
Plane filter_valid(const Plane& in, const std::vector<double>& k) {
    const std::size_t n = k.size();
    const std::size_t ow = in.width - n + 1, oh = in.height - n + 1;
    Plane tmp{in.height, ow, std::vector<double>(in.height * ow, 0.0)};
    for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * in.data[y * in.width + x + i];
            tmp.data[y * ow + x] = acc;
        }
    Plane out{oh, ow, std::vector<double>(oh * ow, 0.0)};
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp.data[(y + i) * ow + x];
            out.data[y * ow + x] = acc;
        }
    return out;
}

Plane product(const Plane& a, const Plane& b) {
    Plane out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Plane scaled(Plane p, double s) {
    for (auto& v : p.data) v *= s;
    return p;
}

Plane downsample2(const Plane& in) {
    Plane out{(in.height + 1) / 2, (in.width + 1) / 2, {}};
    out.data.reserve(out.height * out.width);
    for (std::size_t y = 0; y < in.height; y += 2)
        for (std::size_t x = 0; x < in.width; x += 2) out.data.push_back(in.at(y, x));
    return out;
}

double ssim_plane(const Plane& a, const Plane& b, const std::vector<double>& window) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const Plane mu_a = filter_valid(a, window);
    const Plane mu_b = filter_valid(b, window);
    const Plane aa = filter_valid(product(a, a), window);
    const Plane bb = filter_valid(product(b, b), window);
    const Plane ab = filter_valid(product(a, b), window);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = aa.data[i] - ma * ma;
        const double vb = bb.data[i] - mb * mb;
        const double cov = ab.data[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.data.size());
}

// Matlab-style conv2(..., 'same') with zero padding; the kernel is flipped.
Plane conv_same(const Plane& in, const std::vector<double>& kernel, std::size_t kh, std::size_t kw) {
    Plane out{in.height, in.width, std::vector<double>(in.data.size(), 0.0)};
    const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(kh / 2), ox = static_cast<std::ptrdiff_t>(kw / 2);
    for (std::size_t y = 0; y < in.height; ++y)
        for (std::size_t x = 0; x < in.width; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < kh; ++i)
                for (std::size_t j = 0; j < kw; ++j) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy - static_cast<std::ptrdiff_t>(i);
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + ox - static_cast<std::ptrdiff_t>(j);
                    if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(in.height) ||
                        sx >= static_cast<std::ptrdiff_t>(in.width))
                        continue;
                    acc += kernel[i * kw + j] * in.data[static_cast<std::size_t>(sy) * in.width + static_cast<std::size_t>(sx)];
                }
            out.data[y * in.width + x] = acc;
        }
    return out;
}

// Frequency coordinate of FFT bin u after ifftshift of a centred range.
double shifted_frequency(std::size_t u, std::size_t n) {
    const double denom = static_cast<double>(n % 2 == 0 ? n : n - 1);
    const double k = u <= (n - 1) / 2 ? static_cast<double>(u) : static_cast<double>(u) - static_cast<double>(n);
    return n == 1 ? 0.0 : k / denom;
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Plane luma255(const Tensor& t) { return scaled(luma(t), 255.0); }

}  // namespace

Plane channel(const Tensor& image, std::size_t c) {
    require_image(image, "channel");
    const std::size_t h = image.shape()[0], w = image.shape()[1], cn = channel_count(image);
    if (c >= cn) throw nd::ShapeError("channel index out of range");
    Plane p{h, w, std::vector<double>(h * w)};
    for (std::size_t i = 0; i < h * w; ++i) p.data[i] = image[i * cn + c];
    return p;
}

Plane luma(const Tensor& image) {
    require_image(image, "luma");
    const std::size_t cn = channel_count(image);
    if (cn == 1) return channel(image, 0);
    if (cn != 3) throw nd::ShapeError("luma: expected 1 or 3 channels, got " + nd::to_string(image.shape()));
    const std::size_t h = image.shape()[0], w = image.shape()[1];
    Plane p{h, w, std::vector<double>(h * w)};
    for (std::size_t i = 0; i < h * w; ++i) {
        p.data[i] = 0.299 * image[3 * i] + 0.587 * image[3 * i + 1] + 0.114 * image[3 * i + 2];
    }
    return p;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    nd::require_same_shape(a, b, "psnr");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    nd::require_same_shape(a, b, "ssim");
    require_image(a, "ssim");
    const std::size_t min_side = std::min(a.shape()[0], a.shape()[1]);
    std::size_t size = 11;
    double sigma = 1.5;
    if (min_side < 11) {
        size = min_side % 2 == 1 ? min_side : min_side - 1;
        sigma = 1.5 * static_cast<double>(size) / 11.0;
    }
    const auto window = gaussian_1d(size, sigma);
    const std::size_t cn = channel_count(a);
    double total = 0.0;
    for (std::size_t c = 0; c < cn; ++c) total += ssim_plane(channel(a, c), channel(b, c), window);
    return total / static_cast<double>(cn);
}

VifpResult vifp_detailed(const Tensor& reference, const Tensor& distorted) {
    nd::require_same_shape(reference, distorted, "vifp");
    constexpr double sigma_nsq = 2.0;
    constexpr double floor = 1e-10;
    Plane ref = luma255(reference);
    Plane dist = luma255(distorted);
    if (std::min(ref.height, ref.width) < 17) {
        throw nd::ShapeError("vifp: image must be at least 17x17, got " + nd::to_string(reference.shape()));
    }

    VifpResult result;
    double num = 0.0, den = 0.0;
    for (std::size_t scale = 1; scale <= 4; ++scale) {
        const std::size_t n = (std::size_t{1} << (4 - scale + 1)) + 1;
        const auto win = gaussian_1d(n, static_cast<double>(n) / 5.0);
        if (scale > 1) {
            if (std::min(ref.height, ref.width) < n) break;
            Plane r = downsample2(filter_valid(ref, win));
            if (std::min(r.height, r.width) < n) break;
            ref = std::move(r);
            dist = downsample2(filter_valid(dist, win));
        }
        const Plane mu1 = filter_valid(ref, win);
        const Plane mu2 = filter_valid(dist, win);
        const Plane s11 = filter_valid(product(ref, ref), win);
        const Plane s22 = filter_valid(product(dist, dist), win);
        const Plane s12 = filter_valid(product(ref, dist), win);
        for (std::size_t i = 0; i < mu1.data.size(); ++i) {
            double sigma1_sq = std::max(0.0, s11.data[i] - mu1.data[i] * mu1.data[i]);
            const double sigma2_sq = std::max(0.0, s22.data[i] - mu2.data[i] * mu2.data[i]);
            const double sigma12 = s12.data[i] - mu1.data[i] * mu2.data[i];

            double g = sigma12 / (sigma1_sq + floor);
            double sv_sq = sigma2_sq - g * sigma12;
            if (sigma1_sq < floor) {
                g = 0.0;
                sv_sq = sigma2_sq;
                sigma1_sq = 0.0;
            }
            if (sigma2_sq < floor) {
                g = 0.0;
                sv_sq = 0.0;
            }
            if (g < 0.0) {
                sv_sq = sigma2_sq;
                g = 0.0;
            }
            sv_sq = std::max(sv_sq, floor);
            num += std::log10(1.0 + g * g * sigma1_sq / (sv_sq + sigma_nsq));
            den += std::log10(1.0 + sigma1_sq / sigma_nsq);
        }
        result.scales = scale;
    }
    if (den > 0.0) result.value = num / den;
    return result;
}

std::optional<double> vifp(const Tensor& reference, const Tensor& distorted) {
    return vifp_detailed(reference, distorted).value;
}

Plane gradient_magnitude(const Plane& image) {
    static const std::vector<double> dx{3 / 16.0, 0, -3 / 16.0, 10 / 16.0, 0, -10 / 16.0, 3 / 16.0, 0, -3 / 16.0};
    static const std::vector<double> dy{3 / 16.0, 10 / 16.0, 3 / 16.0, 0, 0, 0, -3 / 16.0, -10 / 16.0, -3 / 16.0};
    const Plane ix = conv_same(image, dx, 3, 3);
    const Plane iy = conv_same(image, dy, 3, 3);
    Plane out = ix;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::hypot(ix.data[i], iy.data[i]);
    return out;
}

Plane phase_congruency(const Plane& image) {
    constexpr std::size_t nscale = 4, norient = 4;
    constexpr double min_wavelength = 6.0, mult = 2.0, sigma_onf = 0.55, d_theta_on_sigma = 1.2;
    constexpr double k_noise = 2.0, epsilon = 1e-4;
    const double theta_sigma = std::numbers::pi / norient / d_theta_on_sigma;

    const std::size_t rows = image.height, cols = image.width, n = rows * cols;
    std::vector<Complex> spectrum(image.data.begin(), image.data.end());
    detail::fft2(spectrum, rows, cols, false);

    std::vector<double> radius(n), sin_t(n), cos_t(n), lowpass(n);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = shifted_frequency(c, cols), y = shifted_frequency(r, rows);
            const std::size_t i = r * cols + c;
            radius[i] = std::sqrt(x * x + y * y);
            lowpass[i] = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 2 * 15));
            const double theta = std::atan2(-y, x);
            sin_t[i] = std::sin(theta);
            cos_t[i] = std::cos(theta);
        }
    radius[0] = 1.0;

    std::vector<std::vector<double>> log_gabor(nscale, std::vector<double>(n));
    const double log_sigma = std::log(sigma_onf);
    for (std::size_t s = 0; s < nscale; ++s) {
        const double fo = 1.0 / (min_wavelength * std::pow(mult, static_cast<double>(s)));
        for (std::size_t i = 0; i < n; ++i) {
            const double l = std::log(radius[i] / fo);
            log_gabor[s][i] = std::exp(-(l * l) / (2.0 * log_sigma * log_sigma)) * lowpass[i];
        }
        log_gabor[s][0] = 0.0;
    }

    std::vector<double> energy_all(n, 0.0), an_all(n, 0.0);
    for (std::size_t o = 0; o < norient; ++o) {
        const double angl = static_cast<double>(o) * std::numbers::pi / norient;
        std::vector<double> spread(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ds = sin_t[i] * std::cos(angl) - cos_t[i] * std::sin(angl);
            const double dc = cos_t[i] * std::cos(angl) + sin_t[i] * std::sin(angl);
            const double dtheta = std::abs(std::atan2(ds, dc));
            spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
        }

        std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
        std::vector<std::vector<Complex>> eo(nscale);
        std::vector<std::vector<double>> ifft_filters(nscale);
        double em_n = 0.0;
        for (std::size_t s = 0; s < nscale; ++s) {
            std::vector<Complex> filt(n);
            for (std::size_t i = 0; i < n; ++i) filt[i] = log_gabor[s][i] * spread[i];
            if (s == 0) {
                for (const auto& f : filt) em_n += f.real() * f.real();
            }
            std::vector<Complex> response(n);
            for (std::size_t i = 0; i < n; ++i) response[i] = spectrum[i] * filt[i];
            detail::fft2(response, rows, cols, true);
            detail::fft2(filt, rows, cols, true);
            ifft_filters[s].resize(n);
            const double root_n = std::sqrt(static_cast<double>(n));
            for (std::size_t i = 0; i < n; ++i) {
                ifft_filters[s][i] = filt[i].real() * root_n;
                sum_an[i] += std::abs(response[i]);
                sum_e[i] += response[i].real();
                sum_o[i] += response[i].imag();
            }
            eo[s] = std::move(response);
        }

        std::vector<double> energy(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double x_energy = std::hypot(sum_e[i], sum_o[i]) + epsilon;
            const double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
            for (std::size_t s = 0; s < nscale; ++s) {
                const double e = eo[s][i].real(), od = eo[s][i].imag();
                energy[i] += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
            }
        }

        std::vector<double> e2(n);
        for (std::size_t i = 0; i < n; ++i) e2[i] = std::norm(eo[0][i]);
        const double mean_e2n = -median(std::move(e2)) / std::log(0.5);
        const double noise_power = mean_e2n / em_n;

        double sum_an2 = 0.0, sum_aiaj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < nscale; ++s) sum_an2 += ifft_filters[s][i] * ifft_filters[s][i];
            for (std::size_t si = 0; si + 1 < nscale; ++si)
                for (std::size_t sj = si + 1; sj < nscale; ++sj) sum_aiaj += ifft_filters[si][i] * ifft_filters[sj][i];
        }
        const double noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        const double tau = std::sqrt(noise_energy2 / 2.0);
        const double noise_energy = tau * std::sqrt(std::numbers::pi / 2.0);
        const double noise_sigma = std::sqrt((2.0 - std::numbers::pi / 2.0) * tau * tau);
        const double threshold = (noise_energy + k_noise * noise_sigma) / 1.7;

        for (std::size_t i = 0; i < n; ++i) {
            energy_all[i] += std::max(energy[i] - threshold, 0.0);
            an_all[i] += sum_an[i];
        }
    }

    Plane pc{rows, cols, std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) pc.data[i] = an_all[i] > 0.0 ? energy_all[i] / an_all[i] : 0.0;
    return pc;
}

std::optional<double> fsim(const Tensor& a, const Tensor& b) {
    nd::require_same_shape(a, b, "fsim");
    require_image(a, "fsim");
    Plane y1 = luma255(a);
    Plane y2 = luma255(b);
    const std::size_t min_side = std::min(y1.height, y1.width);
    if (min_side < 32) throw nd::ShapeError("fsim: image must be at least 32x32, got " + nd::to_string(a.shape()));

    const std::size_t f = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(min_side / 256.0)));
    if (f > 1) {
        const std::vector<double> box(f * f, 1.0 / static_cast<double>(f * f));
        auto reduce = [&](const Plane& p) {
            const Plane blurred = conv_same(p, box, f, f);
            Plane out{(p.height + f - 1) / f, (p.width + f - 1) / f, {}};
            for (std::size_t y = 0; y < p.height; y += f)
                for (std::size_t x = 0; x < p.width; x += f) out.data.push_back(blurred.at(y, x));
            return out;
        };
        y1 = reduce(y1);
        y2 = reduce(y2);
    }

    const Plane pc1 = phase_congruency(y1), pc2 = phase_congruency(y2);
    const Plane g1 = gradient_magnitude(y1), g2 = gradient_magnitude(y2);
    constexpr double t1 = 0.85, t2 = 160.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pc1.data.size(); ++i) {
        const double p1 = pc1.data[i], p2 = pc2.data[i];
        const double q1 = g1.data[i], q2 = g2.data[i];
        const double pc_sim = (2.0 * p1 * p2 + t1) / (p1 * p1 + p2 * p2 + t1);
        const double g_sim = (2.0 * q1 * q2 + t2) / (q1 * q1 + q2 * q2 + t2);
        const double pcm = std::max(p1, p2);
        num += g_sim * pc_sim * pcm;
        den += pcm;
    }
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

MetricReport evaluate(const Tensor& reference, const Tensor& distorted) {
    nd::require_same_shape(reference, distorted, "evaluate");
    MetricReport r;
    r.psnr = psnr(reference, distorted);
    r.ssim = ssim(reference, distorted);
    r.vifp = vifp(reference, distorted);
    r.fsim = fsim(reference, distorted);
    double sse = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) sse += (reference[i] - distorted[i]) * (reference[i] - distorted[i]);
    r.mse = sse / static_cast<double>(reference.size());
    return r;
}

}  // namespace tdae::metrics
