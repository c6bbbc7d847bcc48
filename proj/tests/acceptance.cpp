#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "tdae/config.hpp"
#include "tdae/harness.hpp"
#include "tdae/image_io.hpp"
#include "tdae/images.hpp"
#include "tdae/immunize.hpp"
#include "tdae/metrics.hpp"
#include "tdae/report.hpp"

using namespace tdae;
using namespace tdae::immunize;
using harness::ExperimentPlan;
using harness::Method;
using nd::Tensor;
using tdae::testing::bitwise_equal;
using tdae::testing::random_tensor;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void verdict(int n, const std::string& name, bool pass, const std::string& detail) {
    std::cout << "criterion " << n << " (" << name << "): " << (pass ? "PASS" : "FAIL") << " | " << detail
              << std::endl;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream ss;
    ss.precision(digits);
    ss << v;
    return ss.str();
}

// J(d) = -L(d) + (lambda/h)|L(d + h s) - L(d)| with s held at its value at the base point.
double fdm_objective(const ModelSession& s, const Tensor& x0, const Tensor& d, const Tensor& dir, const Tensor& c,
                     const Objective& obj, double lambda, double h) {
    const double l = image_loss(s, x0, d, c, obj);
    const double shifted = image_loss(s, x0, d + h * dir, c, obj);
    return -l + (lambda / h) * std::abs(shifted - l);
}

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "tdae_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + TDAE_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json strip_timing(nlohmann::json j) {
    if (j.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key().find("seconds") != std::string::npos || it.key() == "time_ratio") continue;
            out[it.key()] = strip_timing(it.value());
        }
        return out;
    }
    if (j.is_array()) {
        for (auto& v : j) v = strip_timing(v);
    }
    return j;
}

ExperimentPlan study_plan(std::size_t seeds, std::size_t images) {
    ExperimentPlan p;
    p.seed = 0;
    p.seeds = seeds;
    p.images = images;
    return p;
}

}  // namespace

TEST_CASE("criterion 1: flatness gradient agrees with finite differences", "[acceptance]") {
    const auto t0 = Clock::now();
    const double lambda = 0.03, h = 0.1;
    double worst = 0.0;

    // scalar: L(d) = (d - a)^2
    {
        for (double a : {0.7, -0.4, 0.25})
            for (double d : {0.0, 0.3, -0.2, 0.05}) {
                const double sdir = d - a > 0 ? 1.0 : -1.0;
                const double g1 = 2 * (d - a), g2 = 2 * (d + h * sdir - a);
                const double l1 = (d - a) * (d - a), l2 = (d + h * sdir - a) * (d + h * sdir - a);
                const double z = l2 - l1;
                const double analytic = -g1 + (lambda / h) * (z > 0 ? 1 : -1) * (g2 - g1);
                auto j = [&](double t) {
                    return -(t - a) * (t - a) + (lambda / h) * std::abs((t + h * sdir - a) * (t + h * sdir - a) - (t - a) * (t - a));
                };
                const double fd = (j(d + 1e-6) - j(d - 1e-6)) / 2e-6;
                worst = std::max(worst, std::abs(analytic - fd) / std::abs(fd));
            }
    }
    const double scalar_worst = worst;

    // library gradient on 32x32 toy models: coordinate subset plus random directions
    double model_worst = 0.0;
    std::size_t probes = 0;
    for (const char* family : {models::kCondConv, models::kCondMlp}) {
        models::ModelFamilySpec spec;
        spec.family = family;
        spec.seed = 21;
        const auto m = models::build_model(spec);
        const Tensor x0 = images::procedural_image(6, 21, 32), c = images::random_embedding(16, 21);
        const Objective obj = make_objective(*m, x0, c, AttackTarget::FullModel);
        ModelSession s(*m);
        const Tensor d = random_tensor(x0.shape(), 21, -8.0 / 255, 8.0 / 255);
        const FdmGradient fg = fdm_gradient(s, x0, d, c, obj, lambda, h);
        REQUIRE(std::abs(fg.z) > 1e-9);
        const Tensor g1 = image_gradient(s, x0, d, c, obj).grad;
        const Tensor dir = (1.0 / g1.l2_norm()) * g1;
        const double step = 1e-4;
        Rng rng(mix_seed(21, 1));
        Tensor fd_sub(nd::Shape{64}, 0.0), an_sub(nd::Shape{64}, 0.0);
        for (std::size_t k = 0; k < 64; ++k) {
            const std::size_t i = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(x0.size()))) % x0.size();
            Tensor up = d, down = d;
            up[i] += step;
            down[i] -= step;
            fd_sub[k] = (fdm_objective(s, x0, up, dir, c, obj, lambda, h) - fdm_objective(s, x0, down, dir, c, obj, lambda, h)) / (2 * step);
            an_sub[k] = fg.g[i];
            ++probes;
        }
        model_worst = std::max(model_worst, tdae::testing::relative_error(an_sub, fd_sub));
        for (std::uint64_t k = 0; k < 4; ++k) {
            const Tensor v = random_tensor(x0.shape(), 300 + k, -1, 1);
            double analytic = 0;
            for (std::size_t i = 0; i < v.size(); ++i) analytic += fg.g[i] * v[i];
            const double fd = (fdm_objective(s, x0, d + step * v, dir, c, obj, lambda, h) -
                               fdm_objective(s, x0, d - step * v, dir, c, obj, lambda, h)) / (2 * step);
            model_worst = std::max(model_worst, std::abs(analytic - fd) / std::abs(fd));
            ++probes;
        }
    }
    const double elapsed = seconds_since(t0);
    const bool pass = scalar_worst < 1e-3 && model_worst < 1e-3 && elapsed < 10.0;
    verdict(1, "gradient oracle", pass,
            "scalar rel err " + fmt(scalar_worst) + ", 32x32 rel err " + fmt(model_worst) + " over " +
                std::to_string(probes) + " probes, " + fmt(elapsed) + " s (limit 10 s)");
    CHECK(pass);
}

TEST_CASE("criterion 2: lambda 0 reproduces pgd bitwise", "[acceptance]") {
    const auto t0 = Clock::now();
    models::ModelFamilySpec spec;
    spec.seed = 22;
    const auto m = models::build_model(spec);
    const Tensor x0 = images::procedural_image(2, 22, 32), c = images::random_embedding(16, 22);
    const Objective obj = make_objective(*m, x0, c, AttackTarget::FullModel);
    TdaeConfig cfg;
    cfg.iterations = 50;
    cfg.lambda = 0.0;
    cfg.seed = 22;
    ModelSession s(*m);
    Tensor a = initial_perturbation(x0.shape(), cfg), b = a;
    std::size_t mismatches = 0;
    for (std::size_t n = 0; n < cfg.iterations; ++n) {
        a = fdm_step(s, x0, a, c, obj, cfg).delta_v;
        b = pgd_step(s, x0, b, c, obj, cfg.alpha, cfg.eps_v);
        if (!bitwise_equal(a, b)) ++mismatches;
    }
    cfg.dpd_period = cfg.iterations + 1;
    ModelSession s1(*m), s2(*m);
    const auto fdm = tdae_immunize(s1, x0, c, cfg);
    const auto pgd = pgd_immunize(s2, x0, c, cfg);
    for (std::size_t n = 0; n < cfg.iterations; ++n)
        if (fdm.records[n].loss != pgd.records[n].loss) ++mismatches;
    if (!bitwise_equal(fdm.delta_v, pgd.delta_v)) ++mismatches;
    const double elapsed = seconds_since(t0);
    const bool pass = mismatches == 0 && elapsed < 5.0;
    verdict(2, "reduction to pgd", pass,
            std::to_string(mismatches) + " mismatching iterations over N = 50, " + fmt(elapsed) + " s (limit 5 s)");
    CHECK(pass);
}

TEST_CASE("criterion 3: budget invariants", "[acceptance]") {
    std::size_t violations = 0, checked = 0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed)
        for (const char* family : {models::kCondConv, models::kCondMlp})
            for (Method method : {Method::Pgd, Method::Fdm, Method::Dpd, Method::Tdae, Method::Tpa, Method::Pge, Method::PgeFdm})
                for (double eps_steps : {0.0, 2.0, 8.0}) {
                    models::ModelFamilySpec spec;
                    spec.family = family;
                    spec.seed = seed;
                    const auto m = models::build_model(spec);
                    const Tensor x0 = images::procedural_image(seed, seed, 32), c = images::random_embedding(16, seed);
                    TdaeConfig cfg;
                    cfg.iterations = 12;
                    cfg.dpd_period = 3;
                    cfg.eps_v = eps_steps / 255;
                    cfg.eps_p = 0.05 * static_cast<double>(seed);
                    cfg.eta = 0.02;
                    cfg.seed = seed;
                    ModelSession s(*m);
                    const auto r = harness::run_method(method, s, x0, c, cfg);
                    for (const auto& rec : r.records) {
                        ++checked;
                        if (rec.delta_v_linf > cfg.eps_v || rec.delta_p_linf > cfg.eps_p) ++violations;
                    }
                    if (r.delta_v.max_abs() > cfg.eps_v || r.delta_p.max_abs() > cfg.eps_p) ++violations;
                    for (std::size_t i = 0; i < x0.size(); ++i)
                        if (std::abs(r.x_adv[i] - x0[i]) > cfg.eps_v + 1e-15) ++violations;
                }
    const bool pass = violations == 0;
    verdict(3, "budget invariants", pass,
            std::to_string(violations) + " violations over " + std::to_string(checked) +
                " iteration boundaries (every step is also checked in-library)");
    CHECK(pass);
}

TEST_CASE("criterion 4: efficiency against the sampled reference", "[acceptance]") {
    const auto t0 = Clock::now();
    ExperimentPlan plan = study_plan(5, 1);
    plan.efficiency_trials = 5;
    const auto r = harness::run_efficiency_comparison(plan, 5);
    const bool pass = r.fdm_calls_per_iter == 2.0 && r.tpa_calls_per_iter == 11.0 && r.call_ratio_exact &&
                      r.time_ratio >= 3.0 && r.loss_relative_gap <= 0.10;
    verdict(4, "efficiency", pass,
            "calls/iter " + fmt(r.fdm_calls_per_iter) + " vs " + fmt(r.tpa_calls_per_iter) + " (K = 5), time ratio " +
                fmt(r.time_ratio) + " (need >= 3), final loss gap " + fmt(100 * r.loss_relative_gap) +
                "% (need <= 10%), " + fmt(seconds_since(t0)) + " s");
    CHECK(pass);
}

TEST_CASE("criterion 5: flatness probe", "[acceptance]") {
    const auto t0 = Clock::now();
    const ExperimentPlan plan = study_plan(25, 2);
    const auto r = harness::run_flatness_comparison(plan);
    const double elapsed = seconds_since(t0);
    const bool pass = plan.seeds >= 20 && r.mean_max_fdm < r.mean_max_pgd && r.significant && elapsed < 120.0;
    verdict(5, "flatness", pass,
            "mean max grad norm fdm " + fmt(r.mean_max_fdm) + " vs pgd " + fmt(r.mean_max_pgd) + ", fdm flatter in " +
                std::to_string(r.test.wins) + "/" + std::to_string(r.test.wins + r.test.losses) + ", p = " +
                fmt(r.test.p_value) + ", " + std::to_string(r.rows.size()) + " trials over " +
                std::to_string(plan.seeds) + " seeds, " + fmt(elapsed) + " s (limit 120 s)");
    CHECK(pass);
}

TEST_CASE("criterion 6: transfer ordering", "[acceptance]") {
    const auto t0 = Clock::now();
    const ExperimentPlan plan = study_plan(25, 2);
    const auto r = harness::run_cross_eval(plan);
    const double elapsed = seconds_since(t0);
    const auto* main = r.find(Method::Tdae, Method::Pgd, "cross");
    REQUIRE(main != nullptr);
    std::string orderings;
    for (const auto& c : r.comparisons) {
        orderings += " " + harness::to_string(c.method) + ">=" + harness::to_string(c.baseline) + " " +
                     std::to_string(c.test.wins) + "/" + std::to_string(c.test.wins + c.test.losses) + " p=" +
                     fmt(c.test.p_value) + (c.significant ? "*" : "") + ";";
    }
    const bool pass = main->mean_method >= main->mean_baseline && main->significant && elapsed < 300.0;
    verdict(6, "transfer ordering", pass,
            "cross mean tdae " + fmt(main->mean_method) + " vs pgd " + fmt(main->mean_baseline) + ";" + orderings +
                " " + std::to_string(harness::trial_count(plan)) + " trials over " + std::to_string(plan.seeds) +
                " seeds, " + fmt(elapsed) + " s (limit 300 s)");
    CHECK(pass);
}

TEST_CASE("criterion 7: lambda/h sweep", "[acceptance]") {
    const auto t0 = Clock::now();
    ExperimentPlan plan = study_plan(5, 2);
    const fs::path cfg = workdir() / "sweep.ini";
    {
        std::ofstream out(cfg);
        out << config::serialize_config(plan);
    }
    const auto r = harness::run_ablation_lambda_h(plan);
    const std::string csv = report::to_csv(r);
    const bool cli_ok = run_cli("ablate --format csv --config \"" + cfg.string() + "\" --out \"" + (workdir() / "s1").string() + "\"") == 0 &&
                        run_cli("ablate --format csv --config \"" + cfg.string() + "\" --out \"" + (workdir() / "s2").string() + "\"") == 0;
    const std::string first = slurp(workdir() / "s1" / "ablation.csv");
    const bool regenerable = cli_ok && !first.empty() && first == slurp(workdir() / "s2" / "ablation.csv") && first == csv;
    const bool pass = r.ratio_zero_matches_pgd && regenerable;
    verdict(7, "lambda/h sweep", pass,
            std::string("ratio 0 ") + (r.ratio_zero_matches_pgd ? "equals" : "differs from") + " pgd bitwise; csv " +
                (regenerable ? "byte-identical across library and two CLI runs" : "NOT reproducible") + "; " +
                "ratio " + fmt(r.interior_ratio) + " not dominated in " + std::to_string(r.interior_not_dominated) + "/" +
                std::to_string(r.trials) + " trials, " + fmt(seconds_since(t0)) + " s");
    CHECK(pass);
}

TEST_CASE("criterion 8: metric suite", "[acceptance]") {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Tensor a16 = random_tensor({16, 16, 3}, seed, 0, 1), b16 = random_tensor({16, 16, 3}, seed + 100, 0, 1);
        const Tensor a = images::procedural_image(seed, seed, 32), b = random_tensor({32, 32, 3}, seed + 200, 0, 1);
        expect(std::isinf(metrics::psnr(a16, a16)), "psnr sentinel");
        expect(metrics::ssim(a16, a16) == 1.0 || std::abs(metrics::ssim(a16, a16) - 1.0) < 1e-12, "ssim identity");
        expect(std::abs(*metrics::vifp(a, a) - 1.0) < 1e-6, "vifp identity");
        expect(std::abs(*metrics::fsim(a, a) - 1.0) < 1e-12, "fsim identity");
        expect(std::abs(metrics::ssim(a16, b16) - metrics::ssim(b16, a16)) <= 1e-9, "ssim symmetry");
        expect(std::abs(*metrics::fsim(a, b) - *metrics::fsim(b, a)) <= 1e-9, "fsim symmetry");

        double sse = 0;
        for (std::size_t i = 0; i < a16.size(); ++i) sse += (a16[i] - b16[i]) * (a16[i] - b16[i]);
        expect(std::abs(metrics::psnr(a16, b16) - 10 * std::log10(static_cast<double>(a16.size()) / sse)) < 1e-10,
               "psnr oracle");

        // direct-formula SSIM: 11x11 Gaussian windows, one channel at a time
        double total = 0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            double acc = 0, wsum = 0;
            std::vector<double> w(121);
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) wsum += w[i * 11 + j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
            std::size_t n = 0;
            for (std::size_t y = 0; y + 11 <= 16; ++y)
                for (std::size_t x = 0; x + 11 <= 16; ++x, ++n) {
                    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                    for (std::size_t k = 0; k < 121; ++k) {
                        const std::size_t idx = ((y + k / 11) * 16 + x + k % 11) * 3 + ch;
                        const double wk = w[k] / wsum;
                        mx += wk * a16[idx];
                        my += wk * b16[idx];
                        sxx += wk * a16[idx] * a16[idx];
                        syy += wk * b16[idx] * b16[idx];
                        sxy += wk * a16[idx] * b16[idx];
                    }
                    const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                    acc += (2 * mx * my + 1e-4) * (2 * cxy + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                }
            total += acc / static_cast<double>(n);
        }
        expect(std::abs(metrics::ssim(a16, b16) - total / 3) < 1e-6, "ssim oracle");
    }

    ExperimentPlan plan = study_plan(3, 2);
    plan.methods = {Method::Pgd, Method::Fdm, Method::Dpd, Method::Tdae, Method::Tpa, Method::Pge, Method::PgeFdm};
    plan.config.iterations = 30;
    const auto imp = harness::run_imperceptibility(plan);
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& row : imp.rows) lowest = std::min(lowest, row.metrics.psnr);
    const double analytic = -20 * std::log10(8.0 / 255);
    expect(imp.bound_violations == 0 && lowest >= analytic - 1e-9, "analytic psnr bound");
    expect(lowest >= 30.1, "psnr >= 30.1 dB");
    const bool pass = failures.empty();
    std::string detail = "identity, symmetry and oracle checks on 10 seeds; lowest PSNR " + fmt(lowest, 6) + " dB over " +
                         std::to_string(imp.rows.size()) + " immunized images (analytic bound 20 log10(255/8) = " +
                         fmt(analytic, 6) + " dB, stated threshold 30.1 dB)";
    for (const auto& f : failures) detail += "; failed: " + f;
    verdict(8, "metric suite", pass, detail);
    CHECK(pass);
}

TEST_CASE("criterion 9: cli determinism", "[acceptance]") {
    const fs::path cfg = workdir() / "det.ini";
    {
        std::ofstream out(cfg);
        out << "schema_version = 1\n[tdae]\niterations = 10\ndpd_period = 5\n[plan]\nseed = 9\nseeds = 2\nimages = 2\n"
               "methods = pgd, fdm, dpd, tdae\nratios = 0, 0.3, 0.5\nprobe_draws = 8\nefficiency_trials = 2\n";
    }
    const io::Image8 input = io::to_image8(images::procedural_image(3, 9, 32));
    io::write_image(workdir() / "in.png", input);

    const std::vector<std::pair<std::string, std::string>> runs{
        {"evaluate --mode intra", "intra.json"},           {"evaluate --mode cross", "cross.json"},
        {"evaluate --mode imperceptibility", "imperceptibility.json"},
        {"evaluate --mode flatness", "flatness.json"},     {"ablate", "ablation.json"},
        {"bench --samples 3", "efficiency.json"},          {"evaluate --mode cross --format csv --no-timing", "cross.csv"},
        {"ablate --format csv", "ablation.csv"}};
    std::size_t identical = 0;
    std::vector<std::string> differing;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        std::string outputs[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path dir = workdir() / ("r" + std::to_string(k) + "_" + std::to_string(rep));
            const int code = run_cli(runs[k].first + " --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"");
            const std::string text = slurp(dir / runs[k].second);
            outputs[rep] = code != 0 || text.empty() ? std::string("error ") + std::to_string(code)
                           : runs[k].second.ends_with(".json") ? strip_timing(nlohmann::json::parse(text)).dump()
                                                                : text;
        }
        if (outputs[0] == outputs[1] && !outputs[0].starts_with("error")) ++identical;
        else differing.push_back(runs[k].first);
    }
    std::string images[2], sidecars[2];
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path out = workdir() / ("imm" + std::to_string(rep) + ".png");
        run_cli("immunize --config \"" + cfg.string() + "\" \"" + (workdir() / "in.png").string() + "\" \"" + out.string() + "\"");
        images[rep] = slurp(out);
        const std::string side = slurp(out.string() + ".json");
        sidecars[rep] = side.empty() ? "" : strip_timing(nlohmann::json::parse(side)).dump();
    }
    const bool immunize_same = !images[0].empty() && images[0] == images[1] && !sidecars[0].empty() && sidecars[0] == sidecars[1];
    const bool pass = differing.empty() && immunize_same;
    std::string detail = std::to_string(identical) + "/" + std::to_string(runs.size()) +
                         " report commands byte-identical after removing wall-time fields; immunize image and sidecar " +
                         (immunize_same ? "identical" : "DIFFER");
    for (const auto& d : differing) detail += "; differs: " + d;
    verdict(9, "determinism", pass, detail);
    CHECK(pass);
}
