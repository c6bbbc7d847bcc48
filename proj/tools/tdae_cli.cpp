#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tdae/config.hpp"
#include "tdae/harness.hpp"
#include "tdae/image_io.hpp"
#include "tdae/images.hpp"
#include "tdae/immunize.hpp"
#include "tdae/report.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tdae;

enum Exit : int { kOk = 0, kIoError = 2, kConfigError = 3, kInternalError = 4, kAssertionFailed = 5 };

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool assert_mode = false;
    std::string format = "json";
    std::string out_dir = ".";
    bool no_timing = false;
};

harness::ExperimentPlan load_plan(const CommonOptions& opt) {
    harness::ExperimentPlan plan;
    if (!opt.config_path.empty()) plan = config::load_config(opt.config_path);
    if (opt.seed) plan.seed = *opt.seed;
    plan.validate();
    return plan;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw io::IoError("cannot create directory " + path.parent_path().string());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::IoError("cannot write " + path.string());
    out << text;
    if (!out) throw io::IoError("write failed for " + path.string());
}

template <typename Report>
void emit(const CommonOptions& opt, const std::string& kind, const Report& r, const harness::ExperimentPlan& plan) {
    const report::Options ropt{!opt.no_timing};
    const std::string text = opt.format == "csv" ? report::to_csv(r, ropt) : report::to_json(r, plan, ropt);
    const fs::path path = fs::path(opt.out_dir) / (kind + "." + opt.format);
    write_text(path, text);
    std::cout << "wrote " << path.string() << "\n";
}

// Prints one line per check; returns the exit code for --assert.
int check_all(const std::vector<std::pair<std::string, bool>>& checks) {
    bool ok = true;
    for (const auto& [name, pass] : checks) {
        std::cout << "assert " << name << ": " << (pass ? "PASS" : "FAIL") << "\n";
        ok = ok && pass;
    }
    return ok ? kOk : kAssertionFailed;
}

int cmd_immunize(const CommonOptions& opt, const std::string& method_name, const std::string& input,
                 const std::string& output, std::string sidecar) {
    const auto plan = load_plan(opt);
    const harness::Method method = harness::method_from_string(method_name);
    if (plan.source.channels != 3) throw config::ConfigError("source.channels must be 3 for RGB images");

    const io::Image8 clean = io::read_image(input);
    const nd::Tensor x0 = io::to_tensor(clean);
    const auto model = models::build_model(plan.source);
    const nd::Tensor c = images::random_embedding(plan.source.embedding_dim, plan.seed, plan.embedding_scale);
    immunize::TdaeConfig cfg = plan.config;
    cfg.seed = plan.seed;

    models::ModelSession session(*model);
    const auto result = harness::run_method(method, session, x0, c, cfg);

    const long long budget = std::llround(plan.config.eps_v * 255.0);
    const io::Image8 snapped = io::snap_for_export(x0, result.delta_v, budget);
    const long long moved = io::max_step_difference(clean, snapped);
    if (moved > budget) {
        throw immunize::InvariantError("exported image moves " + std::to_string(moved) + " steps, budget " +
                                       std::to_string(budget));
    }
    io::write_image(output, snapped);
    if (io::read_image(output) != snapped) throw immunize::InvariantError("written image does not decode to itself");

    if (sidecar.empty()) sidecar = output + ".json";
    report::SidecarInfo info{harness::to_string(method), harness::model_label(plan.source), model->architecture(),
                             budget, moved};
    write_text(sidecar, report::sidecar_json(result, plan, info, report::Options{!opt.no_timing}));
    std::cout << "wrote " << output << " (max change " << moved << "/255, budget " << budget << "/255)\n";
    return kOk;
}

int cmd_evaluate(const CommonOptions& opt, const std::string& mode) {
    const auto plan = load_plan(opt);
    const auto has = [&](harness::Method m) {
        return std::find(plan.methods.begin(), plan.methods.end(), m) != plan.methods.end();
    };
    std::vector<std::pair<std::string, bool>> checks;
    if (mode == "intra" || mode == "cross") {
        const auto r = mode == "intra" ? harness::run_intra_eval(plan) : harness::run_cross_eval(plan);
        emit(opt, mode, r, plan);
        for (const auto& s : r.summaries) {
            std::cout << s.scope << " " << harness::to_string(s.method) << " mean_deviation " << s.mean_deviation
                      << "\n";
        }
        for (const auto& c : r.comparisons) {
            std::cout << c.scope << " " << harness::to_string(c.method) << ">=" << harness::to_string(c.baseline)
                      << " wins " << c.test.wins << "/" << c.test.wins + c.test.losses << " p " << c.test.p_value
                      << "\n";
        }
        if (has(harness::Method::Tdae) && has(harness::Method::Pgd)) {
            const auto* c = r.find(harness::Method::Tdae, harness::Method::Pgd, mode);
            if (mode == "intra") {
                checks.emplace_back("intra tdae mean >= pgd mean", c->mean_method >= c->mean_baseline);
            } else {
                checks.emplace_back("cross tdae > pgd sign test", c->significant && c->mean_method >= c->mean_baseline);
            }
        }
    } else if (mode == "imperceptibility") {
        const auto r = harness::run_imperceptibility(plan);
        emit(opt, mode, r, plan);
        std::cout << "psnr bound " << r.psnr_bound << " dB, budget violations " << r.budget_violations
                  << ", bound violations " << r.bound_violations << ", max psnr gap " << r.max_psnr_gap << "\n";
        checks.emplace_back("budget holds", r.budget_violations == 0);
        checks.emplace_back("psnr bound holds", r.bound_violations == 0);
        checks.emplace_back("psnr gap < 2 dB", r.max_psnr_gap < 2.0);
    } else if (mode == "flatness") {
        const auto r = harness::run_flatness_comparison(plan);
        emit(opt, mode, r, plan);
        std::cout << "mean max grad norm pgd " << r.mean_max_pgd << " fdm " << r.mean_max_fdm << " p "
                  << r.test.p_value << "\n";
        checks.emplace_back("fdm flatter than pgd", r.significant);
    } else {
        throw config::ConfigError("unknown evaluate mode '" + mode + "'");
    }
    return opt.assert_mode ? check_all(checks) : kOk;
}

int cmd_ablate(const CommonOptions& opt) {
    const auto plan = load_plan(opt);
    const auto r = harness::run_ablation_lambda_h(plan);
    emit(opt, "ablation", r, plan);
    for (const auto& p : r.points) {
        std::cout << "lambda/h " << p.ratio << " intra " << p.mean_intra << " cross " << p.mean_cross << "\n";
    }
    return opt.assert_mode ? check_all({{"ratio 0 equals pgd", r.ratio_zero_matches_pgd},
                                        {"series length", r.points.size() == plan.ratios.size()}})
                           : kOk;
}

int cmd_bench(const CommonOptions& opt, std::size_t samples) {
    const auto plan = load_plan(opt);
    const auto r = harness::run_efficiency_comparison(plan, samples);
    emit(opt, "efficiency", r, plan);
    std::cout << "calls/iter fdm " << r.fdm_calls_per_iter << " tpa " << r.tpa_calls_per_iter << " ratio "
              << r.call_ratio << " (expected " << r.expected_call_ratio << ")\n";
    if (!opt.no_timing) std::cout << "time ratio " << r.time_ratio << "\n";
    std::cout << "final loss fdm " << r.mean_fdm_loss << " tpa " << r.mean_tpa_loss << "\n";
    return opt.assert_mode ? check_all({{"call ratio exact", r.call_ratio_exact},
                                        {"time ratio >= 3", r.time_ratio >= 3.0},
                                        {"final losses within 10%", r.loss_relative_gap <= 0.10}})
                           : kOk;
}

void add_common(CLI::App* cmd, CommonOptions& opt, bool reports) {
    cmd->add_option("--config", opt.config_path, "Config file (defaults apply when omitted)");
    cmd->add_option("--seed", opt.seed, "Override the config seed");
    cmd->add_flag("--no-timing", opt.no_timing, "Omit wall-time fields from outputs");
    if (!reports) return;
    cmd->add_flag("--assert", opt.assert_mode, "Exit 5 when an acceptance check fails");
    cmd->add_option("--format", opt.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--out", opt.out_dir, "Report directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image immunization against surrogate editing models"};
    app.require_subcommand(1);
    CommonOptions opt;

    std::string method = "tdae", input, output, sidecar, mode = "intra";
    std::size_t samples = 5;

    auto* imm = app.add_subcommand("immunize", "Immunize one PNG/PPM image");
    add_common(imm, opt, false);
    imm->add_option("--method", method, "pgd, fdm, dpd, tdae, tpa, pge or pge-fdm");
    imm->add_option("--sidecar", sidecar, "Trajectory JSON path (default OUTPUT.json)");
    imm->add_option("input", input, "Input image")->required();
    imm->add_option("output", output, "Output image (.png writes PNG, anything else binary PPM)")->required();

    auto* eval = app.add_subcommand("evaluate", "Intra/cross transfer, imperceptibility or flatness study");
    add_common(eval, opt, true);
    eval->add_option("--mode", mode)->check(CLI::IsMember({"intra", "cross", "imperceptibility", "flatness"}));

    auto* ablate = app.add_subcommand("ablate", "lambda/h sweep");
    add_common(ablate, opt, true);

    auto* bench = app.add_subcommand("bench", "Flatness gradient vs sampled-neighbourhood reference");
    add_common(bench, opt, true);
    bench->add_option("--samples", samples, "Neighbourhood samples K")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*imm) return cmd_immunize(opt, method, input, output, sidecar);
        if (*eval) return cmd_evaluate(opt, mode);
        if (*ablate) return cmd_ablate(opt);
        if (*bench) return cmd_bench(opt, samples);
    } catch (const io::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const immunize::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const models::UnknownFamilyError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
    return kInternalError;
}
