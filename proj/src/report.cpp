#include "tdae/report.hpp"

#include <charconv>
#include <cmath>
#include <json.hpp>
#include <optional>

#include "tdae/config.hpp"

namespace tdae::report {

namespace {

using nlohmann::ordered_json;
using harness::to_string;

ordered_json number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

ordered_json number(const std::optional<double>& v) { return v ? number(*v) : ordered_json(nullptr); }

std::string opt_csv(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

ordered_json header(const std::string& kind, const harness::ExperimentPlan& plan) {
    ordered_json j;
    j["schema"] = "tdae-report";
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = kind;
    j["seed"] = plan.seed;
    j["config"] = config::serialize_config(plan);
    return j;
}

ordered_json metrics_json(const metrics::MetricReport& m) {
    ordered_json j;
    j["psnr"] = number(m.psnr);
    j["ssim"] = m.ssim;
    j["vifp"] = number(m.vifp);
    j["fsim"] = number(m.fsim);
    j["mse"] = m.mse;
    return j;
}

std::string metrics_csv(const metrics::MetricReport& m) {
    return csv_number(m.psnr) + "," + csv_number(m.ssim) + "," + opt_csv(m.vifp) + "," + opt_csv(m.fsim) + "," +
           csv_number(m.mse);
}

ordered_json summaries_json(const std::vector<harness::Summary>& summaries) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : summaries) {
        arr.push_back({{"method", to_string(s.method)},
                       {"scope", s.scope},
                       {"count", s.count},
                       {"mean_deviation", s.mean_deviation},
                       {"median_deviation", s.median_deviation},
                       {"mean_psnr", s.mean_psnr},
                       {"mean_ssim", s.mean_ssim},
                       {"mean_vifp", s.mean_vifp},
                       {"mean_fsim", s.mean_fsim}});
    }
    return arr;
}

ordered_json sign_test_json(const harness::SignTest& t) {
    return {{"wins", t.wins}, {"losses", t.losses}, {"ties", t.ties}, {"p_value", t.p_value}};
}

ordered_json flatness_json(const harness::FlatnessStats& s) {
    return {{"center_norm", s.center_norm}, {"max_norm", s.max_norm}, {"mean_norm", s.mean_norm}};
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string csv_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string to_json(const harness::TransferReport& r, const harness::ExperimentPlan& plan, const Options& opt) {
    ordered_json j = header(r.kind, plan);
    ordered_json cells = ordered_json::array();
    for (const auto& c : r.cells) {
        ordered_json cell{{"method", to_string(c.method)},
                          {"trial", c.trial},
                          {"seed", c.seed},
                          {"image", c.image},
                          {"evaluator", c.evaluator},
                          {"scope", c.cross ? "cross" : "intra"},
                          {"deviation", c.deviation},
                          {"metrics", metrics_json(c.metrics)},
                          {"delta_linf", c.delta_linf},
                          {"gradient_calls", c.gradient_calls}};
        if (opt.include_timing) cell["wall_seconds"] = c.wall_seconds;
        cells.push_back(std::move(cell));
    }
    j["cells"] = std::move(cells);
    j["summaries"] = summaries_json(r.summaries);
    ordered_json comps = ordered_json::array();
    for (const auto& c : r.comparisons) {
        comps.push_back({{"method", to_string(c.method)},
                         {"baseline", to_string(c.baseline)},
                         {"scope", c.scope},
                         {"mean_method", c.mean_method},
                         {"mean_baseline", c.mean_baseline},
                         {"sign_test", sign_test_json(c.test)},
                         {"significant", c.significant}});
    }
    j["comparisons"] = std::move(comps);
    return dump(j);
}

std::string to_csv(const harness::TransferReport& r, const Options& opt) {
    std::string out = "kind,method,trial,seed,image,evaluator,scope,deviation,psnr,ssim,vifp,fsim,mse,delta_linf,"
                      "gradient_calls";
    out += opt.include_timing ? ",wall_seconds\n" : "\n";
    for (const auto& c : r.cells) {
        out += r.kind + "," + to_string(c.method) + "," + std::to_string(c.trial) + "," + std::to_string(c.seed) + "," +
               std::to_string(c.image) + "," + c.evaluator + "," + (c.cross ? "cross" : "intra") + "," +
               csv_number(c.deviation) + "," + metrics_csv(c.metrics) + "," + csv_number(c.delta_linf) + "," +
               std::to_string(c.gradient_calls);
        if (opt.include_timing) out += "," + csv_number(c.wall_seconds);
        out += "\n";
    }
    return out;
}

std::string to_json(const harness::ImperceptibilityReport& r, const harness::ExperimentPlan& plan,
                    const Options&) {
    ordered_json j = header("imperceptibility", plan);
    j["eps_v"] = r.eps_v;
    j["psnr_bound"] = number(r.psnr_bound);
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"method", to_string(row.method)},
                        {"trial", row.trial},
                        {"seed", row.seed},
                        {"image", row.image},
                        {"metrics", metrics_json(row.metrics)},
                        {"delta_linf", row.delta_linf},
                        {"within_budget", row.within_budget},
                        {"psnr_bound_holds", row.psnr_bound_holds}});
    }
    j["rows"] = std::move(rows);
    j["summaries"] = summaries_json(r.summaries);
    j["budget_violations"] = r.budget_violations;
    j["bound_violations"] = r.bound_violations;
    j["max_psnr_gap"] = r.max_psnr_gap;
    return dump(j);
}

std::string to_csv(const harness::ImperceptibilityReport& r, const Options&) {
    std::string out = "method,trial,seed,image,psnr,ssim,vifp,fsim,mse,delta_linf,within_budget,psnr_bound_holds\n";
    for (const auto& row : r.rows) {
        out += to_string(row.method) + "," + std::to_string(row.trial) + "," + std::to_string(row.seed) + "," +
               std::to_string(row.image) + "," + metrics_csv(row.metrics) + "," + csv_number(row.delta_linf) + "," +
               (row.within_budget ? "1" : "0") + "," + (row.psnr_bound_holds ? "1" : "0") + "\n";
    }
    return out;
}

std::string to_json(const harness::FlatnessReport& r, const harness::ExperimentPlan& plan, const Options&) {
    ordered_json j = header("flatness", plan);
    j["radius"] = r.radius;
    j["draws"] = r.draws;
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"trial", row.trial},
                        {"seed", row.seed},
                        {"pgd", flatness_json(row.pgd)},
                        {"fdm", flatness_json(row.fdm)}});
    }
    j["rows"] = std::move(rows);
    j["mean_max_pgd"] = r.mean_max_pgd;
    j["mean_max_fdm"] = r.mean_max_fdm;
    j["sign_test"] = sign_test_json(r.test);
    j["significant"] = r.significant;
    return dump(j);
}

std::string to_csv(const harness::FlatnessReport& r, const Options&) {
    std::string out = "trial,seed,pgd_center_norm,pgd_max_norm,pgd_mean_norm,fdm_center_norm,fdm_max_norm,"
                      "fdm_mean_norm\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.trial) + "," + std::to_string(row.seed) + "," + csv_number(row.pgd.center_norm) +
               "," + csv_number(row.pgd.max_norm) + "," + csv_number(row.pgd.mean_norm) + "," +
               csv_number(row.fdm.center_norm) + "," + csv_number(row.fdm.max_norm) + "," +
               csv_number(row.fdm.mean_norm) + "\n";
    }
    return out;
}

std::string to_json(const harness::AblationReport& r, const harness::ExperimentPlan& plan, const Options&) {
    ordered_json j = header("ablation", plan);
    j["h"] = r.h;
    j["trials"] = r.trials;
    auto point = [](const harness::AblationPoint& p) {
        return ordered_json{{"ratio", p.ratio},           {"lambda", p.lambda},
                            {"mean_intra", p.mean_intra}, {"mean_cross", p.mean_cross},
                            {"intra", p.intra},           {"cross", p.cross}};
    };
    j["pgd"] = point(r.pgd);
    ordered_json pts = ordered_json::array();
    for (const auto& p : r.points) pts.push_back(point(p));
    j["points"] = std::move(pts);
    j["ratio_zero_matches_pgd"] = r.ratio_zero_matches_pgd;
    j["interior_ratio"] = r.interior_ratio;
    j["interior_not_dominated"] = r.interior_not_dominated;
    return dump(j);
}

std::string to_csv(const harness::AblationReport& r, const Options&) {
    std::string out = "series,ratio,lambda,h,mean_intra_deviation,mean_cross_deviation\n";
    out += "pgd,,," + csv_number(r.h) + "," + csv_number(r.pgd.mean_intra) + "," + csv_number(r.pgd.mean_cross) + "\n";
    for (const auto& p : r.points) {
        out += "fdm," + csv_number(p.ratio) + "," + csv_number(p.lambda) + "," + csv_number(r.h) + "," +
               csv_number(p.mean_intra) + "," + csv_number(p.mean_cross) + "\n";
    }
    return out;
}

std::string to_json(const harness::EfficiencyReport& r, const harness::ExperimentPlan& plan, const Options& opt) {
    ordered_json j = header("efficiency", plan);
    j["samples"] = r.samples;
    j["iterations"] = r.iterations;
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.rows) {
        ordered_json o{{"trial", row.trial},         {"seed", row.seed},         {"fdm_calls", row.fdm_calls},
                       {"tpa_calls", row.tpa_calls}, {"fdm_loss", row.fdm_loss}, {"tpa_loss", row.tpa_loss}};
        if (opt.include_timing) {
            o["fdm_seconds_per_iter"] = row.fdm_seconds_per_iter;
            o["tpa_seconds_per_iter"] = row.tpa_seconds_per_iter;
        }
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    j["fdm_calls_per_iter"] = r.fdm_calls_per_iter;
    j["tpa_calls_per_iter"] = r.tpa_calls_per_iter;
    j["call_ratio"] = r.call_ratio;
    j["expected_call_ratio"] = r.expected_call_ratio;
    j["call_ratio_exact"] = r.call_ratio_exact;
    if (opt.include_timing) j["time_ratio"] = r.time_ratio;
    j["mean_fdm_loss"] = r.mean_fdm_loss;
    j["mean_tpa_loss"] = r.mean_tpa_loss;
    j["loss_relative_gap"] = r.loss_relative_gap;
    return dump(j);
}

std::string to_csv(const harness::EfficiencyReport& r, const Options& opt) {
    std::string out = "trial,seed,fdm_calls,tpa_calls,fdm_loss,tpa_loss";
    out += opt.include_timing ? ",fdm_seconds_per_iter,tpa_seconds_per_iter\n" : "\n";
    for (const auto& row : r.rows) {
        out += std::to_string(row.trial) + "," + std::to_string(row.seed) + "," + std::to_string(row.fdm_calls) + "," +
               std::to_string(row.tpa_calls) + "," + csv_number(row.fdm_loss) + "," + csv_number(row.tpa_loss);
        if (opt.include_timing) {
            out += "," + csv_number(row.fdm_seconds_per_iter) + "," + csv_number(row.tpa_seconds_per_iter);
        }
        out += "\n";
    }
    return out;
}

std::string sidecar_json(const immunize::ImmunizationResult& result, const harness::ExperimentPlan& plan,
                         const SidecarInfo& info, const Options& opt) {
    ordered_json j = header("immunize", plan);
    j["method"] = info.method;
    j["model"] = info.model;
    j["architecture"] = info.architecture;
    j["iterations"] = result.records.size();
    j["gradient_calls"] = result.gradient_calls;
    j["delta_v_linf"] = result.delta_v.max_abs();
    j["delta_p_linf"] = result.delta_p.max_abs();
    j["budget_steps"] = info.budget_steps;
    j["exported_max_steps"] = info.exported_max_steps;
    std::size_t fired = 0;
    ordered_json traj = ordered_json::array();
    for (const auto& rec : result.records) {
        fired += rec.dpd_fired ? 1 : 0;
        ordered_json o{{"loss", rec.loss},
                       {"g1_norm", rec.g1_norm},
                       {"z", rec.z},
                       {"dpd_fired", rec.dpd_fired},
                       {"delta_v_linf", rec.delta_v_linf},
                       {"delta_p_linf", rec.delta_p_linf},
                       {"gradient_calls", rec.gradient_calls}};
        if (opt.include_timing) o["iter_seconds"] = rec.seconds;
        traj.push_back(std::move(o));
    }
    j["dpd_refreshes"] = fired;
    if (!result.records.empty()) {
        j["first_loss"] = result.records.front().loss;
        j["last_loss"] = result.records.back().loss;
    }
    if (opt.include_timing) j["wall_seconds"] = result.wall_seconds;
    j["trajectory"] = std::move(traj);
    return dump(j);
}

}  // namespace tdae::report
