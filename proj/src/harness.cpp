#include "tdae/harness.hpp"

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "tdae/images.hpp"
#include "tdae/rng.hpp"

namespace tdae::harness {

namespace {

using immunize::AttackTarget;
using models::ModelFamilySpec;
using models::ModelSession;

constexpr const char* kIntra = "intra";
constexpr const char* kCross = "cross";

// Ordered pairs reported as "first >= second".
const std::vector<std::pair<Method, Method>> kOrderings{
    {Method::Tdae, Method::Pgd}, {Method::Fdm, Method::Pgd},  {Method::Dpd, Method::Pgd},
    {Method::Tdae, Method::Fdm}, {Method::Tdae, Method::Dpd}, {Method::Tpa, Method::Pgd},
    {Method::PgeFdm, Method::Pge},
};

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool contains(const std::vector<Method>& methods, Method m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
}

double deviation(const Tensor& edited, const Tensor& benign) { return immunize::loss(edited, benign); }

std::vector<Summary> summarize(const std::vector<Cell>& cells, const std::vector<Method>& methods,
                               const std::vector<std::string>& scopes) {
    std::vector<Summary> out;
    for (const auto& scope : scopes)
        for (Method m : methods) {
            std::vector<double> dev, psnr, ssim, vifp, fsim;
            for (const auto& cell : cells) {
                if (cell.method != m || (cell.cross ? kCross : kIntra) != scope) continue;
                dev.push_back(cell.deviation);
                if (std::isfinite(cell.metrics.psnr)) psnr.push_back(cell.metrics.psnr);
                ssim.push_back(cell.metrics.ssim);
                if (cell.metrics.vifp) vifp.push_back(*cell.metrics.vifp);
                if (cell.metrics.fsim) fsim.push_back(*cell.metrics.fsim);
            }
            if (dev.empty()) continue;
            Summary s;
            s.method = m;
            s.scope = scope;
            s.count = dev.size();
            s.mean_deviation = mean(dev);
            s.median_deviation = median(dev);
            s.mean_psnr = mean(psnr);
            s.mean_ssim = mean(ssim);
            s.mean_vifp = mean(vifp);
            s.mean_fsim = mean(fsim);
            out.push_back(s);
        }
    return out;
}

TransferReport run_transfer(const ExperimentPlan& plan, bool intra, bool cross) {
    if (cross) {
        plan.validate_cross();
    } else {
        plan.validate();
    }
    TransferReport report;
    report.kind = cross ? kCross : kIntra;
    const std::size_t n = trial_count(plan);
    for (std::size_t t = 0; t < n; ++t) {
        const Trial trial = make_trial(plan, t);
        const auto source = models::build_model(trial.source);
        std::vector<std::unique_ptr<const models::EditModel>> targets;
        std::vector<Tensor> target_benign;
        if (cross) {
            for (const auto& spec : trial.targets) {
                targets.push_back(models::build_model(spec));
                target_benign.push_back(targets.back()->forward(trial.x0, trial.c));
            }
        }
        const Tensor source_benign = source->forward(trial.x0, trial.c);

        for (Method m : plan.methods) {
            ModelSession session(*source);
            const ImmunizationResult result = run_method(m, session, trial.x0, trial.c, trial.config);
            auto score = [&](const models::EditModel& model, const Tensor& benign, bool is_cross) {
                const Tensor edited = model.forward(result.x_adv, trial.c);
                Cell cell;
                cell.method = m;
                cell.trial = trial.index;
                cell.seed = trial.seed;
                cell.image = trial.image;
                cell.evaluator = model_label(model.spec());
                cell.cross = is_cross;
                cell.deviation = deviation(edited, benign);
                cell.metrics = metrics::evaluate(benign, edited);
                cell.delta_linf = result.delta_v.max_abs();
                cell.gradient_calls = result.gradient_calls;
                cell.wall_seconds = result.wall_seconds;
                report.cells.push_back(std::move(cell));
            };
            if (intra) score(*source, source_benign, false);
            for (std::size_t k = 0; k < targets.size(); ++k) score(*targets[k], target_benign[k], true);
        }
    }

    std::vector<std::string> scopes;
    if (intra) scopes.emplace_back(kIntra);
    if (cross) scopes.emplace_back(kCross);
    report.summaries = summarize(report.cells, plan.methods, scopes);
    for (const auto& scope : scopes)
        for (const auto& [a, b] : kOrderings) {
            if (!contains(plan.methods, a) || !contains(plan.methods, b)) continue;
            const auto va = report.trial_deviations(a, scope);
            const auto vb = report.trial_deviations(b, scope);
            Comparison c;
            c.method = a;
            c.baseline = b;
            c.scope = scope;
            c.mean_method = mean(va);
            c.mean_baseline = mean(vb);
            c.test = sign_test(va, vb);
            c.significant = c.test.p_value < kSignificance;
            report.comparisons.push_back(c);
        }
    return report;
}

// Final source-model loss with the original embedding.
double final_loss(const models::EditModel& model, const Tensor& x0, const Tensor& c, const Tensor& delta_v,
                  AttackTarget target) {
    ModelSession session(model);
    const auto objective = immunize::make_objective(model, x0, c, target);
    return immunize::image_loss(session, x0, delta_v, c, objective);
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::Pgd: return "pgd";
        case Method::Fdm: return "fdm";
        case Method::Dpd: return "dpd";
        case Method::Tdae: return "tdae";
        case Method::Tpa: return "tpa";
        case Method::Pge: return "pge";
        case Method::PgeFdm: return "pge-fdm";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    for (Method m : {Method::Pgd, Method::Fdm, Method::Dpd, Method::Tdae, Method::Tpa, Method::Pge, Method::PgeFdm}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown method '" + name + "' (expected pgd, fdm, dpd, tdae, tpa, pge or pge-fdm)");
}

TdaeConfig method_config(Method m, const TdaeConfig& base) {
    TdaeConfig cfg = base;
    const std::size_t never = cfg.iterations + 1;
    switch (m) {
        case Method::Pgd:
            cfg.lambda = 0.0;
            cfg.dpd_period = never;
            cfg.attack_target = AttackTarget::FullModel;
            break;
        case Method::Fdm:
            cfg.dpd_period = never;
            cfg.attack_target = AttackTarget::FullModel;
            break;
        case Method::Dpd:
            cfg.lambda = 0.0;
            cfg.attack_target = AttackTarget::FullModel;
            break;
        case Method::Tdae:
        case Method::Tpa:
            cfg.attack_target = AttackTarget::FullModel;
            break;
        case Method::Pge:
            cfg.lambda = 0.0;
            cfg.attack_target = AttackTarget::EncoderOnly;
            break;
        case Method::PgeFdm:
            cfg.attack_target = AttackTarget::EncoderOnly;
            break;
    }
    return cfg;
}

ImmunizationResult run_method(Method m, ModelSession& session, const Tensor& x0, const Tensor& c,
                              const TdaeConfig& base) {
    const TdaeConfig cfg = method_config(m, base);
    switch (m) {
        case Method::Pgd:
        case Method::Pge: return immunize::pgd_immunize(session, x0, c, cfg);
        case Method::Tpa: return immunize::tpa_immunize(session, x0, c, cfg);
        default: return immunize::tdae_immunize(session, x0, c, cfg);
    }
}

void ExperimentPlan::validate() const {
    config.validate();
    if (seeds == 0) throw ConfigError("plan.seeds must be >= 1");
    if (images == 0) throw ConfigError("plan.images must be >= 1");
    if (image_size < 32) throw ConfigError("plan.image_size must be >= 32 (metric windows)");
    if (methods.empty()) throw ConfigError("plan.methods must list at least one method");
    if (!(embedding_scale >= 0.0) || !std::isfinite(embedding_scale)) {
        throw ConfigError("plan.embedding_scale must be finite and >= 0");
    }
    if (!(probe_radius >= 0.0) || !std::isfinite(probe_radius)) throw ConfigError("plan.probe_radius must be >= 0");
    if (probe_draws == 0) throw ConfigError("plan.probe_draws must be >= 1");
    if (efficiency_trials == 0) throw ConfigError("plan.efficiency_trials must be >= 1");
    for (double r : ratios) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("plan.ratios entries must be finite and >= 0");
    }
    const auto families = models::known_families();
    auto check_family = [&](const ModelFamilySpec& s, const std::string& where) {
        if (std::find(families.begin(), families.end(), s.family) == families.end()) {
            throw ConfigError(where + ": unknown model family '" + s.family + "'");
        }
    };
    check_family(source, "source");
    if (source.channels == 0 || source.embedding_dim == 0) {
        throw ConfigError("source.channels and source.embedding_dim must be >= 1");
    }
    for (const auto& t : targets) check_family(t, "plan.targets");
}

void ExperimentPlan::validate_cross() const {
    validate();
    if (targets.empty()) throw ConfigError("plan.targets must list at least one model for cross evaluation");
    for (const auto& t : targets) {
        const bool same = t.family == source.family && t.seed == source.seed &&
                          (shared_stem || t.stem_seed == source.stem_seed);
        if (same) throw ConfigError("plan.targets: target " + model_label(t) + " is the source model");
    }
}

std::size_t trial_count(const ExperimentPlan& plan) { return plan.seeds * plan.images; }

Trial make_trial(const ExperimentPlan& plan, std::size_t index) {
    if (index >= trial_count(plan)) throw std::out_of_range("make_trial: index past the end of the plan");
    Trial t;
    t.index = index;
    t.seed_index = index / plan.images;
    t.image = index % plan.images;
    t.seed = mix_seed(mix_seed(plan.seed, 0x5EED0000 + t.seed_index), t.image + 1);
    t.x0 = images::procedural_image(t.image, plan.seed, plan.image_size);
    t.c = images::random_embedding(plan.source.embedding_dim, t.seed, plan.embedding_scale);

    const std::uint64_t stem = mix_seed(t.seed, 0x57E) | 1;
    auto derive = [&](ModelFamilySpec spec) {
        if (plan.per_trial_models) spec.seed = mix_seed(spec.seed, t.seed);
        if (plan.shared_stem) spec.stem_seed = stem;
        return spec;
    };
    t.source = derive(plan.source);
    for (const auto& target : plan.targets) {
        ModelFamilySpec spec = plan.source;
        spec.family = target.family;
        spec.seed = target.seed;
        spec.stem_seed = target.stem_seed;
        spec.min_depth = spec.max_depth = spec.min_width = spec.max_width = 0;
        t.targets.push_back(derive(spec));
    }
    t.config = plan.config;
    t.config.seed = t.seed;
    return t;
}

std::string model_label(const ModelFamilySpec& spec) { return spec.family + ":" + std::to_string(spec.seed); }

SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sign_test: paired samples differ in length");
    SignTest t;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) {
            ++t.wins;
        } else if (a[i] < b[i]) {
            ++t.losses;
        } else {
            ++t.ties;
        }
    }
    const std::size_t n = t.wins + t.losses;
    if (n == 0 || t.wins == 0) {
        t.p_value = 1.0;
    } else {
        const boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
        t.p_value = boost::math::cdf(boost::math::complement(dist, static_cast<double>(t.wins - 1)));
    }
    return t;
}

std::vector<double> TransferReport::trial_deviations(Method method, const std::string& scope) const {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& cell : cells) {
        if (cell.method != method || (cell.cross ? kCross : kIntra) != scope) continue;
        auto& [sum, count] = acc[cell.trial];
        sum += cell.deviation;
        ++count;
    }
    std::vector<double> out;
    out.reserve(acc.size());
    for (const auto& [trial, sc] : acc) out.push_back(sc.first / static_cast<double>(sc.second));
    return out;
}

const Comparison* TransferReport::find(Method method, Method baseline, const std::string& scope) const {
    for (const auto& c : comparisons) {
        if (c.method == method && c.baseline == baseline && c.scope == scope) return &c;
    }
    return nullptr;
}

TransferReport run_intra_eval(const ExperimentPlan& plan) { return run_transfer(plan, true, false); }
TransferReport run_cross_eval(const ExperimentPlan& plan) { return run_transfer(plan, false, true); }

ImperceptibilityReport run_imperceptibility(const ExperimentPlan& plan) {
    plan.validate();
    ImperceptibilityReport report;
    report.eps_v = plan.config.eps_v;
    report.psnr_bound = plan.config.eps_v > 0.0 ? -20.0 * std::log10(plan.config.eps_v)
                                                : std::numeric_limits<double>::infinity();
    const std::size_t n = trial_count(plan);
    for (std::size_t t = 0; t < n; ++t) {
        const Trial trial = make_trial(plan, t);
        const auto source = models::build_model(trial.source);
        for (Method m : plan.methods) {
            ModelSession session(*source);
            const ImmunizationResult result = run_method(m, session, trial.x0, trial.c, trial.config);
            ImperceptibilityRow row;
            row.method = m;
            row.trial = trial.index;
            row.seed = trial.seed;
            row.image = trial.image;
            row.metrics = metrics::evaluate(trial.x0, result.x_adv);
            row.delta_linf = result.delta_v.max_abs();
            row.within_budget = row.delta_linf <= plan.config.eps_v;
            // 1e-9 dB absorbs the rounding of x0 + delta - x0
            row.psnr_bound_holds = row.metrics.psnr >= report.psnr_bound - 1e-9;
            if (!row.within_budget) ++report.budget_violations;
            if (!row.psnr_bound_holds) ++report.bound_violations;
            report.rows.push_back(std::move(row));
        }
    }
    std::vector<Cell> as_cells;
    for (const auto& row : report.rows) {
        Cell c;
        c.method = row.method;
        c.trial = row.trial;
        c.deviation = row.metrics.mse;
        c.metrics = row.metrics;
        as_cells.push_back(std::move(c));
    }
    report.summaries = summarize(as_cells, plan.methods, {kIntra});
    for (auto& s : report.summaries) s.scope = "clean";
    const auto pgd = std::find_if(report.summaries.begin(), report.summaries.end(),
                                  [](const Summary& s) { return s.method == Method::Pgd; });
    if (pgd != report.summaries.end()) {
        for (const auto& s : report.summaries) {
            report.max_psnr_gap = std::max(report.max_psnr_gap, std::abs(s.mean_psnr - pgd->mean_psnr));
        }
    }
    return report;
}

FlatnessStats run_flatness_probe(const ImmunizationResult& result, const models::EditModel& model, const Tensor& x0,
                                 const Tensor& c, AttackTarget target, double radius, std::size_t draws,
                                 std::uint64_t seed) {
    if (!(radius >= 0.0)) throw std::invalid_argument("run_flatness_probe: radius must be >= 0");
    if (draws == 0) throw std::invalid_argument("run_flatness_probe: need at least one draw");
    ModelSession session(model);
    const auto objective = immunize::make_objective(model, x0, c, target);
    FlatnessStats stats;
    stats.radius = radius;
    stats.draws = draws;
    stats.center_norm = immunize::image_gradient(session, x0, result.delta_v, c, objective).grad.l2_norm();
    Rng rng(mix_seed(seed, 0xF1A7));
    double total = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        Tensor point = result.delta_v;
        if (radius > 0.0) {
            for (auto& v : point.data()) v += rng.uniform(-radius, radius);
        }
        const double norm = immunize::image_gradient(session, x0, point, c, objective).grad.l2_norm();
        stats.max_norm = d == 0 ? norm : std::max(stats.max_norm, norm);
        total += norm;
    }
    stats.mean_norm = total / static_cast<double>(draws);
    return stats;
}

FlatnessReport run_flatness_comparison(const ExperimentPlan& plan) {
    plan.validate();
    FlatnessReport report;
    report.radius = plan.probe_radius;
    report.draws = plan.probe_draws;
    std::vector<double> pgd_max, fdm_max;
    const std::size_t n = trial_count(plan);
    for (std::size_t t = 0; t < n; ++t) {
        const Trial trial = make_trial(plan, t);
        const auto source = models::build_model(trial.source);
        FlatnessRow row;
        row.trial = trial.index;
        row.seed = trial.seed;
        for (Method m : {Method::Pgd, Method::Fdm}) {
            ModelSession session(*source);
            const auto result = run_method(m, session, trial.x0, trial.c, trial.config);
            const auto stats = run_flatness_probe(result, *source, trial.x0, trial.c, AttackTarget::FullModel,
                                                  plan.probe_radius, plan.probe_draws, trial.seed);
            (m == Method::Pgd ? row.pgd : row.fdm) = stats;
        }
        pgd_max.push_back(row.pgd.max_norm);
        fdm_max.push_back(row.fdm.max_norm);
        report.rows.push_back(row);
    }
    report.mean_max_pgd = mean(pgd_max);
    report.mean_max_fdm = mean(fdm_max);
    report.test = sign_test(pgd_max, fdm_max);
    report.significant = report.test.p_value < kSignificance && report.mean_max_fdm < report.mean_max_pgd;
    return report;
}

AblationReport run_ablation_lambda_h(const ExperimentPlan& plan) { return run_ablation_lambda_h(plan, plan.ratios); }

AblationReport run_ablation_lambda_h(const ExperimentPlan& plan, const std::vector<double>& ratios) {
    plan.validate_cross();
    if (ratios.empty()) throw ConfigError("ablation needs at least one lambda/h ratio");
    AblationReport report;
    report.h = plan.config.h;
    report.trials = trial_count(plan);
    for (double r : ratios) {
        AblationPoint p;
        p.ratio = r;
        p.lambda = r * plan.config.h;
        report.points.push_back(p);
    }

    for (std::size_t t = 0; t < report.trials; ++t) {
        const Trial trial = make_trial(plan, t);
        const auto source = models::build_model(trial.source);
        std::vector<std::unique_ptr<const models::EditModel>> targets;
        for (const auto& spec : trial.targets) targets.push_back(models::build_model(spec));
        const Tensor benign = source->forward(trial.x0, trial.c);

        auto record = [&](AblationPoint& p, const ImmunizationResult& result) {
            p.intra.push_back(deviation(source->forward(result.x_adv, trial.c), benign));
            std::vector<double> cross;
            for (const auto& target : targets) {
                cross.push_back(deviation(target->forward(result.x_adv, trial.c), target->forward(trial.x0, trial.c)));
            }
            p.cross.push_back(mean(cross));
        };

        ModelSession pgd_session(*source);
        const auto pgd = run_method(Method::Pgd, pgd_session, trial.x0, trial.c, trial.config);
        record(report.pgd, pgd);
        for (auto& p : report.points) {
            TdaeConfig cfg = trial.config;
            cfg.lambda = p.lambda;
            ModelSession session(*source);
            const auto result = run_method(Method::Fdm, session, trial.x0, trial.c, cfg);
            record(p, result);
            if (p.ratio == 0.0 && !(result.delta_v == pgd.delta_v && result.x_adv == pgd.x_adv)) {
                report.ratio_zero_matches_pgd = false;
            }
        }
    }

    report.pgd.mean_intra = mean(report.pgd.intra);
    report.pgd.mean_cross = mean(report.pgd.cross);
    for (auto& p : report.points) {
        p.mean_intra = mean(p.intra);
        p.mean_cross = mean(p.cross);
        if (p.ratio == 0.0 && (p.intra != report.pgd.intra || p.cross != report.pgd.cross)) {
            report.ratio_zero_matches_pgd = false;
        }
    }

    if (report.points.size() >= 3) {
        std::size_t best = 1;
        for (std::size_t i = 1; i + 1 < report.points.size(); ++i) {
            if (std::abs(report.points[i].ratio - 0.3) < std::abs(report.points[best].ratio - 0.3)) best = i;
        }
        report.interior_ratio = report.points[best].ratio;
        const auto& lo = report.points.front().cross;
        const auto& hi = report.points.back().cross;
        const auto& mid = report.points[best].cross;
        for (std::size_t t = 0; t < mid.size(); ++t) {
            if (!(lo[t] > mid[t] && hi[t] > mid[t])) ++report.interior_not_dominated;
        }
    }
    return report;
}

double median_iteration_seconds(const ImmunizationResult& result) {
    std::vector<double> times;
    for (std::size_t i = 1; i < result.records.size(); ++i) times.push_back(result.records[i].seconds);
    if (times.empty() && !result.records.empty()) times.push_back(result.records.front().seconds);
    return median(std::move(times));
}

EfficiencyReport run_efficiency_comparison(const ExperimentPlan& plan, std::size_t samples) {
    plan.validate();
    if (samples == 0) throw ConfigError("efficiency comparison needs K >= 1");
    EfficiencyReport report;
    report.samples = samples;
    report.iterations = plan.config.iterations;
    report.expected_call_ratio = static_cast<double>(2 * samples + 1) / 2.0;
    const std::size_t n = std::min(plan.efficiency_trials, trial_count(plan));
    std::size_t fdm_total = 0, tpa_total = 0;
    std::vector<double> fdm_time, tpa_time, fdm_loss, tpa_loss;
    for (std::size_t t = 0; t < n; ++t) {
        const Trial trial = make_trial(plan, t);
        const auto source = models::build_model(trial.source);
        TdaeConfig cfg = trial.config;
        cfg.tpa_samples = samples;

        ModelSession fdm_session(*source);
        const auto fdm = run_method(Method::Fdm, fdm_session, trial.x0, trial.c, cfg);
        ModelSession tpa_session(*source);
        const auto tpa = run_method(Method::Tpa, tpa_session, trial.x0, trial.c, cfg);

        EfficiencyRow row;
        row.trial = trial.index;
        row.seed = trial.seed;
        row.fdm_calls = fdm.gradient_calls;
        row.tpa_calls = tpa.gradient_calls;
        row.fdm_seconds_per_iter = median_iteration_seconds(fdm);
        row.tpa_seconds_per_iter = median_iteration_seconds(tpa);
        row.fdm_loss = final_loss(*source, trial.x0, trial.c, fdm.delta_v, AttackTarget::FullModel);
        row.tpa_loss = final_loss(*source, trial.x0, trial.c, tpa.delta_v, AttackTarget::FullModel);
        fdm_total += row.fdm_calls;
        tpa_total += row.tpa_calls;
        fdm_time.push_back(row.fdm_seconds_per_iter);
        tpa_time.push_back(row.tpa_seconds_per_iter);
        fdm_loss.push_back(row.fdm_loss);
        tpa_loss.push_back(row.tpa_loss);
        report.rows.push_back(row);
    }
    const double iters = static_cast<double>(n * plan.config.iterations);
    report.fdm_calls_per_iter = iters > 0 ? static_cast<double>(fdm_total) / iters : 0.0;
    report.tpa_calls_per_iter = iters > 0 ? static_cast<double>(tpa_total) / iters : 0.0;
    report.call_ratio = fdm_total > 0 ? static_cast<double>(tpa_total) / static_cast<double>(fdm_total) : 0.0;
    report.call_ratio_exact = fdm_total > 0 && 2 * tpa_total == (2 * samples + 1) * fdm_total;
    const double fdm_med = median(fdm_time);
    report.time_ratio = fdm_med > 0.0 ? median(tpa_time) / fdm_med : 0.0;
    report.mean_fdm_loss = mean(fdm_loss);
    report.mean_tpa_loss = mean(tpa_loss);
    const double scale = std::max(std::abs(report.mean_fdm_loss), std::abs(report.mean_tpa_loss));
    report.loss_relative_gap = scale > 0.0 ? std::abs(report.mean_tpa_loss - report.mean_fdm_loss) / scale : 0.0;
    return report;
}

}  // namespace tdae::harness
