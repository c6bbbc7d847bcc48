#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tdae/immunize.hpp"
#include "tdae/metrics.hpp"
#include "tdae/models.hpp"
#include "tdae/tensor.hpp"

namespace tdae::harness {

using immunize::ConfigError;
using immunize::ImmunizationResult;
using immunize::TdaeConfig;
using metrics::MetricReport;
using nd::Tensor;

/// Immunization variants. Fdm and Dpd are the single-component ablations of Tdae; Pge attacks the
/// encoder latent, PgeFdm adds the flatness term to it; Tpa is the sampled-neighbourhood reference.
enum class Method { Pgd, Fdm, Dpd, Tdae, Tpa, Pge, PgeFdm };

std::string to_string(Method m);
/// Throws ConfigError for unknown names.
Method method_from_string(const std::string& name);

/// The config `method` actually runs with: Pgd/Pge drop lambda, Fdm/PgeFdm disable the
/// embedding refresh, Dpd drops lambda but keeps the refresh.
TdaeConfig method_config(Method m, const TdaeConfig& base);
ImmunizationResult run_method(Method m, models::ModelSession& session, const Tensor& x0, const Tensor& c,
                              const TdaeConfig& base);

struct ExperimentPlan {
    models::ModelFamilySpec source{};
    /// Families/seeds never seen during immunization. Only family, seed and stem_seed are used;
    /// shape fields follow the source.
    std::vector<models::ModelFamilySpec> targets{models::ModelFamilySpec{models::kCondMlp, 2}};
    std::uint64_t seed = 0;
    std::size_t seeds = 3;        // trial seeds per image
    std::size_t images = 10;      // procedural images 0..images-1
    std::size_t image_size = 32;
    std::vector<Method> methods{Method::Pgd, Method::Fdm, Method::Dpd, Method::Tdae};
    TdaeConfig config{};
    double embedding_scale = 1.0;
    /// Re-derive model seeds for every (image, seed) trial instead of using the listed seeds as is.
    bool per_trial_models = true;
    /// Give the source and all targets of a trial one common first-layer stem.
    bool shared_stem = true;
    std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    double probe_radius = 0.01;
    std::size_t probe_draws = 64;
    std::size_t efficiency_trials = 5;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// validate() plus: at least one target, none equal to the source.
    void validate_cross() const;

    friend bool operator==(const ExperimentPlan&, const ExperimentPlan&) = default;
};

/// Everything a single paired trial needs; identical for every method.
struct Trial {
    std::size_t index = 0;  // seed_index * images + image
    std::size_t seed_index = 0;
    std::size_t image = 0;
    std::uint64_t seed = 0;
    Tensor x0;
    Tensor c;
    models::ModelFamilySpec source;
    std::vector<models::ModelFamilySpec> targets;
    TdaeConfig config;
};

std::size_t trial_count(const ExperimentPlan& plan);
Trial make_trial(const ExperimentPlan& plan, std::size_t index);

/// "family:seed" label of a model spec.
std::string model_label(const models::ModelFamilySpec& spec);

/// One-sided paired sign test of "a > b". Ties are dropped; p = P(Bin(n, 1/2) >= wins).
struct SignTest {
    std::size_t wins = 0;
    std::size_t losses = 0;
    std::size_t ties = 0;
    double p_value = 1.0;
};
SignTest sign_test(const std::vector<double>& a, const std::vector<double>& b);

inline constexpr double kSignificance = 0.05;

struct Cell {
    Method method = Method::Pgd;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t image = 0;
    std::string evaluator;  // model label the edit was scored on
    bool cross = false;
    double deviation = 0.0;  // MSE(f(x_adv, c), f(x0, c)) on the evaluator
    MetricReport metrics;
    double delta_linf = 0.0;
    std::size_t gradient_calls = 0;
    double wall_seconds = 0.0;
};

struct Summary {
    Method method = Method::Pgd;
    std::string scope;  // "intra" or "cross"
    std::size_t count = 0;
    double mean_deviation = 0.0;
    double median_deviation = 0.0;
    double mean_psnr = 0.0;  // over finite values
    double mean_ssim = 0.0;
    double mean_vifp = 0.0;  // over defined values
    double mean_fsim = 0.0;
};

/// Paired per-trial comparison "method >= baseline"; cross values average over targets.
struct Comparison {
    Method method = Method::Pgd;
    Method baseline = Method::Pgd;
    std::string scope;
    double mean_method = 0.0;
    double mean_baseline = 0.0;
    SignTest test;
    bool significant = false;
};

struct TransferReport {
    std::string kind;  // "intra" or "cross"
    std::vector<Cell> cells;
    std::vector<Summary> summaries;
    std::vector<Comparison> comparisons;

    /// Per-trial deviation of `method` in `scope`, averaged over evaluators.
    std::vector<double> trial_deviations(Method method, const std::string& scope) const;
    const Comparison* find(Method method, Method baseline, const std::string& scope) const;
};

TransferReport run_intra_eval(const ExperimentPlan& plan);
TransferReport run_cross_eval(const ExperimentPlan& plan);

struct ImperceptibilityRow {
    Method method = Method::Pgd;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t image = 0;
    MetricReport metrics;  // x_adv against x0
    double delta_linf = 0.0;
    bool within_budget = true;
    bool psnr_bound_holds = true;
};

struct ImperceptibilityReport {
    double eps_v = 0.0;
    double psnr_bound = 0.0;  // 20 log10(1 / eps_v); +inf when eps_v == 0
    std::vector<ImperceptibilityRow> rows;
    std::vector<Summary> summaries;  // scope "clean"; deviation field holds MSE(x_adv, x0)
    std::size_t budget_violations = 0;
    std::size_t bound_violations = 0;
    /// Largest |mean PSNR(method) - mean PSNR(pgd)|; 0 without pgd.
    double max_psnr_gap = 0.0;
};

ImperceptibilityReport run_imperceptibility(const ExperimentPlan& plan);

struct FlatnessStats {
    double radius = 0.0;
    std::size_t draws = 0;
    double center_norm = 0.0;
    double max_norm = 0.0;
    double mean_norm = 0.0;
};

/// ||grad L||_2 at `draws` points drawn uniformly from the L_inf ball of `radius` around the
/// result's delta_v, with the original embedding and benign target.
FlatnessStats run_flatness_probe(const ImmunizationResult& result, const models::EditModel& model, const Tensor& x0,
                                 const Tensor& c, immunize::AttackTarget target, double radius, std::size_t draws,
                                 std::uint64_t seed);

struct FlatnessRow {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    FlatnessStats pgd;
    FlatnessStats fdm;
};

struct FlatnessReport {
    double radius = 0.0;
    std::size_t draws = 0;
    std::vector<FlatnessRow> rows;
    double mean_max_pgd = 0.0;
    double mean_max_fdm = 0.0;
    SignTest test;  // wins: fdm max strictly below pgd max
    bool significant = false;
};

FlatnessReport run_flatness_comparison(const ExperimentPlan& plan);

struct AblationPoint {
    double ratio = 0.0;
    double lambda = 0.0;
    std::vector<double> intra;  // per trial
    std::vector<double> cross;  // per trial, mean over targets
    double mean_intra = 0.0;
    double mean_cross = 0.0;
};

struct AblationReport {
    double h = 0.0;
    AblationPoint pgd;                  // reference column; ratio and lambda unused
    std::vector<AblationPoint> points;  // one per ratio, in sweep order
    /// Every ratio-0 trial reproduced the PGD perturbation bitwise (true when 0 is not swept).
    bool ratio_zero_matches_pgd = true;
    /// Trials where the ratio closest to 0.3 beats at least one endpoint on cross deviation.
    double interior_ratio = 0.0;
    std::size_t interior_not_dominated = 0;
    std::size_t trials = 0;
};

/// Lambda/h sweep at fixed h on the flatness-only variant, so ratio 0 is plain PGD.
AblationReport run_ablation_lambda_h(const ExperimentPlan& plan);
AblationReport run_ablation_lambda_h(const ExperimentPlan& plan, const std::vector<double>& ratios);

struct EfficiencyRow {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t fdm_calls = 0;
    std::size_t tpa_calls = 0;
    double fdm_seconds_per_iter = 0.0;  // median over iterations after the first
    double tpa_seconds_per_iter = 0.0;
    double fdm_loss = 0.0;  // final L on the source with the original embedding
    double tpa_loss = 0.0;
};

struct EfficiencyReport {
    std::size_t samples = 0;
    std::size_t iterations = 0;
    std::vector<EfficiencyRow> rows;
    double fdm_calls_per_iter = 0.0;
    double tpa_calls_per_iter = 0.0;
    double call_ratio = 0.0;
    double expected_call_ratio = 0.0;  // (2K + 1) / 2
    bool call_ratio_exact = false;
    double time_ratio = 0.0;  // median-of-trials TPA / FDM seconds per iteration
    double mean_fdm_loss = 0.0;
    double mean_tpa_loss = 0.0;
    double loss_relative_gap = 0.0;  // |tpa - fdm| / max(|fdm|, |tpa|)
};

/// Flatness-only TDAE against the TPA reference on the first `efficiency_trials` trials.
EfficiencyReport run_efficiency_comparison(const ExperimentPlan& plan, std::size_t samples);

/// Median of the per-iteration wall times, skipping the first (warm-up) iteration.
double median_iteration_seconds(const ImmunizationResult& result);

}  // namespace tdae::harness
