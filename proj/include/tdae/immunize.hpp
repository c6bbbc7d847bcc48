#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdae/autodiff.hpp"
#include "tdae/models.hpp"
#include "tdae/rng.hpp"
#include "tdae/tensor.hpp"

namespace tdae::immunize {

using models::LossGradient;
using models::ModelSession;
using nd::Tensor;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a post-projection budget check fails. Unreachable unless the projection is broken.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class AttackTarget { FullModel, EncoderOnly };

std::string to_string(AttackTarget t);
AttackTarget attack_target_from_string(const std::string& s);

/// Hyperparameters of the bi-level immunization loop. Defaults keep lambda / h = 0.3.
struct TdaeConfig {
    double eps_v = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    std::size_t iterations = 100;
    double lambda = 0.03;
    double h = 0.1;
    std::size_t dpd_period = 20;
    double eps_p = 0.1;
    double eta = 0.01;
    std::size_t dpd_iterations = 10;
    std::uint64_t seed = 0;
    AttackTarget attack_target = AttackTarget::FullModel;
    // delta_v starts from a seeded uniform draw in the eps_v ball at the first iteration. The
    // benign target is a stationary point of the loss, so a zero start never moves.
    bool random_start = true;
    // Reference TPA regularizer: neighbourhood samples and L_inf sampling radius.
    std::size_t tpa_samples = 5;
    double tpa_radius = 4.0 / 255.0;

    /// Throws ConfigError naming the first offending field.
    void validate() const;

    friend bool operator==(const TdaeConfig&, const TdaeConfig&) = default;
};

/// Mean squared error over all elements.
double loss(const Tensor& y, const Tensor& y0);
nd::Var loss(const nd::Var& y, const nd::Var& y0);

/// Elementwise clamp to [-eps, eps]. Idempotent.
Tensor project_linf(const Tensor& delta, double eps);

/// What the image perturbation pushes away from: the benign edit y0 (full model) or the clean
/// image's latent (encoder-only).
struct Objective {
    AttackTarget target = AttackTarget::FullModel;
    Tensor reference;
};

/// y0 = f(x0, c) under the original embedding.
Tensor compute_benign_target(const models::EditModel& model, const Tensor& x0, const Tensor& c);
Objective make_objective(const models::EditModel& model, const Tensor& x0, const Tensor& c, AttackTarget target);

/// L at x0 + delta_v under embedding e and its gradient in delta_v. One gradient call.
LossGradient image_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                            const Objective& objective);
/// L at x0 + delta_v, forward only (no gradient call).
double image_loss(const ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                  const Objective& objective);

/// One sign-gradient ascent step on L followed by projection onto the eps_v ball.
Tensor pgd_step(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                const Objective& objective, double alpha, double eps_v);

struct FdmGradient {
    Tensor g;
    double loss = 0.0;     // L at delta_v
    double g1_norm = 0.0;  // ||grad L||_2 at delta_v
    double z = 0.0;        // L(delta_v + h s) - L(delta_v)
};

/// Flatness-regularized descent direction g = -g1 + (lambda/h) sign(z) (g2 - g1), where g2 is
/// the plain gradient at delta_v + h * g1/||g1||. Two gradient calls, one when g1 vanishes.
FdmGradient fdm_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                         const Objective& objective, double lambda, double h);

struct StepResult {
    Tensor delta_v;
    FdmGradient diagnostics;
};

/// delta_v' = project(delta_v - alpha * sign(g_FDM), eps_v).
StepResult fdm_step(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                    const Objective& objective, const TdaeConfig& cfg);

/// Embedding perturbation that re-enables the edit of `x_imu`: M projected sign-descent steps on
/// L(f(x_imu, c + delta_p), y0) from delta_p = 0. Exactly M gradient calls.
Tensor dpd_refine(ModelSession& session, const Tensor& x_imu, const Tensor& c, const Tensor& y0, double eps_p,
                  double eta, std::size_t iterations);

struct IterationRecord {
    double loss = 0.0;
    double g1_norm = 0.0;
    double z = 0.0;
    bool dpd_fired = false;
    double delta_v_linf = 0.0;
    double delta_p_linf = 0.0;
    std::size_t gradient_calls = 0;  // cumulative
    double seconds = 0.0;            // wall time of this iteration
};

struct ImmunizationResult {
    Tensor x_adv;
    Tensor delta_v;
    Tensor delta_p;
    std::vector<IterationRecord> records;
    std::size_t gradient_calls = 0;
    double wall_seconds = 0.0;
};

/// Starting perturbation for a run: uniform in [-eps_v, eps_v] from cfg.seed, or zero.
Tensor initial_perturbation(const nd::Shape& shape, const TdaeConfig& cfg);

/// Full bi-level loop: FDM image steps with a DPD embedding refresh every `dpd_period`
/// iterations. In encoder-only mode DPD is skipped and the embedding is unused.
ImmunizationResult tdae_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg);

/// Plain projected sign-gradient ascent (one gradient call per iteration).
ImmunizationResult pgd_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg);

/// Reference expected-gradient-norm regularizer: K neighbours drawn uniformly from the L_inf ball
/// of radius sigma around delta_v, each contributing a finite-difference gradient-norm gradient.
/// Exactly 2K + 1 gradient calls.
Tensor tpa_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& c,
                    const Objective& objective, double lambda, std::size_t samples, double sigma, double h, Rng& rng);

/// Descent loop driven by tpa_gradient, sampling stream seeded from cfg.seed.
ImmunizationResult tpa_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg);

}  // namespace tdae::immunize
