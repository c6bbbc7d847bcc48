#include "tdae/immunize.hpp"

#include <chrono>
#include <cmath>

namespace tdae::immunize {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_budget(const Tensor& delta, double eps, const char* what) {
    if (delta.max_abs() > eps) throw InvariantError(std::string(what) + " left its L_inf budget");
}

models::ScalarHead mse_head(const Tensor& reference) {
    return [&reference](const nd::Var& out) { return loss(out, out.graph().constant(reference)); };
}

Tensor embedding_zero(const Tensor& c) { return Tensor(c.shape(), 0.0); }

}  // namespace

std::string to_string(AttackTarget t) {
    return t == AttackTarget::FullModel ? "full-model" : "encoder-only";
}

AttackTarget attack_target_from_string(const std::string& s) {
    if (s == "full-model") return AttackTarget::FullModel;
    if (s == "encoder-only") return AttackTarget::EncoderOnly;
    throw ConfigError("attack_target must be full-model or encoder-only, got '" + s + "'");
}

void TdaeConfig::validate() const {
    auto require = [](bool ok, const char* field, const char* rule) {
        if (!ok) throw ConfigError(std::string(field) + " " + rule);
    };
    require(std::isfinite(eps_v) && eps_v >= 0.0, "eps_v", "must be >= 0");
    require(std::isfinite(alpha) && alpha > 0.0, "alpha", "must be > 0");
    require(std::isfinite(h) && h > 0.0, "h", "must be > 0");
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be >= 0");
    require(dpd_period >= 1, "dpd_period", "must be >= 1");
    require(std::isfinite(eps_p) && eps_p >= 0.0, "eps_p", "must be >= 0");
    require(std::isfinite(eta) && eta >= 0.0, "eta", "must be >= 0");
    require(tpa_samples >= 1, "tpa_samples", "must be >= 1");
    require(std::isfinite(tpa_radius) && tpa_radius > 0.0, "tpa_radius", "must be > 0");
}

double loss(const Tensor& y, const Tensor& y0) {
    nd::require_same_shape(y, y0, "loss");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y0[i];
        s += d * d;
    }
    return s / static_cast<double>(y.size());
}

nd::Var loss(const nd::Var& y, const nd::Var& y0) {
    nd::Var d = y - y0;
    return nd::mean(d * d);
}

Tensor project_linf(const Tensor& delta, double eps) {
    if (!(eps >= 0.0)) throw std::invalid_argument("project_linf: eps must be >= 0");
    return nd::clamp_abs(delta, eps);
}

Tensor initial_perturbation(const nd::Shape& shape, const TdaeConfig& cfg) {
    Tensor delta(shape, 0.0);
    if (!cfg.random_start) return delta;
    Rng rng(mix_seed(cfg.seed, 0x51));
    for (auto& v : delta.data()) v = rng.uniform(-cfg.eps_v, cfg.eps_v);
    return project_linf(delta, cfg.eps_v);
}

Tensor compute_benign_target(const models::EditModel& model, const Tensor& x0, const Tensor& c) {
    return model.forward(x0, c);
}

Objective make_objective(const models::EditModel& model, const Tensor& x0, const Tensor& c, AttackTarget target) {
    if (target == AttackTarget::EncoderOnly) return {target, model.encoder_output(x0)};
    return {target, compute_benign_target(model, x0, c)};
}

LossGradient image_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                            const Objective& objective) {
    const Tensor x = x0 + delta_v;
    if (objective.target == AttackTarget::EncoderOnly) {
        return session.grad_encoder_x(x, mse_head(objective.reference));
    }
    return session.grad_x(x, e, mse_head(objective.reference));
}

double image_loss(const ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                  const Objective& objective) {
    const Tensor x = x0 + delta_v;
    if (objective.target == AttackTarget::EncoderOnly) return loss(session.encoder_output(x), objective.reference);
    return loss(session.forward(x, e), objective.reference);
}

Tensor pgd_step(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                const Objective& objective, double alpha, double eps_v) {
    const LossGradient lg = image_gradient(session, x0, delta_v, e, objective);
    return project_linf(delta_v + alpha * nd::sign(lg.grad), eps_v);
}

FdmGradient fdm_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                         const Objective& objective, double lambda, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("fdm_gradient: h must be > 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("fdm_gradient: lambda must be >= 0");

    const LossGradient first = image_gradient(session, x0, delta_v, e, objective);
    FdmGradient out;
    out.loss = first.loss;
    out.g1_norm = first.grad.l2_norm();
    if (out.g1_norm < 1e-12) {
        out.g = -1.0 * first.grad;
        return out;
    }
    const Tensor s = (1.0 / out.g1_norm) * first.grad;
    const Tensor shifted = delta_v + h * s;
    const LossGradient second = image_gradient(session, x0, shifted, e, objective);
    out.z = second.loss - first.loss;

    const double coef = (lambda / h) * nd::sign(out.z);
    out.g = Tensor(first.grad.shape());
    for (std::size_t i = 0; i < out.g.size(); ++i) {
        out.g[i] = -first.grad[i] + coef * (second.grad[i] - first.grad[i]);
    }
    return out;
}

StepResult fdm_step(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& e,
                    const Objective& objective, const TdaeConfig& cfg) {
    FdmGradient fg = fdm_gradient(session, x0, delta_v, e, objective, cfg.lambda, cfg.h);
    Tensor next = project_linf(delta_v - cfg.alpha * nd::sign(fg.g), cfg.eps_v);
    return {std::move(next), std::move(fg)};
}

Tensor dpd_refine(ModelSession& session, const Tensor& x_imu, const Tensor& c, const Tensor& y0, double eps_p,
                  double eta, std::size_t iterations) {
    if (!(eps_p >= 0.0) || !(eta >= 0.0)) throw std::invalid_argument("dpd_refine: eps_p and eta must be >= 0");
    Tensor delta_p = embedding_zero(c);
    for (std::size_t m = 0; m < iterations; ++m) {
        const LossGradient lg = session.grad_c(x_imu, c + delta_p, mse_head(y0));
        delta_p = project_linf(delta_p - eta * nd::sign(lg.grad), eps_p);
    }
    return delta_p;
}

ImmunizationResult tdae_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg) {
    cfg.validate();
    session.model().check_inputs(x0, c);
    const auto start = Clock::now();
    const std::size_t calls_before = session.gradient_calls();
    const Objective objective = make_objective(session.model(), x0, c, cfg.attack_target);
    const bool dpd_enabled = cfg.attack_target == AttackTarget::FullModel;

    ImmunizationResult result;
    Tensor delta_v(x0.shape(), 0.0);
    Tensor delta_p = embedding_zero(c);
    Tensor x_imu = x0;
    result.records.reserve(cfg.iterations);

    for (std::size_t n = 1; n <= cfg.iterations; ++n) {
        const auto iter_start = Clock::now();
        IterationRecord rec;
        if (n == 1) {
            delta_v = initial_perturbation(x0.shape(), cfg);
            x_imu = x0 + delta_v;
        }
        Tensor e = c + delta_p;
        if (dpd_enabled && n % cfg.dpd_period == 0) {
            delta_p = dpd_refine(session, x_imu, c, objective.reference, cfg.eps_p, cfg.eta, cfg.dpd_iterations);
            e = c + delta_p;
            rec.dpd_fired = true;
        }
        StepResult step = fdm_step(session, x0, delta_v, e, objective, cfg);
        delta_v = std::move(step.delta_v);
        x_imu = x0 + delta_v;

        check_budget(delta_v, cfg.eps_v, "delta_v");
        check_budget(delta_p, cfg.eps_p, "delta_p");
        rec.loss = step.diagnostics.loss;
        rec.g1_norm = step.diagnostics.g1_norm;
        rec.z = step.diagnostics.z;
        rec.delta_v_linf = delta_v.max_abs();
        rec.delta_p_linf = delta_p.max_abs();
        rec.gradient_calls = session.gradient_calls() - calls_before;
        rec.seconds = seconds_since(iter_start);
        result.records.push_back(rec);
    }

    result.x_adv = x0 + delta_v;
    result.delta_v = std::move(delta_v);
    result.delta_p = std::move(delta_p);
    result.gradient_calls = session.gradient_calls() - calls_before;
    result.wall_seconds = seconds_since(start);
    return result;
}

ImmunizationResult pgd_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg) {
    cfg.validate();
    session.model().check_inputs(x0, c);
    const auto start = Clock::now();
    const std::size_t calls_before = session.gradient_calls();
    const Objective objective = make_objective(session.model(), x0, c, cfg.attack_target);

    ImmunizationResult result;
    Tensor delta_v(x0.shape(), 0.0);
    result.records.reserve(cfg.iterations);
    for (std::size_t n = 1; n <= cfg.iterations; ++n) {
        const auto iter_start = Clock::now();
        if (n == 1) delta_v = initial_perturbation(x0.shape(), cfg);
        const LossGradient lg = image_gradient(session, x0, delta_v, c, objective);
        delta_v = project_linf(delta_v + cfg.alpha * nd::sign(lg.grad), cfg.eps_v);
        check_budget(delta_v, cfg.eps_v, "delta_v");

        IterationRecord rec;
        rec.loss = lg.loss;
        rec.g1_norm = lg.grad.l2_norm();
        rec.delta_v_linf = delta_v.max_abs();
        rec.gradient_calls = session.gradient_calls() - calls_before;
        rec.seconds = seconds_since(iter_start);
        result.records.push_back(rec);
    }
    result.x_adv = x0 + delta_v;
    result.delta_v = std::move(delta_v);
    result.delta_p = embedding_zero(c);
    result.gradient_calls = session.gradient_calls() - calls_before;
    result.wall_seconds = seconds_since(start);
    return result;
}

Tensor tpa_gradient(ModelSession& session, const Tensor& x0, const Tensor& delta_v, const Tensor& c,
                    const Objective& objective, double lambda, std::size_t samples, double sigma, double h, Rng& rng) {
    if (samples < 1) throw std::invalid_argument("tpa_gradient: need at least one sample");
    if (!(sigma > 0.0) || !(h > 0.0)) throw std::invalid_argument("tpa_gradient: sigma and h must be > 0");

    const LossGradient base = image_gradient(session, x0, delta_v, c, objective);
    Tensor g = -1.0 * base.grad;
    const double coef = lambda / (h * static_cast<double>(samples));
    for (std::size_t k = 0; k < samples; ++k) {
        Tensor neighbour = delta_v;
        for (auto& v : neighbour.data()) v += rng.uniform(-sigma, sigma);
        const LossGradient at = image_gradient(session, x0, neighbour, c, objective);
        const double norm = at.grad.l2_norm();
        Tensor shifted = neighbour;
        if (norm >= 1e-12) shifted = neighbour + (h / norm) * at.grad;
        const LossGradient ahead = image_gradient(session, x0, shifted, c, objective);
        const double sz = nd::sign(ahead.loss - at.loss);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef * sz * (ahead.grad[i] - at.grad[i]);
    }
    return g;
}

ImmunizationResult tpa_immunize(ModelSession& session, const Tensor& x0, const Tensor& c, const TdaeConfig& cfg) {
    cfg.validate();
    session.model().check_inputs(x0, c);
    const auto start = Clock::now();
    const std::size_t calls_before = session.gradient_calls();
    const Objective objective = make_objective(session.model(), x0, c, cfg.attack_target);
    Rng rng(mix_seed(cfg.seed, 0x7A));

    ImmunizationResult result;
    Tensor delta_v(x0.shape(), 0.0);
    result.records.reserve(cfg.iterations);
    for (std::size_t n = 1; n <= cfg.iterations; ++n) {
        const auto iter_start = Clock::now();
        if (n == 1) delta_v = initial_perturbation(x0.shape(), cfg);
        const Tensor g = tpa_gradient(session, x0, delta_v, c, objective, cfg.lambda, cfg.tpa_samples,
                                      cfg.tpa_radius, cfg.h, rng);
        delta_v = project_linf(delta_v - cfg.alpha * nd::sign(g), cfg.eps_v);
        check_budget(delta_v, cfg.eps_v, "delta_v");

        IterationRecord rec;
        rec.delta_v_linf = delta_v.max_abs();
        rec.gradient_calls = session.gradient_calls() - calls_before;
        rec.seconds = seconds_since(iter_start);
        result.records.push_back(rec);
    }
    result.x_adv = x0 + delta_v;
    result.delta_v = std::move(delta_v);
    result.delta_p = embedding_zero(c);
    result.gradient_calls = session.gradient_calls() - calls_before;
    result.wall_seconds = seconds_since(start);
    return result;
}

}  // namespace tdae::immunize
