#include "fuseate/scores.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/random.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fuseate {

namespace {

constexpr double kDeterminantFloor = 1e-12;

std::span<const double> span_of(const Observation& obs) {
    return {obs.x.data(), static_cast<std::size_t>(obs.x.size())};
}

double delta0(const ScoreContext& ctx, std::span<const double> x, int t, double v) {
    const double r_t = t - ctx.mu_t0(x);
    return (v - ctx.mu_y0(x) - ctx.theta_at(x) * r_t) * r_t / ctx.sigma_y_sq;
}

double checked_alpha(const ScoreContext& ctx, std::span<const double> x) {
    const double a = ctx.alpha(x);
    if (!(std::abs(a) >= kAlphaMin)) {
        throw LinkDegeneracyError("|alpha(x)| = " + std::to_string(std::abs(a)) + " is below " +
                                  std::to_string(kAlphaMin));
    }
    return a;
}

double delta1(const ScoreContext& ctx, std::span<const double> x, double a, int t, double v) {
    const double r_t = t - ctx.mu_t1(x);
    return (a * (v - ctx.mu_w1(x)) - ctx.theta_at(x) * r_t) * r_t / (a * a * ctx.sigma_w_sq);
}

double alpha_score(const ScoreContext& ctx, std::span<const double> x, double a, int t, double v) {
    const double r_t = t - ctx.mu_t1(x);
    const double th = ctx.theta_at(x);
    return (th * r_t - a * (v - ctx.mu_w1(x))) / (a * a * ctx.sigma_w_sq) * th * r_t / a;
}

// Below the determinant floor alpha carries no information: the theta entry
// is 1/m(0,0) and the alpha entry is infinite.
Eigen::Matrix2d invert(const Eigen::Matrix2d& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Eigen::Matrix2d inv;
    if (!(std::abs(det) > kDeterminantFloor)) {
        inv << 1.0 / m(0, 0), 0.0, 0.0, std::numeric_limits<double>::infinity();
        return inv;
    }
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

}  // namespace

ScoreContext ScoreContext::oracle(const DgpConfig& cfg, double theta) {
    ScoreContext ctx;
    ctx.theta = theta;
    ctx.alpha = [cfg](std::span<const double> x) { return cfg.alpha(x); };
    ctx.beta = [](std::span<const double>) { return 0.0; };
    ctx.mu_y0 = [cfg](std::span<const double> x) { return cfg.stratum_mean(x, 0); };
    ctx.mu_w1 = [cfg](std::span<const double> x) { return cfg.stratum_mean(x, 1); };
    ctx.mu_t0 = [cfg](std::span<const double> x) { return cfg.treatment_probability(x, 0); };
    ctx.mu_t1 = [cfg](std::span<const double> x) { return cfg.treatment_probability(x, 1); };
    ctx.sigma_y_sq = cfg.sigma_y * cfg.sigma_y;
    ctx.sigma_w_sq = cfg.sigma_w * cfg.sigma_w;
    return ctx;
}

void ScoreContext::validate() const {
    if (!alpha || !mu_y0 || !mu_w1 || !mu_t0 || !mu_t1) throw ConfigError("ScoreContext: missing nuisance function");
    if (!(sigma_y_sq > 0.0) || !(sigma_w_sq > 0.0)) throw ConfigError("ScoreContext: noise variances must be positive");
}

double score_primary(const Observation& obs, const ScoreContext& ctx) {
    if (obs.s == 1) return 0.0;
    return delta0(ctx, span_of(obs), obs.t, obs.v);
}

double score_fused(const Observation& obs, const ScoreContext& ctx) {
    if (obs.s == 0) return delta0(ctx, span_of(obs), obs.t, obs.v);
    const auto x = span_of(obs);
    return delta1(ctx, x, checked_alpha(ctx, x), obs.t, obs.v);
}

Eigen::Vector2d score_joint(const Observation& obs, const ScoreContext& ctx) {
    if (obs.s == 0) return {delta0(ctx, span_of(obs), obs.t, obs.v), 0.0};
    const auto x = span_of(obs);
    const double a = checked_alpha(ctx, x);
    return {delta1(ctx, x, a, obs.t, obs.v), alpha_score(ctx, x, a, obs.t, obs.v)};
}

double PointInformation::vb() const {
    const double det = joint(0, 0) * joint(1, 1) - joint(0, 1) * joint(1, 0);
    if (det > kDeterminantFloor) return joint(1, 1) / det;
    return 1.0 / joint(0, 0);
}

PointInformation point_information(const DgpConfig& cfg, const ScoreContext& ctx, std::span<const double> x) {
    PointInformation info;
    const double pi1 = cfg.selection_probability(x);
    const double a = ctx.alpha(x);
    for (int s = 0; s < 2; ++s) {
        const double ps = s == 0 ? 1.0 - pi1 : pi1;
        const double e = cfg.treatment_probability(x, s);
        const double sd = cfg.noise_sd(s);
        for (int t = 0; t < 2; ++t) {
            const double pt = (t == 1 ? e : 1.0 - e) * ps;
            const double m = cfg.outcome_mean(x, s, t);
            // Scores are affine in v, so E[R R^T | x, s, t] = R(m) R(m)^T + g g^T
            // with g = R(m + sd) - R(m).
            Eigen::Vector2d at_mean, at_shift;
            if (s == 0) {
                at_mean = {delta0(ctx, x, t, m), 0.0};
                at_shift = {delta0(ctx, x, t, m + sd), 0.0};
            } else {
                at_mean = {delta1(ctx, x, a, t, m), alpha_score(ctx, x, a, t, m)};
                at_shift = {delta1(ctx, x, a, t, m + sd), alpha_score(ctx, x, a, t, m + sd)};
            }
            const Eigen::Vector2d g = at_shift - at_mean;
            const Eigen::Matrix2d second = at_mean * at_mean.transpose() + g * g.transpose();
            info.joint += pt * second;
            (s == 0 ? info.i0 : info.i1) += pt * second(0, 0);
        }
    }
    return info;
}

VarianceBounds variance_bound(const DgpConfig& cfg, const ScoreContext& ctx, long mc_draws, std::uint64_t seed) {
    cfg.validate();
    ctx.validate();
    if (mc_draws < 1000) throw PrecisionError("variance_bound: mc_draws must be >= 1e3");
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(cfg.p));
    double sum_i0 = 0.0, sum_ia = 0.0, sum_ib = 0.0;
    Eigen::Matrix2d sum_joint = Eigen::Matrix2d::Zero();
    for (long d = 0; d < mc_draws; ++d) {
        for (double& xj : x) xj = rng.normal();
        const auto info = point_information(cfg, ctx, x);
        sum_i0 += info.i0;
        sum_ia += info.i0 + info.i1;
        sum_ib += 1.0 / info.vb();
        sum_joint += info.joint;
    }
    const double n = static_cast<double>(mc_draws);
    VarianceBounds out;
    out.v0 = n / sum_i0;
    out.va = n / sum_ia;
    out.vb = n / sum_ib;
    out.sigma_b = invert(sum_joint / n);
    out.draws = mc_draws;
    if (!std::isfinite(out.v0) || !std::isfinite(out.va) || !std::isfinite(out.vb)) {
        throw NumericalError("variance_bound: non-finite bound");
    }
    return out;
}

VarianceBounds variance_bound(const Sample& sample, const NuisanceFit& fit, const LinkFunction& alpha, double theta) {
    const auto r = residuals(sample, fit);
    const long n = sample.size();
    if (n == 0) throw InputError("variance_bound: empty sample");
    double sum_i0 = 0.0, sum_i1 = 0.0;
    Eigen::Matrix2d sum_joint = Eigen::Matrix2d::Zero();
    for (long i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        Eigen::Vector2d score;
        if (sample.s[u] == 0) {
            const double d0 = (r.r_v(i) - theta * r.r_t(i)) * r.r_t(i) / fit.sigma_y_sq;
            sum_i0 += d0 * d0;
            score = {d0, 0.0};
        } else {
            const double a = alpha(sample.covariates(i), i);
            if (!(std::abs(a) >= kAlphaMin)) throw LinkDegeneracyError("variance_bound: |alpha| below minimum at unit " + std::to_string(i));
            const double resid = a * r.r_v(i) - theta * r.r_t(i);
            const double d1 = resid * r.r_t(i) / (a * a * fit.sigma_w_sq);
            sum_i1 += d1 * d1;
            score = {d1, -resid / (a * a * fit.sigma_w_sq) * theta * r.r_t(i) / a};
        }
        if (!score.allFinite()) throw ConsistencyError("variance_bound: missing prediction for unit " + std::to_string(i));
        sum_joint += score * score.transpose();
    }
    const double nd = static_cast<double>(n);
    VarianceBounds out;
    out.v0 = nd / sum_i0;
    out.va = nd / (sum_i0 + sum_i1);
    out.sigma_b = invert(sum_joint / nd);
    out.vb = out.sigma_b(0, 0);
    out.draws = n;
    return out;
}

}  // namespace fuseate
