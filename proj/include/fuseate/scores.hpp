#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/link.hpp"
#include "fuseate/nuisance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

namespace fuseate {

using CovariateFunction = std::function<double(std::span<const double>)>;

/// Ingredients of the efficient scores. `theta` is the scalar target; when
/// `theta_fn` is set it replaces `theta` pointwise (the conditional effect).
struct ScoreContext {
    double theta = 0.0;
    CovariateFunction theta_fn;
    CovariateFunction alpha;
    CovariateFunction beta;
    CovariateFunction mu_y0;
    CovariateFunction mu_w1;
    CovariateFunction mu_t0;
    CovariateFunction mu_t1;
    double sigma_y_sq = 1.0;
    double sigma_w_sq = 1.0;

    /// True nuisances of the simulation at scalar theta.
    static ScoreContext oracle(const DgpConfig& cfg, double theta);

    double theta_at(std::span<const double> x) const { return theta_fn ? theta_fn(x) : theta; }

    /// Throws ConfigError on a missing function or nonpositive variance.
    void validate() const;
};

/// (1-s) Delta0, Delta0 = (v - mu_Y(x,0) - theta (t - mu_T(x,0))) (t - mu_T(x,0)) / sigma_Y^2.
double score_primary(const Observation& obs, const ScoreContext& ctx);

/// s Delta1 + (1-s) Delta0,
/// Delta1 = (alpha (v - mu_W(x,1)) - theta (t - mu_T(x,1))) (t - mu_T(x,1)) / (alpha^2 sigma_W^2).
/// Throws LinkDegeneracyError when an auxiliary unit has |alpha(x)| < kAlphaMin.
double score_fused(const Observation& obs, const ScoreContext& ctx);

/// (score_fused, alpha score). The alpha score is
/// s ((theta r_T - alpha r_W) / (alpha^2 sigma_W^2)) theta r_T / alpha.
Eigen::Vector2d score_joint(const Observation& obs, const ScoreContext& ctx);

/// Conditional information at one covariate point:
///   i0 = E[Delta0^2 | S=0, x] P(S=0|x),  i1 = E[Delta1^2 | S=1, x] P(S=1|x),
///   joint = E[R_b R_b^T | x].
/// Conditional moments are exact: T is enumerated and the noise enters
/// through its variance.
struct PointInformation {
    double i0 = 0.0;
    double i1 = 0.0;
    Eigen::Matrix2d joint = Eigen::Matrix2d::Zero();

    double v0() const { return 1.0 / i0; }
    double va() const { return 1.0 / (i0 + i1); }
    /// (1,1) entry of joint^-1 by the 2x2 closed form. Below a determinant of
    /// 1e-12 the alpha coordinate is treated as uninformative: 1 / joint(0,0).
    double vb() const;
};

PointInformation point_information(const DgpConfig& cfg, const ScoreContext& ctx, std::span<const double> x);

struct VarianceBounds {
    double v0 = 0.0;
    double va = 0.0;
    double vb = 0.0;
    /// Inverse of the marginal E[R_b R_b^T]. When that matrix is singular
    /// (no auxiliary mass) the alpha entry is +inf and the theta entry is
    /// the primary-only bound.
    Eigen::Matrix2d sigma_b = Eigen::Matrix2d::Zero();
    long draws = 0;
};

/// Marginal bounds V = 1 / E_X[I(X)] by Monte Carlo over the covariate law.
/// vb marginalizes 1 / Sigma_b(X)_{11} the same way. Requires mc_draws >= 1e3.
VarianceBounds variance_bound(const DgpConfig& cfg, const ScoreContext& ctx, long mc_draws, std::uint64_t seed);

/// Plug-in version on a fitted sample: I0 = mean (1-S) Delta0^2 etc. with
/// out-of-fold residuals, alpha from `alpha`, scalar theta. Here vb is the
/// (1,1) entry of the inverted marginal joint matrix.
VarianceBounds variance_bound(const Sample& sample, const NuisanceFit& fit, const LinkFunction& alpha,
                              double theta);

}  // namespace fuseate
