#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/link.hpp"
#include "fuseate/nuisance.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>

namespace fuseate {

inline constexpr double kZ95 = 1.96;

enum class Method { theta0, theta_a, theta_b };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct EstimateResult {
    Method method = Method::theta0;
    double estimate = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long n0 = 0;
    long n1 = 0;
    std::map<std::string, double> diagnostics;
};

/// Residual-on-residual ratio over primary units,
///   sum (1-S) (v - outcome_mean) (t - propensity) / sum (1-S) (t - propensity)^2,
/// with SE = sqrt(Vhat / n), Vhat = mean(psi^2) / D^2 and D the denominator / n.
/// `outcome_mean` and `propensity` are indexed by unit; S=1 entries are ignored.
EstimateResult partially_linear_estimate(const Sample& sample, const Eigen::VectorXd& outcome_mean,
                                         const Eigen::VectorXd& propensity, Method tag);

/// theta0: primary data only.
EstimateResult estimate_theta_primary(const Sample& sample, const NuisanceFit& fit);

/// theta_a: both studies, with alpha supplied by a fully known link. The sums
/// are multiplied through by sigma_Y^2, which leaves the ratio unchanged and
/// makes the n1 = 0 case coincide with theta0 bit for bit.
EstimateResult estimate_theta_fused_known_alpha(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link);

struct TwoStageFit {
    LinkFunction alpha;
    LinkFunction beta;
    bool beta_fixed = false;
    /// Per unit; S=1 entries are NaN.
    Eigen::VectorXd mu_w0;
    /// Cross-fitted alpha(x) mu_W(x,0) + beta(x) on primary units; S=1 entries are NaN.
    Eigen::VectorXd mu_yb;
};

/// mu_W(x,0) = sum_t P(T=t|x,S=0) nu_W^t(x) from the auxiliary arm fits, then
/// least squares of Y on alpha(x) mu_W(x,0) + beta(x) over the primary units.
/// Predictions use the primary fold split of `fit`; the reported (alpha, beta)
/// are fit on every primary unit.
///
/// Throws InputError without auxiliary units or with too few primary units and
/// IdentificationError when the second-stage design is rank deficient.
TwoStageFit two_stage_outcome_fit(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link);

/// theta_b: theta0's ratio with the two-stage outcome regression.
EstimateResult estimate_theta_two_stage(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link);

/// Dispatch on `method`. `link` is ignored by theta0.
EstimateResult estimate(Method method, const Sample& sample, const NuisanceFit& fit, const LinkSpec& link);

}  // namespace fuseate
