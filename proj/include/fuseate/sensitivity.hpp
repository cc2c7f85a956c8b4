#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/estimators.hpp"
#include "fuseate/link.hpp"
#include "fuseate/nuisance.hpp"
#include "fuseate/scores.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace fuseate {

/// Category ranges of an ordinal severity scale. An unset `high` marks an
/// open-ended top category; `scale_max`, when given, closes it.
struct SeverityThresholds {
    struct Range {
        double low = 0.0;
        std::optional<double> high;
        bool operator==(const Range&) const = default;
    };
    std::vector<Range> ranges;
    bool anchored_at_zero = true;
    std::optional<double> scale_max;

    /// Throws ConfigError unless ranges are increasing, non-overlapping and
    /// low < high, with only the last range open.
    void validate() const;
    bool operator==(const SeverityThresholds&) const = default;
};

struct ScaleLink {
    double alpha = 0.0;
    double beta = 0.0;
    /// Category pairs that entered the fit.
    int pairs_used = 0;
};

/// Least squares of scale-a category midpoints on the matching scale-b
/// midpoints: a ~ alpha b + beta. A pair with an open side is dropped unless
/// that scale has `scale_max`. With `through_origin` the fit has no intercept
/// (beta = 0), which requires both scales anchored at zero.
///
/// Throws InputError on mismatched category counts or too few usable pairs.
ScaleLink scale_link_from_thresholds(const SeverityThresholds& a, const SeverityThresholds& b, bool through_origin);

struct BiasValue {
    /// E[B(X) | S=1]
    double conditional = 0.0;
    double conditional_se = 0.0;
    /// E[B(X) | S=1] P(S=1)
    double weighted = 0.0;
    double weighted_se = 0.0;
    double p_s1 = 0.0;
};

/// Misspecification bias of the fused estimator under a wrong link slope,
/// B(X) = ((alpha_mis(X) - alpha_star(X)) / alpha_star(X)) theta(X), averaged over the
/// auxiliary covariate law of `cfg` (draws weighted by P(S=1|X)). Both the
/// conditional and the P(S=1)-weighted conventions are returned.
///
/// Throws PrecisionError for mc_draws < 1e4 and LinkDegeneracyError when
/// |alpha_star| < kAlphaMin at a draw.
BiasValue misspecification_bias(const DgpConfig& cfg, const CovariateFunction& alpha_mis,
                                const CovariateFunction& alpha_star, const CovariateFunction& theta_fn,
                                long mc_draws, std::uint64_t seed);

/// Same on the empirical S=1 covariates of `sample`; weighted uses n1/n.
BiasValue misspecification_bias(const Sample& sample, const CovariateFunction& alpha_mis,
                                const CovariateFunction& alpha_star, const CovariateFunction& theta_fn);

/// Population limit of the fused estimator when it is handed `alpha_mis`
/// (true nuisances, exact noise variances). Monte Carlo over X.
MonteCarloValue fused_limit(const DgpConfig& cfg, const CovariateFunction& alpha_mis, long mc_draws,
                            std::uint64_t seed);

/// Fused estimates with alpha scaled by each grid value.
std::vector<std::pair<double, EstimateResult>> sensitivity_sweep(const Sample& sample, const NuisanceFit& fit,
                                                                 const LinkSpec& link_base,
                                                                 const std::vector<double>& alpha_scale_grid);

}  // namespace fuseate
