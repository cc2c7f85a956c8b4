#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/regression.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace fuseate {

struct NuisanceOptions {
    /// 1 disables sample splitting (in-sample predictions).
    int folds = 5;
    Basis outcome_basis = Basis::raw;
    Basis propensity_basis = Basis::raw;
    std::optional<double> ridge_lambda;
    double epsilon_clip = 0.01;
    /// Known P(T=1 | S=0) for a randomized primary study; skips estimating it.
    std::optional<double> primary_propensity;
    /// Fit mu_W(X,1) and mu_T(X,1) (needed by the fused estimator).
    bool auxiliary_marginal = true;
    /// Fit mu_S(X).
    bool selection = true;
    /// Seed of the fold assignment.
    std::uint64_t seed = 0;
};

/// Models trained with one fold held out (or on everything when folds = 1).
struct FoldModels {
    std::optional<RegressionModel> mu_y0;
    std::optional<RegressionModel> mu_w1;
    std::optional<RegressionModel> mu_t0;
    std::optional<RegressionModel> mu_t1;
    std::optional<RegressionModel> mu_s;
};

/// Cross-fitted nuisance functions. Immutable once built.
struct NuisanceFit {
    NuisanceOptions options;
    std::vector<int> fold;
    std::vector<FoldModels> fold_models;

    /// Per-arm in-sample outcome fits on the outcome basis within each
    /// stratum, index = arm. The auxiliary pair feeds the two-stage outcome
    /// regression. The noise variances come from the same fits, except that an
    /// arm with fewer than 2(d+1) units falls back to raw covariates and then
    /// to its mean.
    std::array<std::optional<RegressionModel>, 2> primary_arms;
    std::array<std::optional<RegressionModel>, 2> auxiliary_arms;

    /// NaN when the stratum is absent.
    double sigma_y_sq = 0.0;
    double sigma_w_sq = 0.0;

    /// Out-of-fold predictions per unit: stratum outcome mean, clipped
    /// propensity, clipped selection probability (empty when not fit). Entries
    /// of S=1 units stay NaN when auxiliary_marginal is off.
    Eigen::VectorXd mu_v;
    Eigen::VectorXd mu_t;
    Eigen::VectorXd mu_s;

    long clipped_propensities = 0;
    long clipped_selection = 0;

    int folds() const { return static_cast<int>(fold_models.size()); }
    long size() const { return static_cast<long>(fold.size()); }
};

/// Fits mu_V(X,0), mu_V(X,1), mu_T(X,0), mu_T(X,1) and mu_S(X) on K-fold
/// training splits (stratified by study and arm) and estimates the noise
/// variances.
///
/// Throws InputError when K exceeds a present stratum's size and
/// StratificationError naming the first empty fold x stratum x arm cell.
NuisanceFit cross_fit(const Sample& sample, const NuisanceOptions& options);

struct Residuals {
    Eigen::VectorXd r_v;
    Eigen::VectorXd r_t;
};

/// r_V = v - mu_V(x, s), r_T = t - mu_T(x, s) with the stored (clipped) propensity.
Residuals residuals(const Sample& sample, const NuisanceFit& fit);

}  // namespace fuseate
