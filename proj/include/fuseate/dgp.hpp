#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace fuseate {

using CovariateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Numerically stable logistic function. Never overflows.
double expit(double x) noexcept;

/// Generative parameters of the fused-study simulation.
///
/// Selection:  P(S=1|X) = expit(a0 + a1 X1 + a2 X2)
/// Treatment:  P(T=1|X,S) = 0.5 if S=0, expit(zeta1 X1) if S=1
/// Auxiliary:  W = (gamma0 + gamma1 X1 + gamma2 X2) T + b0 + b1 X1 + b2 X2 + b3 X3 + N(0, sigma_w^2)
/// Primary:    Y = alpha(X) * E[W | X, T] + N(0, sigma_y^2),  alpha(X) = rho0 + rho1 X1
///
/// The b coefficients are the baseline of W; they are named b to keep them
/// apart from the link shift beta(X).
struct DgpConfig {
    int p = 10;
    long n = 2000;
    double a0 = 0.0, a1 = 0.5, a2 = -0.5;
    double zeta1 = 0.5;
    double gamma0 = 1.0, gamma1 = 0.5, gamma2 = -0.5;
    double b0 = 0.5, b1 = 1.0, b2 = -1.0, b3 = 0.5;
    double rho0 = 1.0, rho1 = 0.3;
    double sigma_w = 1.0, sigma_y = 1.0;

    /// The reference configuration used throughout the tests and docs.
    static DgpConfig benchmark();

    /// Benchmark with rho1 = gamma1 = gamma2 = 0: alpha(X) = rho0 never
    /// vanishes and the treatment effect is the constant rho0 * gamma0, so the
    /// fused estimator targets the primary ATE.
    static DgpConfig constant_link_benchmark();

    /// Throws ConfigError on p < 3, n < 1, nonpositive or nonfinite noise
    /// scales, or nonfinite coefficients.
    void validate() const;

    // Oracle quantities. `x` holds at least the first three covariates.
    double selection_probability(std::span<const double> x) const;
    double treatment_probability(std::span<const double> x, int s) const;
    double alpha(std::span<const double> x) const { return rho0 + rho1 * x[0]; }
    double w_effect(std::span<const double> x) const { return gamma0 + gamma1 * x[0] + gamma2 * x[1]; }
    double w_baseline(std::span<const double> x) const {
        return b0 + b1 * x[0] + b2 * x[1] + b3 * x[2];
    }
    /// Noiseless W mean for arm t.
    double w_mean(std::span<const double> x, int t) const { return w_baseline(x) + w_effect(x) * t; }
    /// Conditional treatment effect on Y: alpha(X) * (gamma0 + gamma1 X1 + gamma2 X2).
    double cate(std::span<const double> x) const { return alpha(x) * w_effect(x); }
    /// E[V | X, S=s, T=t].
    double outcome_mean(std::span<const double> x, int s, int t) const;
    /// E[V | X, S=s], averaged over the stratum's treatment assignment.
    double stratum_mean(std::span<const double> x, int s) const;
    double noise_sd(int s) const { return s == 0 ? sigma_y : sigma_w; }

    bool operator==(const DgpConfig&) const = default;
};

/// One unit's record (X, S, T, V); V is Y when s = 0 and W when s = 1.
struct Observation {
    Eigen::VectorXd x;
    int s = 0;
    int t = 0;
    double v = 0.0;
};

/// Column-oriented collection of observations. Rows of `x` are units.
struct Sample {
    CovariateMatrix x;
    std::vector<std::uint8_t> s;
    std::vector<std::uint8_t> t;
    std::vector<double> v;

    Sample() = default;
    Sample(long n, int p);

    long size() const { return static_cast<long>(v.size()); }
    int dim() const { return static_cast<int>(x.cols()); }
    long count_stratum(int stratum) const;
    long n0() const { return count_stratum(0); }
    long n1() const { return count_stratum(1); }
    long count_cell(int stratum, int arm) const;

    std::span<const double> covariates(long i) const {
        return {x.row(i).data(), static_cast<std::size_t>(x.cols())};
    }
    Observation observation(long i) const;

    static Sample from_observations(const std::vector<Observation>& obs);

    /// Throws InputError when sizes disagree, s/t are not binary, or v is not finite.
    void validate() const;

    bool operator==(const Sample& other) const;
};

/// Draws cfg.n units. Deterministic in (cfg, seed).
Sample generate_dataset(const DgpConfig& cfg, std::uint64_t seed);

/// Draws units from the same law but keeps the first n0 primary and n1
/// auxiliary units, i.e. samples X | S with fixed stratum sizes.
Sample generate_fused_dataset(const DgpConfig& cfg, long n0, long n1, std::uint64_t seed);

struct MonteCarloValue {
    double value = 0.0;
    double std_error = 0.0;
};

/// E[(rho0 + rho1 X1)(gamma0 + gamma1 X1 + gamma2 X2) | S=0] by drawing X and
/// weighting each draw by P(S=0|X). Requires mc_draws >= 1e4.
MonteCarloValue true_ate(const DgpConfig& cfg, long mc_draws, std::uint64_t seed);

}  // namespace fuseate
