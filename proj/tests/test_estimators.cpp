#include "doctest.h"
#include "support.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/estimators.hpp"
#include "fuseate/nuisance.hpp"

#include <cmath>
#include <vector>

using namespace fuseate;

namespace {

NuisanceOptions randomized(int folds = 5, std::uint64_t seed = 1) {
    NuisanceOptions o;
    o.folds = folds;
    o.primary_propensity = 0.5;
    o.seed = seed;
    return o;
}

Eigen::VectorXd treatment(const Sample& sample) {
    Eigen::VectorXd t(sample.size());
    for (long i = 0; i < sample.size(); ++i) t(i) = sample.t[i];
    return t;
}

}  // namespace

TEST_CASE("method names") {
    CHECK(to_string(Method::theta_b) == "theta_b");
    CHECK(method_from_string("theta_a") == Method::theta_a);
    CHECK_THROWS_AS(method_from_string("theta_c"), ConfigError);
}

TEST_CASE("exact ratio on noiseless residuals") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 400, 50, 1);
    Eigen::VectorXd mu(sample.size()), e(sample.size());
    Sample exact = sample;
    for (long i = 0; i < sample.size(); ++i) {
        mu(i) = 0.3 * sample.x(i, 0) - 1.0;
        e(i) = 0.2 + 0.6 * (i % 7) / 6.0;
        exact.v[i] = 1.75 * (sample.t[i] - e(i)) + mu(i);
    }
    const auto r = partially_linear_estimate(exact, mu, e, Method::theta0);
    CHECK(r.estimate == doctest::Approx(1.75).epsilon(1e-14));
    CHECK(r.std_error < 1e-12);
    CHECK(r.n0 == 400);
    CHECK(r.n1 == 50);
}

TEST_CASE("zero treatment residuals are a degenerate denominator") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 100, 0, 2);
    const Eigen::VectorXd mu = Eigen::VectorXd::Zero(sample.size());
    CHECK_THROWS_AS(partially_linear_estimate(sample, mu, treatment(sample), Method::theta0), EstimationError);
}

TEST_CASE("confidence interval arithmetic") {
    auto cfg = DgpConfig::benchmark();
    cfg.n = 3000;
    const auto sample = generate_dataset(cfg, 3);
    const auto fit = cross_fit(sample, randomized());
    const auto r = estimate_theta_primary(sample, fit);
    CHECK(r.ci_low == doctest::Approx(r.estimate - 1.96 * r.std_error).epsilon(1e-15));
    CHECK(r.ci_high == doctest::Approx(r.estimate + 1.96 * r.std_error).epsilon(1e-15));
    CHECK(r.diagnostics.count("denominator") == 1);
    CHECK(r.diagnostics.at("denominator") == doctest::Approx(0.25 * sample.n0() / sample.size()));
}

TEST_CASE("location shift of the outcome leaves theta0 unchanged") {
    auto cfg = DgpConfig::benchmark();
    cfg.n = 2500;
    const auto sample = generate_dataset(cfg, 4);
    Sample shifted = sample;
    for (auto& v : shifted.v) v += 12.5;
    const auto options = randomized(5, 9);
    const auto a = estimate_theta_primary(sample, cross_fit(sample, options));
    const auto b = estimate_theta_primary(shifted, cross_fit(shifted, options));
    CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(1e-9));
}

TEST_CASE("fused estimator with no auxiliary units is theta0") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 1500, 0, 5);
    NuisanceOptions options = randomized();
    options.primary_propensity.reset();
    const auto fit = cross_fit(sample, options);
    const auto a = estimate_theta_primary(sample, fit);
    const auto b = estimate_theta_fused_known_alpha(sample, fit, LinkSpec::from_config(DgpConfig::benchmark()));
    CHECK(std::abs(a.estimate - b.estimate) <= 1e-12);
    CHECK(std::abs(a.std_error - b.std_error) <= 1e-12);
}

TEST_CASE("fused estimator is invariant to rescaling the auxiliary outcome") {
    const auto cfg = DgpConfig::benchmark();
    const auto sample = generate_fused_dataset(cfg, 1000, 1500, 6);
    const double k = 3.0;
    Sample scaled = sample;
    for (long i = 0; i < scaled.size(); ++i)
        if (scaled.s[i] == 1) scaled.v[i] *= k;
    const auto options = randomized(5, 10);
    const auto fit = cross_fit(sample, options);
    const auto fit_k = cross_fit(scaled, options);
    CHECK(fit_k.sigma_w_sq == doctest::Approx(k * k * fit.sigma_w_sq).epsilon(1e-10));

    // Y = alpha W = (alpha / k)(k W)
    const auto link = LinkSpec::from_config(cfg);
    const auto link_k = LinkSpec::fully_known(link.alpha->scaled(1.0 / k), *link.beta);
    const auto a = estimate_theta_fused_known_alpha(sample, fit, link);
    const auto b = estimate_theta_fused_known_alpha(scaled, fit_k, link_k);
    CHECK(std::abs(a.estimate - b.estimate) <= 1e-10);

    // Scaling alpha up by k with the same W-scaling is not an invariance.
    const auto link_up = LinkSpec::fully_known(link.alpha->scaled(k), *link.beta);
    const auto c = estimate_theta_fused_known_alpha(scaled, fit_k, link_up);
    CHECK(std::abs(a.estimate - c.estimate) > 1e-6);
}

TEST_CASE("fused estimator rejects a vanishing link") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 300, 300, 7);
    const auto fit = cross_fit(sample, randomized());
    const auto zero = LinkSpec::fully_known(LinkFunction::constant(5e-4), LinkFunction::constant(0.0));
    CHECK_THROWS_AS(estimate_theta_fused_known_alpha(sample, fit, zero), LinkDegeneracyError);
    CHECK_THROWS_AS(estimate_theta_fused_known_alpha(sample, fit, LinkSpec::unknown(FunctionForm::constant,
                                                                                    FunctionForm::constant)),
                    ConfigError);
    NuisanceOptions no_marginal = randomized();
    no_marginal.auxiliary_marginal = false;
    const auto thin = cross_fit(sample, no_marginal);
    CHECK_THROWS_AS(estimate_theta_fused_known_alpha(sample, thin, LinkSpec::from_config(DgpConfig::benchmark())),
                    ConsistencyError);
}

TEST_CASE("two-stage fit recovers an exact link") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 600, 800, 8);
    const auto fit = cross_fit(sample, randomized(5, 11));
    const auto probe = two_stage_outcome_fit(sample, fit, LinkSpec::unknown(FunctionForm::constant,
                                                                            FunctionForm::constant));
    Sample exact = sample;
    for (long i = 0; i < exact.size(); ++i)
        if (exact.s[i] == 0) exact.v[i] = 2.0 * probe.mu_w0(i) + 3.0;

    SUBCASE("alpha and beta unknown") {
        const auto stage = two_stage_outcome_fit(exact, fit, LinkSpec::unknown(FunctionForm::constant,
                                                                               FunctionForm::constant));
        CHECK(std::abs(stage.alpha.coefficients(0) - 2.0) <= 1e-10);
        CHECK(std::abs(stage.beta.coefficients(0) - 3.0) <= 1e-10);
        for (long i = 0; i < exact.size(); ++i)
            if (exact.s[i] == 0) CHECK(stage.mu_yb(i) == doctest::Approx(exact.v[i]).epsilon(1e-10));
    }
    SUBCASE("beta known to be zero") {
        Sample no_shift = exact;
        for (long i = 0; i < no_shift.size(); ++i)
            if (no_shift.s[i] == 0) no_shift.v[i] -= 3.0;
        const auto stage = two_stage_outcome_fit(
            no_shift, fit, LinkSpec::beta_known(LinkFunction::constant(0.0), FunctionForm::constant));
        CHECK(std::abs(stage.alpha.coefficients(0) - 2.0) <= 1e-10);
        CHECK(stage.beta_fixed);
        CHECK(stage.beta == LinkFunction::constant(0.0));
    }
}

TEST_CASE("two-stage fit errors") {
    const auto sample = generate_fused_dataset(DgpConfig::benchmark(), 300, 300, 9);
    const auto fit = cross_fit(sample, randomized());
    CHECK_THROWS_AS(two_stage_outcome_fit(sample, fit, LinkSpec::from_config(DgpConfig::benchmark())), ConfigError);

    // alpha mu_W and beta are collinear when every covariate is zero
    Sample flat = sample;
    flat.x.setZero();
    NuisanceOptions ridge = randomized();
    ridge.ridge_lambda = 1.0;
    const auto flat_fit = cross_fit(flat, ridge);
    CHECK_THROWS_AS(two_stage_outcome_fit(flat, flat_fit,
                                          LinkSpec::unknown(FunctionForm::constant, FunctionForm::constant)),
                    IdentificationError);

    const auto primary_only = generate_fused_dataset(DgpConfig::benchmark(), 300, 0, 10);
    const auto po_fit = cross_fit(primary_only, randomized());
    CHECK_THROWS_AS(two_stage_outcome_fit(primary_only, po_fit,
                                          LinkSpec::unknown(FunctionForm::constant, FunctionForm::constant)),
                    InputError);
}

TEST_CASE("two-stage with the direct outcome regression is theta0") {
    auto cfg = DgpConfig::benchmark();
    cfg.n = 2000;
    const auto sample = generate_dataset(cfg, 12);
    const auto fit = cross_fit(sample, randomized());
    const auto a = estimate_theta_primary(sample, fit);
    const auto b = partially_linear_estimate(sample, fit.mu_v, fit.mu_t, Method::theta_b);
    CHECK(a.estimate == b.estimate);
    CHECK(a.std_error == b.std_error);
}

TEST_CASE("noiseless well-specified two-stage estimate is exact") {
    // With a treatment effect the arm indicator itself is variation the
    // outcome regression cannot absorb, so exactness needs a null effect.
    auto cfg = testsupport::noiseless(DgpConfig::benchmark());
    cfg.gamma0 = cfg.gamma1 = cfg.gamma2 = 0.0;
    const auto sample = generate_fused_dataset(cfg, 500, 500, 13);
    NuisanceOptions options = randomized();
    options.ridge_lambda = 0.0;
    const auto fit = cross_fit(sample, options);
    const auto r = estimate_theta_two_stage(sample, fit, LinkSpec::unknown(FunctionForm::linear_x1,
                                                                           FunctionForm::linear_x1));
    CHECK(std::abs(r.estimate - true_ate(cfg, 10000, 1).value) <= 1e-8);
    CHECK(r.diagnostics.at("alpha_hat_0") == doctest::Approx(cfg.rho0).epsilon(1e-8));
    CHECK(r.diagnostics.at("alpha_hat_1") == doctest::Approx(cfg.rho1).epsilon(1e-8));
}

TEST_CASE("two-stage link estimate matches a least-squares oracle") {
    const auto cfg = DgpConfig::benchmark();
    const auto sample = generate_fused_dataset(cfg, 2000, 20000, 14);
    const auto fit = cross_fit(sample, randomized(5, 15));
    const auto stage = two_stage_outcome_fit(sample, fit, LinkSpec::unknown(FunctionForm::linear_x1,
                                                                            FunctionForm::linear_x1));

    // Same regression on the true mu_W(x, 0) = baseline + effect / 2.
    const long n0 = sample.n0();
    Eigen::MatrixXd design(n0, 4);
    Eigen::VectorXd y(n0);
    long r = 0;
    for (long i = 0; i < sample.size(); ++i) {
        if (sample.s[i] != 0) continue;
        const auto x = sample.covariates(i);
        const double mu = cfg.w_baseline(x) + 0.5 * cfg.w_effect(x);
        design.row(r) << mu, x[0] * mu, 1.0, x[0];
        y(r++) = sample.v[i];
    }
    const auto oracle = testsupport::ols(design, y);
    CHECK(std::abs(stage.alpha.coefficients(0) - cfg.rho0) < 5.0 * oracle.se(0));
    CHECK(std::abs(stage.alpha.coefficients(1) - cfg.rho1) < 5.0 * oracle.se(1));
    CHECK(std::abs(stage.beta.coefficients(0)) < 5.0 * oracle.se(2));
}

TEST_CASE("estimate dispatch") {
    const auto cfg = DgpConfig::benchmark();
    const auto sample = generate_fused_dataset(cfg, 800, 800, 16);
    const auto fit = cross_fit(sample, randomized());
    const auto link = LinkSpec::from_config(cfg);
    CHECK(estimate(Method::theta0, sample, fit, link).estimate == estimate_theta_primary(sample, fit).estimate);
    CHECK(estimate(Method::theta_a, sample, fit, link).method == Method::theta_a);
    const auto b = estimate(Method::theta_b, sample, fit, LinkSpec::unknown(FunctionForm::linear_x1,
                                                                           FunctionForm::linear_x1));
    CHECK(b.method == Method::theta_b);
    CHECK(b.diagnostics.count("beta_hat_1") == 1);
}
