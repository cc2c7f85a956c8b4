#include "doctest.h"

#include "fuseate/errors.hpp"
#include "fuseate/link.hpp"
#include "fuseate/nuisance.hpp"
#include "fuseate/sensitivity.hpp"

#include <cmath>

using namespace fuseate;

namespace {

SeverityThresholds scale(std::vector<SeverityThresholds::Range> ranges) {
    SeverityThresholds t;
    t.ranges = std::move(ranges);
    return t;
}

SeverityThresholds cows() { return scale({{5, 12}, {13, 24}, {25, 36}, {37, std::nullopt}}); }
SeverityThresholds sows() { return scale({{1, 10}, {11, 15}, {16, 20}, {21, 30}}); }

CovariateFunction constant(double c) {
    return [c](std::span<const double>) { return c; };
}

}  // namespace

TEST_CASE("link functions") {
    const double x[3] = {2.0, -1.0, 0.5};
    CHECK(LinkFunction::constant(1.5)(x) == 1.5);
    CHECK(LinkFunction::linear_x1(1.0, 0.3)(x) == doctest::Approx(1.6));
    Eigen::VectorXd c(4);
    c << 1.0, 1.0, 2.0, 4.0;
    CHECK(LinkFunction::linear_all(c)(x) == doctest::Approx(1.0 + 2.0 - 2.0 + 2.0));
    const auto table = LinkFunction::from_table({0.5, 0.7});
    CHECK(table(x, 1) == 0.7);
    CHECK_THROWS(table(x, -1));
    CHECK(LinkFunction::linear_x1(1.0, 0.3).scaled(2.0)(x) == doctest::Approx(3.2));
    CHECK(LinkFunction::class_dimension(FunctionForm::linear_all, 10) == 11);
    CHECK(form_from_string("linear_x1") == FunctionForm::linear_x1);
    CHECK(knowledge_from_string("beta_known") == LinkKnowledge::beta_known);
    CHECK_THROWS_AS(form_from_string("cubic"), ConfigError);

    CHECK_NOTHROW(LinkSpec::from_config(DgpConfig::benchmark()).validate());
    LinkSpec missing;
    CHECK_THROWS_AS(missing.validate(), ConfigError);
    auto bad = LinkSpec::unknown(FunctionForm::table, FunctionForm::constant);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("threshold validation") {
    CHECK_NOTHROW(cows().validate());
    CHECK_THROWS_AS(scale({{1, 5}, {4, 8}}).validate(), ConfigError);
    CHECK_THROWS_AS(scale({{1, std::nullopt}, {4, 8}}).validate(), ConfigError);
    CHECK_THROWS_AS(scale({{5, 1}}).validate(), ConfigError);
    CHECK_THROWS_AS(scale({}).validate(), ConfigError);
}

TEST_CASE("scale link on the opiate withdrawal scales") {
    const auto link = scale_link_from_thresholds(sows(), cows(), true);
    CHECK(link.alpha >= 0.59);
    CHECK(link.alpha <= 0.63);
    CHECK(link.beta == 0.0);
    CHECK(link.pairs_used == 3);

    // Closing the open category with the clinical scale's maximum of 48 adds a pair.
    auto closed = cows();
    closed.scale_max = 48.0;
    CHECK(scale_link_from_thresholds(sows(), closed, true).pairs_used == 4);
}

TEST_CASE("scale link identities") {
    const auto a = scale({{0, 4}, {5, 9}, {10, 20}});
    auto r = scale_link_from_thresholds(a, a, true);
    CHECK(std::abs(r.alpha - 1.0) <= 1e-12);
    CHECK(r.beta == 0.0);
    r = scale_link_from_thresholds(a, a, false);
    CHECK(std::abs(r.alpha - 1.0) <= 1e-12);
    CHECK(std::abs(r.beta) <= 1e-12);

    const auto doubled = scale({{0, 8}, {10, 18}, {20, 40}});
    r = scale_link_from_thresholds(a, doubled, true);
    CHECK(std::abs(r.alpha - 0.5) <= 1e-12);
    CHECK(r.beta == 0.0);
    r = scale_link_from_thresholds(a, doubled, false);
    CHECK(std::abs(r.alpha - 0.5) <= 1e-12);
    CHECK(std::abs(r.beta) <= 1e-12);
}

TEST_CASE("scale link inverts when the scales are affine images") {
    const auto a = scale({{0, 4}, {5, 9}, {10, 20}, {21, 30}});
    const auto b = scale({{3, 11}, {13, 21}, {23, 43}, {45, 63}});  // b = 2a + 3
    const auto ab = scale_link_from_thresholds(a, b, false);
    const auto ba = scale_link_from_thresholds(b, a, false);
    CHECK(ab.alpha * ba.alpha == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ab.beta == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(ba.beta == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("scale link errors") {
    CHECK_THROWS_AS(scale_link_from_thresholds(sows(), scale({{1, 2}, {3, 4}}), true), InputError);
    auto floating = cows();
    floating.anchored_at_zero = false;
    CHECK_THROWS_AS(scale_link_from_thresholds(sows(), floating, true), InputError);
    CHECK_NOTHROW(scale_link_from_thresholds(sows(), floating, false));
    CHECK_THROWS_AS(scale_link_from_thresholds(scale({{1, std::nullopt}}), scale({{1, 2}}), true), InputError);
}

TEST_CASE("misspecification bias") {
    const auto cfg = DgpConfig::constant_link_benchmark();
    SUBCASE("correct link") {
        const auto b = misspecification_bias(cfg, constant(1.0), constant(1.0), constant(1.0), 10000, 1);
        CHECK(b.conditional == 0.0);
        CHECK(b.weighted == 0.0);
    }
    SUBCASE("constants") {
        const auto b = misspecification_bias(cfg, constant(1.5), constant(1.0), constant(2.0), 10000, 2);
        CHECK(b.conditional == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(b.conditional_se < 1e-12);
        CHECK(b.weighted == doctest::Approx(b.p_s1).epsilon(1e-12));
        CHECK(b.p_s1 == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("linear in the slope error") {
        const auto base = DgpConfig::benchmark();
        const CovariateFunction star = [base](std::span<const double> x) { return 2.0 + base.rho1 * x[0]; };
        const CovariateFunction theta = [base](std::span<const double> x) { return base.w_effect(x); };
        const auto mis = [star](double k) {
            return CovariateFunction([star, k](std::span<const double> x) { return k * star(x); });
        };
        const auto one = misspecification_bias(base, mis(1.1), star, theta, 20000, 3);
        const auto two = misspecification_bias(base, mis(1.2), star, theta, 20000, 3);
        CHECK(two.conditional == doctest::Approx(2.0 * one.conditional).epsilon(1e-10));
    }
    SUBCASE("sample version") {
        auto c = cfg;
        c.n = 4000;
        const auto sample = generate_dataset(c, 4);
        const auto b = misspecification_bias(sample, constant(1.5), constant(1.0), constant(2.0));
        CHECK(b.conditional == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(b.p_s1 == doctest::Approx(static_cast<double>(sample.n1()) / sample.size()));
    }
    CHECK_THROWS_AS(misspecification_bias(cfg, constant(1.5), constant(1.0), constant(2.0), 9999, 2),
                    PrecisionError);
    CHECK_THROWS_AS(misspecification_bias(cfg, constant(1.5), constant(1e-4), constant(2.0), 10000, 2),
                    LinkDegeneracyError);
}

TEST_CASE("fused limit") {
    const auto cfg = DgpConfig::constant_link_benchmark();
    const auto exact = fused_limit(cfg, constant(1.0), 20000, 5);
    CHECK(exact.value == doctest::Approx(1.0).epsilon(1e-12));
    // Constant design: with alpha_mis = k, theta* = (I0 + I1 / k) / (I0 + I1 / k^2)
    // and I1 / I0 = E[pi e1(1-e1)] / E[(1-pi) / 4].
    const auto off = fused_limit(cfg, constant(1.5), 200000, 6);
    CHECK(off.value > 1.0);
    CHECK(off.value < 1.5);
}

TEST_CASE("sensitivity sweep") {
    const auto cfg = DgpConfig::constant_link_benchmark();
    const auto sample = generate_fused_dataset(cfg, 1000, 1000, 7);
    NuisanceOptions options;
    options.primary_propensity = 0.5;
    const auto fit = cross_fit(sample, options);
    const auto link = LinkSpec::from_config(cfg);
    const auto single = sensitivity_sweep(sample, fit, link, {1.0});
    REQUIRE(single.size() == 1);
    const auto base = estimate_theta_fused_known_alpha(sample, fit, link);
    CHECK(single[0].second.estimate == base.estimate);
    CHECK(single[0].second.std_error == base.std_error);

    const auto curve = sensitivity_sweep(sample, fit, link, {0.5, 0.75, 1.0, 1.25, 1.5});
    for (const auto& [k, r] : curve) {
        const double width = r.ci_high - r.ci_low;
        CHECK(std::isfinite(width));
        CHECK(width > 0.0);
    }
    CHECK_THROWS_AS(sensitivity_sweep(sample, fit, link, {0.0}), InputError);
    CHECK_THROWS_AS(sensitivity_sweep(sample, fit, LinkSpec::unknown(FunctionForm::constant, FunctionForm::constant),
                                      {1.0}),
                    ConfigError);
}
