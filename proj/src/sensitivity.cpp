#include "fuseate/sensitivity.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/random.hpp"

#include <cmath>
#include <string>

namespace fuseate {

void SeverityThresholds::validate() const {
    if (ranges.empty()) throw ConfigError("thresholds: no categories");
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const auto& r = ranges[i];
        if (!std::isfinite(r.low)) throw ConfigError("thresholds: non-finite bound");
        if (!r.high && i + 1 != ranges.size()) throw ConfigError("thresholds: only the top category may be open");
        if (r.high && !(r.low < *r.high)) {
            throw ConfigError("thresholds: category " + std::to_string(i) + " has low >= high");
        }
        if (i > 0) {
            const auto& prev = ranges[i - 1];
            if (!(prev.high && *prev.high < r.low)) {
                throw ConfigError("thresholds: categories " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                  " overlap or are out of order");
            }
        }
    }
    if (scale_max && !ranges.back().high && !(*scale_max > ranges.back().low)) {
        throw ConfigError("thresholds: scale_max must exceed the top category's lower bound");
    }
}

namespace {

std::optional<double> midpoint(const SeverityThresholds& scale, std::size_t i) {
    const auto& r = scale.ranges[i];
    const auto high = r.high ? r.high : scale.scale_max;
    if (!high) return std::nullopt;
    return 0.5 * (r.low + *high);
}

}  // namespace

ScaleLink scale_link_from_thresholds(const SeverityThresholds& a, const SeverityThresholds& b, bool through_origin) {
    a.validate();
    b.validate();
    if (a.ranges.size() != b.ranges.size()) {
        throw InputError("thresholds have " + std::to_string(a.ranges.size()) + " and " +
                         std::to_string(b.ranges.size()) + " categories");
    }
    if (through_origin && !(a.anchored_at_zero && b.anchored_at_zero)) {
        throw InputError("through-origin fit needs both scales anchored at zero");
    }
    std::vector<double> ya, xb;
    for (std::size_t i = 0; i < a.ranges.size(); ++i) {
        const auto ma = midpoint(a, i);
        const auto mb = midpoint(b, i);
        if (!ma || !mb) continue;
        ya.push_back(*ma);
        xb.push_back(*mb);
    }
    const std::size_t needed = through_origin ? 1 : 2;
    if (ya.size() < needed) throw InputError("too few closed category pairs for the scale link");

    ScaleLink out;
    out.pairs_used = static_cast<int>(ya.size());
    if (through_origin) {
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < ya.size(); ++i) {
            sxy += xb[i] * ya[i];
            sxx += xb[i] * xb[i];
        }
        out.alpha = sxy / sxx;
        return out;
    }
    const double n = static_cast<double>(ya.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
        mx += xb[i] / n;
        my += ya[i] / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
        sxy += (xb[i] - mx) * (ya[i] - my);
        sxx += (xb[i] - mx) * (xb[i] - mx);
    }
    if (!(sxx > 0.0)) throw InputError("scale-b midpoints are all equal");
    out.alpha = sxy / sxx;
    out.beta = my - out.alpha * mx;
    return out;
}

namespace {

double relative_gap(const CovariateFunction& alpha_mis, const CovariateFunction& alpha_star,
                    std::span<const double> x) {
    const double star = alpha_star(x);
    if (!(std::abs(star) >= kAlphaMin)) {
        throw LinkDegeneracyError("alpha_star = " + std::to_string(star) + " is below the minimum magnitude");
    }
    return (alpha_mis(x) - star) / star;
}

}  // namespace

BiasValue misspecification_bias(const DgpConfig& cfg, const CovariateFunction& alpha_mis,
                                const CovariateFunction& alpha_star, const CovariateFunction& theta_fn,
                                long mc_draws, std::uint64_t seed) {
    cfg.validate();
    if (mc_draws < 10'000) throw PrecisionError("misspecification_bias: mc_draws must be >= 1e4");
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(cfg.p));
    double sum_w = 0.0, sum_wb = 0.0, sum_w2 = 0.0, sum_w2b = 0.0, sum_w2b2 = 0.0;
    for (long d = 0; d < mc_draws; ++d) {
        for (double& xj : x) xj = rng.normal();
        const double w = cfg.selection_probability(x);
        const double b = relative_gap(alpha_mis, alpha_star, x) * theta_fn(x);
        sum_w += w;
        sum_wb += w * b;
        sum_w2 += w * w;
        sum_w2b += w * w * b;
        sum_w2b2 += w * w * b * b;
    }
    const double n = static_cast<double>(mc_draws);
    BiasValue out;
    out.p_s1 = sum_w / n;
    out.conditional = sum_wb / sum_w;
    const double ss = sum_w2b2 - 2.0 * out.conditional * sum_w2b + out.conditional * out.conditional * sum_w2;
    out.conditional_se = std::sqrt(std::max(ss, 0.0)) / sum_w;
    // E[B|S=1] P(S=1) = E[pi(X) B(X)], a plain mean.
    out.weighted = sum_wb / n;
    out.weighted_se = std::sqrt(std::max(sum_w2b2 / n - out.weighted * out.weighted, 0.0) / n);
    return out;
}

BiasValue misspecification_bias(const Sample& sample, const CovariateFunction& alpha_mis,
                                const CovariateFunction& alpha_star, const CovariateFunction& theta_fn) {
    const long n1 = sample.n1();
    if (n1 < 2) throw InputError("misspecification_bias: needs at least 2 auxiliary units");
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < sample.size(); ++i) {
        if (sample.s[static_cast<std::size_t>(i)] != 1) continue;
        const auto x = sample.covariates(i);
        const double b = relative_gap(alpha_mis, alpha_star, x) * theta_fn(x);
        sum += b;
        sum_sq += b * b;
    }
    const double m = static_cast<double>(n1);
    BiasValue out;
    out.p_s1 = m / static_cast<double>(sample.size());
    out.conditional = sum / m;
    out.conditional_se = std::sqrt(std::max(sum_sq / m - out.conditional * out.conditional, 0.0) / m);
    out.weighted = out.conditional * out.p_s1;
    out.weighted_se = out.conditional_se * out.p_s1;
    return out;
}

MonteCarloValue fused_limit(const DgpConfig& cfg, const CovariateFunction& alpha_mis, long mc_draws,
                            std::uint64_t seed) {
    cfg.validate();
    if (mc_draws < 10'000) throw PrecisionError("fused_limit: mc_draws must be >= 1e4");
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(cfg.p));
    const double sy2 = cfg.sigma_y * cfg.sigma_y, sw2 = cfg.sigma_w * cfg.sigma_w;
    // theta* = E[num] / E[den] with per-X expectations of the score pieces.
    double sn = 0.0, sd = 0.0, snn = 0.0, sdd = 0.0, snd = 0.0;
    for (long d = 0; d < mc_draws; ++d) {
        for (double& xj : x) xj = rng.normal();
        const double pi1 = cfg.selection_probability(x);
        const double e0 = cfg.treatment_probability(x, 0), e1 = cfg.treatment_probability(x, 1);
        const double v0 = e0 * (1.0 - e0), v1 = e1 * (1.0 - e1);
        const double a = alpha_mis(x);
        if (!(std::abs(a) >= kAlphaMin)) throw LinkDegeneracyError("fused_limit: alpha_mis below minimum magnitude");
        const double num = (1.0 - pi1) * cfg.cate(x) * v0 / sy2 + pi1 * cfg.w_effect(x) * v1 / (a * sw2);
        const double den = (1.0 - pi1) * v0 / sy2 + pi1 * v1 / (a * a * sw2);
        sn += num;
        sd += den;
        snn += num * num;
        sdd += den * den;
        snd += num * den;
    }
    const double r = sn / sd;
    const double ss = snn - 2.0 * r * snd + r * r * sdd;
    return {r, std::sqrt(std::max(ss, 0.0)) / sd};
}

std::vector<std::pair<double, EstimateResult>> sensitivity_sweep(const Sample& sample, const NuisanceFit& fit,
                                                                 const LinkSpec& link_base,
                                                                 const std::vector<double>& alpha_scale_grid) {
    link_base.validate();
    if (link_base.knowledge != LinkKnowledge::fully_known) throw ConfigError("sensitivity sweep needs a fully_known link");
    std::vector<std::pair<double, EstimateResult>> curve;
    for (double k : alpha_scale_grid) {
        if (!(k > 0.0) || !std::isfinite(k)) throw InputError("alpha scale grid values must be positive");
        LinkSpec link = link_base;
        if (k != 1.0) link.alpha = link_base.alpha->scaled(k);
        curve.emplace_back(k, estimate_theta_fused_known_alpha(sample, fit, link));
    }
    return curve;
}

}  // namespace fuseate
