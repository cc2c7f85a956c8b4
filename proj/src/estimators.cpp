#include "fuseate/estimators.hpp"

#include "fuseate/errors.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace fuseate {

std::string to_string(Method method) {
    switch (method) {
        case Method::theta0: return "theta0";
        case Method::theta_a: return "theta_a";
        case Method::theta_b: return "theta_b";
    }
    return "theta0";
}

Method method_from_string(const std::string& name) {
    if (name == "theta0") return Method::theta0;
    if (name == "theta_a") return Method::theta_a;
    if (name == "theta_b") return Method::theta_b;
    throw ConfigError("unknown method '" + name + "' (expected theta0, theta_a or theta_b)");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double denominator_floor(long n) { return 1e-8 * static_cast<double>(n); }

// Finishes a ratio estimator from its per-unit pieces: the estimate is
// sum(num) / sum(den) and psi_i = num_i - theta * den_i is the score.
EstimateResult finish(const Sample& sample, const std::vector<double>& num, const std::vector<double>& den,
                      Method tag) {
    const long n = sample.size();
    double num_sum = 0.0, den_sum = 0.0;
    for (long i = 0; i < n; ++i) {
        num_sum += num[static_cast<std::size_t>(i)];
        den_sum += den[static_cast<std::size_t>(i)];
    }
    if (!(std::abs(den_sum) > denominator_floor(n))) {
        throw EstimationError(to_string(tag) + ": degenerate denominator " + std::to_string(den_sum) +
                              " (floor " + std::to_string(denominator_floor(n)) + ")");
    }
    const double theta = num_sum / den_sum;
    double psi_sq = 0.0;
    for (long i = 0; i < n; ++i) {
        const double psi = num[static_cast<std::size_t>(i)] - theta * den[static_cast<std::size_t>(i)];
        psi_sq += psi * psi;
    }
    const double nd = static_cast<double>(n);
    const double d = den_sum / nd;
    const double variance = (psi_sq / nd) / (d * d);
    if (!std::isfinite(theta) || !std::isfinite(variance)) throw EstimationError(to_string(tag) + ": non-finite estimate");

    EstimateResult result;
    result.method = tag;
    result.estimate = theta;
    result.std_error = std::sqrt(variance / nd);
    result.ci_low = theta - kZ95 * result.std_error;
    result.ci_high = theta + kZ95 * result.std_error;
    result.n0 = sample.n0();
    result.n1 = sample.n1();
    result.diagnostics["denominator"] = d;
    return result;
}

void require_primary(const Sample& sample, Method tag) {
    const long n0 = sample.n0();
    if (n0 == 0) throw InputError(to_string(tag) + ": no primary (S=0) units");
    if (n0 < 2) throw InputError(to_string(tag) + ": needs at least 2 primary units");
}

void require_coverage(const Sample& sample, const NuisanceFit& fit) {
    if (fit.size() != sample.size() || fit.mu_v.size() != sample.size() || fit.mu_t.size() != sample.size()) {
        throw ConsistencyError("nuisance fit does not cover the sample");
    }
}

void add_fit_diagnostics(EstimateResult& result, const NuisanceFit& fit) {
    result.diagnostics["clipped_propensities"] = static_cast<double>(fit.clipped_propensities);
    result.diagnostics["clipped_selection"] = static_cast<double>(fit.clipped_selection);
    if (std::isfinite(fit.sigma_y_sq)) result.diagnostics["sigma_y_sq"] = fit.sigma_y_sq;
    if (std::isfinite(fit.sigma_w_sq)) result.diagnostics["sigma_w_sq"] = fit.sigma_w_sq;
}

void add_link_diagnostics(EstimateResult& result, const std::string& prefix, const LinkFunction& f) {
    for (long j = 0; j < f.coefficients.size(); ++j) {
        result.diagnostics[prefix + "_" + std::to_string(j)] = f.coefficients(j);
    }
}

}  // namespace

EstimateResult partially_linear_estimate(const Sample& sample, const Eigen::VectorXd& outcome_mean,
                                         const Eigen::VectorXd& propensity, Method tag) {
    require_primary(sample, tag);
    const long n = sample.size();
    if (outcome_mean.size() != n || propensity.size() != n) {
        throw ConsistencyError(to_string(tag) + ": predictions do not cover the sample");
    }
    std::vector<double> num(static_cast<std::size_t>(n), 0.0), den(static_cast<std::size_t>(n), 0.0);
    for (long i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (sample.s[u] != 0) continue;
        const double r_t = static_cast<double>(sample.t[u]) - propensity(i);
        const double r_y = sample.v[u] - outcome_mean(i);
        if (!std::isfinite(r_t) || !std::isfinite(r_y)) {
            throw ConsistencyError(to_string(tag) + ": missing prediction for unit " + std::to_string(i));
        }
        num[u] = r_y * r_t;
        den[u] = r_t * r_t;
    }
    return finish(sample, num, den, tag);
}

EstimateResult estimate_theta_primary(const Sample& sample, const NuisanceFit& fit) {
    require_coverage(sample, fit);
    auto result = partially_linear_estimate(sample, fit.mu_v, fit.mu_t, Method::theta0);
    add_fit_diagnostics(result, fit);
    return result;
}

EstimateResult estimate_theta_fused_known_alpha(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link) {
    link.validate();
    if (link.knowledge != LinkKnowledge::fully_known) throw ConfigError("theta_a needs a fully_known link");
    require_primary(sample, Method::theta_a);
    require_coverage(sample, fit);
    const auto& alpha = *link.alpha;
    const long n = sample.size();

    // Weight of an auxiliary unit relative to a primary one.
    const double ratio = sample.n1() > 0 ? fit.sigma_y_sq / fit.sigma_w_sq : 0.0;
    if (sample.n1() > 0 && !(std::isfinite(ratio) && ratio > 0.0)) {
        throw ConsistencyError("theta_a: noise variances unavailable");
    }
    std::vector<double> num(static_cast<std::size_t>(n), 0.0), den(static_cast<std::size_t>(n), 0.0);
    for (long i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const double r_t = static_cast<double>(sample.t[u]) - fit.mu_t(i);
        const double r_v = sample.v[u] - fit.mu_v(i);
        if (!std::isfinite(r_t) || !std::isfinite(r_v)) {
            throw ConsistencyError("theta_a: missing prediction for unit " + std::to_string(i) +
                                   (sample.s[u] ? " (auxiliary models not fit?)" : ""));
        }
        if (sample.s[u] == 0) {
            num[u] = r_v * r_t;
            den[u] = r_t * r_t;
            continue;
        }
        const double a = alpha(sample.covariates(i), i);
        if (!(std::abs(a) >= kAlphaMin)) {
            throw LinkDegeneracyError("theta_a: |alpha(x)| = " + std::to_string(std::abs(a)) + " < " +
                                      std::to_string(kAlphaMin) + " at unit " + std::to_string(i));
        }
        num[u] = ratio * r_v * r_t / a;
        den[u] = ratio * r_t * r_t / (a * a);
    }
    auto result = finish(sample, num, den, Method::theta_a);
    add_fit_diagnostics(result, fit);
    return result;
}

namespace {

struct SecondStage {
    Eigen::VectorXd alpha_coef;
    Eigen::VectorXd beta_coef;
};

// Columns: alpha class x mu_W, then beta class unless beta is fixed.
SecondStage solve_second_stage(const Eigen::MatrixXd& design, const Eigen::VectorXd& target, int alpha_dim) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        throw IdentificationError("two-stage design has rank " + std::to_string(qr.rank()) + " < " +
                                  std::to_string(design.cols()) + " (alpha and beta not identified)");
    }
    const Eigen::VectorXd coef = qr.solve(target);
    if (!coef.allFinite()) throw NumericalError("two-stage coefficients are not finite");
    return {coef.head(alpha_dim), coef.tail(design.cols() - alpha_dim)};
}

LinkFunction class_function(FunctionForm form, const Eigen::VectorXd& coef) {
    switch (form) {
        case FunctionForm::constant: return LinkFunction::constant(coef(0));
        case FunctionForm::linear_x1: return LinkFunction::linear_x1(coef(0), coef(1));
        default: return LinkFunction::linear_all(coef);
    }
}

}  // namespace

TwoStageFit two_stage_outcome_fit(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link) {
    link.validate();
    if (link.knowledge == LinkKnowledge::fully_known) throw ConfigError("two-stage fit needs beta_known or unknown link");
    require_coverage(sample, fit);
    if (!fit.auxiliary_arms[0] || !fit.auxiliary_arms[1]) {
        throw InputError("two-stage fit needs auxiliary (S=1) units in both arms");
    }
    const int p = sample.dim();
    const bool beta_fixed = link.knowledge == LinkKnowledge::beta_known;
    const int alpha_dim = LinkFunction::class_dimension(link.alpha_class, p);
    const int beta_dim = beta_fixed ? 0 : LinkFunction::class_dimension(link.beta_class, p);
    const int cols = alpha_dim + beta_dim;

    std::vector<long> primary;
    for (long i = 0; i < sample.size(); ++i) {
        if (sample.s[static_cast<std::size_t>(i)] == 0) primary.push_back(i);
    }
    const long n0 = static_cast<long>(primary.size());
    if (n0 < cols + 1) {
        throw InputError("two-stage fit needs at least " + std::to_string(cols + 1) + " primary units, got " +
                         std::to_string(n0));
    }

    TwoStageFit out;
    out.beta_fixed = beta_fixed;
    out.mu_w0 = Eigen::VectorXd::Constant(sample.size(), kNaN);
    out.mu_yb = Eigen::VectorXd::Constant(sample.size(), kNaN);

    Eigen::MatrixXd design(n0, cols);
    Eigen::VectorXd target(n0);
    std::vector<double> alpha_row(static_cast<std::size_t>(alpha_dim)), beta_row(static_cast<std::size_t>(p + 1));
    for (long r = 0; r < n0; ++r) {
        const long i = primary[static_cast<std::size_t>(r)];
        const auto x = sample.covariates(i);
        const double e = fit.mu_t(i);
        if (!std::isfinite(e)) throw ConsistencyError("two-stage fit: missing primary propensity");
        const double mu_w = (1.0 - e) * fit.auxiliary_arms[0]->predict(x) + e * fit.auxiliary_arms[1]->predict(x);
        out.mu_w0(i) = mu_w;
        LinkFunction::class_row(link.alpha_class, x, alpha_row.data());
        for (int j = 0; j < alpha_dim; ++j) design(r, j) = alpha_row[static_cast<std::size_t>(j)] * mu_w;
        target(r) = sample.v[static_cast<std::size_t>(i)];
        if (beta_fixed) {
            target(r) -= (*link.beta)(x, i);
        } else {
            LinkFunction::class_row(link.beta_class, x, beta_row.data());
            for (int j = 0; j < beta_dim; ++j) design(r, alpha_dim + j) = beta_row[static_cast<std::size_t>(j)];
        }
    }

    const auto full = solve_second_stage(design, target, alpha_dim);
    out.alpha = class_function(link.alpha_class, full.alpha_coef);
    out.beta = beta_fixed ? *link.beta : class_function(link.beta_class, full.beta_coef);

    const int folds = fit.folds();
    std::vector<int> primary_fold(static_cast<std::size_t>(n0));
    for (long r = 0; r < n0; ++r) primary_fold[static_cast<std::size_t>(r)] = fit.fold[static_cast<std::size_t>(primary[static_cast<std::size_t>(r)])];
    for (int k = 0; k < folds; ++k) {
        std::vector<long> train, held;
        for (long r = 0; r < n0; ++r) (primary_fold[static_cast<std::size_t>(r)] == k ? held : train).push_back(r);
        if (held.empty()) continue;
        const SecondStage stage = folds == 1 ? full : solve_second_stage(design(train, Eigen::all), target(train), alpha_dim);
        Eigen::VectorXd coef(cols);
        coef << stage.alpha_coef, stage.beta_coef;
        const Eigen::VectorXd pred = design(held, Eigen::all) * coef;
        for (std::size_t h = 0; h < held.size(); ++h) {
            const long i = primary[static_cast<std::size_t>(held[h])];
            // The target had a fixed beta subtracted; add it back.
            out.mu_yb(i) = pred(static_cast<long>(h)) + (beta_fixed ? (*link.beta)(sample.covariates(i), i) : 0.0);
        }
    }
    return out;
}

EstimateResult estimate_theta_two_stage(const Sample& sample, const NuisanceFit& fit, const LinkSpec& link) {
    require_primary(sample, Method::theta_b);
    const TwoStageFit stage = two_stage_outcome_fit(sample, fit, link);
    auto result = partially_linear_estimate(sample, stage.mu_yb, fit.mu_t, Method::theta_b);
    add_fit_diagnostics(result, fit);
    add_link_diagnostics(result, "alpha_hat", stage.alpha);
    if (!stage.beta_fixed) add_link_diagnostics(result, "beta_hat", stage.beta);
    return result;
}

EstimateResult estimate(Method method, const Sample& sample, const NuisanceFit& fit, const LinkSpec& link) {
    switch (method) {
        case Method::theta0: return estimate_theta_primary(sample, fit);
        case Method::theta_a: return estimate_theta_fused_known_alpha(sample, fit, link);
        case Method::theta_b: return estimate_theta_two_stage(sample, fit, link);
    }
    throw ConfigError("unknown method");
}

}  // namespace fuseate
