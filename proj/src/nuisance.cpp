#include "fuseate/nuisance.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fuseate {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Stratum {
    int s = 0;
    std::vector<long> units;
    std::vector<int> fold;  // per row of `units`
    std::vector<double> v;
    std::vector<double> t;
    Eigen::MatrixXd outcome_design;

    long size() const { return static_cast<long>(units.size()); }
};

std::vector<long> rows_where(const std::vector<int>& fold, int k, bool equal) {
    std::vector<long> rows;
    for (std::size_t r = 0; r < fold.size(); ++r) {
        if ((fold[r] == k) == equal) rows.push_back(static_cast<long>(r));
    }
    return rows;
}

std::vector<double> pick(const std::vector<double>& values, const std::vector<long>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (long r : rows) out.push_back(values[static_cast<std::size_t>(r)]);
    return out;
}

std::vector<int> assign_folds(const Sample& sample, int folds, std::uint64_t seed) {
    std::vector<int> fold(static_cast<std::size_t>(sample.size()), 0);
    if (folds == 1) return fold;
    Rng rng(seed);
    for (int s = 0; s < 2; ++s) {
        for (int t = 0; t < 2; ++t) {
            std::vector<long> cell;
            for (long i = 0; i < sample.size(); ++i) {
                if (sample.s[static_cast<std::size_t>(i)] == s && sample.t[static_cast<std::size_t>(i)] == t) {
                    cell.push_back(i);
                }
            }
            for (std::size_t i = cell.size(); i > 1; --i) {
                std::swap(cell[i - 1], cell[static_cast<std::size_t>(rng.below(i))]);
            }
            for (std::size_t r = 0; r < cell.size(); ++r) {
                fold[static_cast<std::size_t>(cell[r])] = static_cast<int>(r % static_cast<std::size_t>(folds));
            }
        }
    }
    return fold;
}

void validate_cells(const Sample& sample, int folds) {
    for (int s = 0; s < 2; ++s) {
        const long stratum = sample.count_stratum(s);
        if (stratum == 0) continue;
        if (folds > stratum) {
            throw InputError("folds = " + std::to_string(folds) + " exceeds the " + std::to_string(stratum) +
                             " units with S=" + std::to_string(s));
        }
        for (int t = 0; t < 2; ++t) {
            const long cell = sample.count_cell(s, t);
            if (cell < folds) {
                // Round-robin assignment fills folds in order, so fold `cell` is the first empty one.
                throw StratificationError("empty cell: fold " + std::to_string(cell) + ", S=" + std::to_string(s) +
                                          ", T=" + std::to_string(t) + " (" + std::to_string(cell) +
                                          " units for " + std::to_string(folds) + " folds)");
            }
        }
    }
}

Stratum build_stratum(const Sample& sample, int s, const std::vector<int>& fold, Basis basis) {
    Stratum st;
    st.s = s;
    for (long i = 0; i < sample.size(); ++i) {
        if (sample.s[static_cast<std::size_t>(i)] != s) continue;
        st.units.push_back(i);
        st.fold.push_back(fold[static_cast<std::size_t>(i)]);
        st.v.push_back(sample.v[static_cast<std::size_t>(i)]);
        st.t.push_back(sample.t[static_cast<std::size_t>(i)]);
    }
    CovariateMatrix x(st.size(), sample.dim());
    for (long r = 0; r < st.size(); ++r) x.row(r) = sample.x.row(st.units[static_cast<std::size_t>(r)]);
    st.outcome_design = design_matrix(x, basis);
    return st;
}

// Per-fold linear fits from fold-level sufficient statistics: training set =
// total minus the held-out fold.
std::vector<RegressionModel> fit_linear_folds(const Stratum& st, int folds, Basis basis, int p,
                                              std::optional<double> ridge) {
    std::vector<NormalEquations> per_fold;
    NormalEquations total;
    for (int k = 0; k < folds; ++k) {
        const auto rows = rows_where(st.fold, k, true);
        per_fold.push_back(NormalEquations::accumulate(st.outcome_design(rows, Eigen::all), pick(st.v, rows)));
        total += per_fold.back();
    }
    std::vector<RegressionModel> models;
    for (int k = 0; k < folds; ++k) {
        models.push_back(solve_linear(folds == 1 ? total : total - per_fold[static_cast<std::size_t>(k)], basis, p,
                                      ridge));
    }
    return models;
}

std::vector<RegressionModel> fit_logistic_folds(const Eigen::MatrixXd& design, const std::vector<double>& targets,
                                                const std::vector<int>& fold, int folds, Basis basis, int p,
                                                std::optional<double> ridge) {
    std::vector<RegressionModel> models;
    for (int k = 0; k < folds; ++k) {
        if (folds == 1) {
            models.push_back(fit_design(design, targets, RegressionKind::logistic, basis, p, ridge));
            continue;
        }
        const auto rows = rows_where(fold, k, false);
        models.push_back(
            fit_design(design(rows, Eigen::all), pick(targets, rows), RegressionKind::logistic, basis, p, ridge));
    }
    return models;
}

struct ArmData {
    CovariateMatrix x;
    std::vector<double> y;
};

ArmData arm_data(const Sample& sample, const std::vector<long>& units) {
    ArmData arm{CovariateMatrix(static_cast<long>(units.size()), sample.dim()), {}};
    arm.y.reserve(units.size());
    for (std::size_t r = 0; r < units.size(); ++r) {
        arm.x.row(static_cast<long>(r)) = sample.x.row(units[r]);
        arm.y.push_back(sample.v[static_cast<std::size_t>(units[r])]);
    }
    return arm;
}

// In-sample fit used for the noise variance. Falls back from the configured
// basis to raw covariates and then to the arm mean when the arm is too small
// for a stable variance estimate.
RegressionModel variance_fit(const ArmData& arm, Basis basis, std::optional<double> ridge,
                             const RegressionModel& configured) {
    const int p = static_cast<int>(arm.x.cols());
    const long count = arm.x.rows();
    if (count >= 2 * (expanded_dimension(p, basis) + 1)) return configured;
    if (count >= 2 * (p + 1)) return fit_regression(arm.x, arm.y, RegressionKind::linear, Basis::raw, ridge);
    RegressionModel mean_only;
    mean_only.basis = Basis::raw;
    mean_only.fitted_dimension = p;
    mean_only.coefficients = Eigen::VectorXd::Zero(p + 1);
    double sum = 0.0;
    for (double value : arm.y) sum += value;
    mean_only.coefficients(0) = sum / static_cast<double>(count);
    return mean_only;
}

// The arm-mean fallback carries zero slopes and spends one degree of freedom.
long free_parameters(const RegressionModel& model) {
    const long k = model.coefficients.size();
    return model.coefficients.tail(k - 1).isZero(0.0) ? 1 : k;
}

double noise_variance(const Sample& sample, int s, const std::array<std::optional<RegressionModel>, 2>& arms) {
    double rss = 0.0;
    long count = 0;
    for (long i = 0; i < sample.size(); ++i) {
        if (sample.s[static_cast<std::size_t>(i)] != s) continue;
        const auto& model = *arms[sample.t[static_cast<std::size_t>(i)]];
        const double r = sample.v[static_cast<std::size_t>(i)] - model.predict(sample.covariates(i));
        rss += r * r;
        ++count;
    }
    const long df = std::max(count - free_parameters(*arms[0]) - free_parameters(*arms[1]), 1L);
    return std::max(rss / static_cast<double>(df), kVarianceFloor);
}

double clip(double value, double eps, long& clipped) {
    if (value < eps) {
        ++clipped;
        return eps;
    }
    if (value > 1.0 - eps) {
        ++clipped;
        return 1.0 - eps;
    }
    return value;
}

}  // namespace

NuisanceFit cross_fit(const Sample& sample, const NuisanceOptions& options) {
    sample.validate();
    const int folds = options.folds;
    if (folds < 1) throw InputError("folds must be >= 1");
    if (!(options.epsilon_clip > 0.0 && options.epsilon_clip < 0.5)) throw InputError("epsilon_clip must lie in (0, 0.5)");
    if (options.primary_propensity && !(*options.primary_propensity > 0.0 && *options.primary_propensity < 1.0)) {
        throw InputError("primary_propensity must lie in (0, 1)");
    }
    if (sample.size() == 0) throw InputError("cannot cross-fit an empty sample");
    validate_cells(sample, folds);

    const int p = sample.dim();
    const long n = sample.size();
    NuisanceFit fit;
    fit.options = options;
    fit.fold = assign_folds(sample, folds, options.seed);
    fit.fold_models.resize(static_cast<std::size_t>(folds));
    fit.mu_v = Eigen::VectorXd::Constant(n, kNaN);
    fit.mu_t = Eigen::VectorXd::Constant(n, kNaN);
    fit.sigma_y_sq = kNaN;
    fit.sigma_w_sq = kNaN;

    const Eigen::MatrixXd propensity_design = design_matrix(sample.x, options.propensity_basis);
    const double eps = options.epsilon_clip;

    for (int s = 0; s < 2; ++s) {
        if (sample.count_stratum(s) == 0) continue;
        const bool primary = s == 0;
        const Stratum st = build_stratum(sample, s, fit.fold, options.outcome_basis);

        // Per-arm in-sample fits and the stratum's noise variance.
        auto& arms = primary ? fit.primary_arms : fit.auxiliary_arms;
        std::array<std::optional<RegressionModel>, 2> variance_arms;
        for (int t = 0; t < 2; ++t) {
            std::vector<long> units;
            for (long r = 0; r < st.size(); ++r) {
                if (st.t[static_cast<std::size_t>(r)] == t) units.push_back(st.units[static_cast<std::size_t>(r)]);
            }
            const ArmData arm = arm_data(sample, units);
            const auto configured = fit_regression(arm.x, arm.y, RegressionKind::linear, options.outcome_basis,
                                                   options.ridge_lambda);
            variance_arms[static_cast<std::size_t>(t)] = variance_fit(arm, options.outcome_basis, options.ridge_lambda, configured);
            arms[static_cast<std::size_t>(t)] = configured;
        }
        (primary ? fit.sigma_y_sq : fit.sigma_w_sq) = noise_variance(sample, s, variance_arms);

        if (!primary && !options.auxiliary_marginal) continue;

        const auto outcome_models = fit_linear_folds(st, folds, options.outcome_basis, p, options.ridge_lambda);
        std::vector<RegressionModel> propensity_models;
        if (!(primary && options.primary_propensity)) {
            const Eigen::MatrixXd design = propensity_design(st.units, Eigen::all);
            propensity_models =
                fit_logistic_folds(design, st.t, st.fold, folds, options.propensity_basis, p, options.ridge_lambda);
        }

        for (int k = 0; k < folds; ++k) {
            auto& slot = fit.fold_models[static_cast<std::size_t>(k)];
            (primary ? slot.mu_y0 : slot.mu_w1) = outcome_models[static_cast<std::size_t>(k)];
            if (!propensity_models.empty()) {
                (primary ? slot.mu_t0 : slot.mu_t1) = propensity_models[static_cast<std::size_t>(k)];
            }

            const auto rows = rows_where(st.fold, k, true);
            if (rows.empty()) continue;
            std::vector<long> units;
            for (long r : rows) units.push_back(st.units[static_cast<std::size_t>(r)]);
            const Eigen::VectorXd mean =
                outcome_models[static_cast<std::size_t>(k)].predict_design(st.outcome_design(rows, Eigen::all));
            Eigen::VectorXd prop;
            if (!propensity_models.empty()) {
                prop = propensity_models[static_cast<std::size_t>(k)].predict_design(propensity_design(units, Eigen::all));
            }
            for (std::size_t r = 0; r < units.size(); ++r) {
                const long i = units[r];
                fit.mu_v(i) = mean(static_cast<long>(r));
                const double e = propensity_models.empty() ? *options.primary_propensity : prop(static_cast<long>(r));
                fit.mu_t(i) = clip(e, eps, fit.clipped_propensities);
            }
        }
    }

    if (options.selection && sample.n0() > 0 && sample.n1() > 0) {
        std::vector<double> s_target(sample.s.begin(), sample.s.end());
        const auto models = fit_logistic_folds(propensity_design, s_target, fit.fold, folds, options.propensity_basis,
                                               p, options.ridge_lambda);
        fit.mu_s = Eigen::VectorXd::Constant(n, kNaN);
        for (int k = 0; k < folds; ++k) {
            fit.fold_models[static_cast<std::size_t>(k)].mu_s = models[static_cast<std::size_t>(k)];
            const auto units = rows_where(fit.fold, k, true);
            if (units.empty()) continue;
            const Eigen::VectorXd pred =
                models[static_cast<std::size_t>(k)].predict_design(propensity_design(units, Eigen::all));
            for (std::size_t r = 0; r < units.size(); ++r) {
                fit.mu_s(units[r]) = clip(pred(static_cast<long>(r)), eps, fit.clipped_selection);
            }
        }
    }
    return fit;
}

Residuals residuals(const Sample& sample, const NuisanceFit& fit) {
    const long n = sample.size();
    if (fit.size() != n || fit.mu_v.size() != n || fit.mu_t.size() != n) {
        throw ConsistencyError("nuisance fit does not cover the sample (" + std::to_string(fit.size()) + " vs " +
                               std::to_string(n) + " units)");
    }
    Residuals out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (long i = 0; i < n; ++i) {
        out.r_v(i) = sample.v[static_cast<std::size_t>(i)] - fit.mu_v(i);
        out.r_t(i) = static_cast<double>(sample.t[static_cast<std::size_t>(i)]) - fit.mu_t(i);
    }
    return out;
}

}  // namespace fuseate
