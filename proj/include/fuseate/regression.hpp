#pragma once

#include "fuseate/dgp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>

namespace fuseate {

enum class RegressionKind { linear, logistic };

/// Covariate expansion applied before fitting. `quadratic` appends squares and
/// all pairwise products to the raw covariates.
enum class Basis { raw, quadratic };

std::string to_string(RegressionKind kind);
std::string to_string(Basis basis);
Basis basis_from_string(const std::string& name);

/// Number of expanded columns, not counting the intercept.
int expanded_dimension(int p, Basis basis);

/// Design matrix [1, phi(x)] for every row of `x`.
Eigen::MatrixXd design_matrix(const CovariateMatrix& x, Basis basis);
void design_row(std::span<const double> x, Basis basis, Eigen::Ref<Eigen::RowVectorXd> out);

/// A fitted linear or logistic regression on an expanded basis. The first
/// coefficient is the (unpenalized) intercept.
struct RegressionModel {
    RegressionKind kind = RegressionKind::linear;
    Basis basis = Basis::raw;
    Eigen::VectorXd coefficients;
    double ridge_lambda = 0.0;
    int fitted_dimension = 0;
    int iterations = 0;

    double predict(std::span<const double> x) const;
    /// Predictions for a design matrix built with the same basis.
    Eigen::VectorXd predict_design(const Eigen::MatrixXd& design) const;
    Eigen::VectorXd predict(const CovariateMatrix& x) const { return predict_design(design_matrix(x, basis)); }
};

/// Linear least squares with an optional ridge penalty on the non-intercept
/// coefficients, or penalized logistic regression by Newton iterations
/// (stops when the gradient norm of the mean log-likelihood is <= 1e-8 or
/// after 100 iterations).
///
/// `ridge_lambda` unset selects 1e-6 * trace(G)/d, where G is the Gram matrix
/// of the non-intercept columns and d their count. With lambda = 0 the rows
/// must number at least d + 1.
RegressionModel fit_regression(const CovariateMatrix& features, std::span<const double> targets,
                               RegressionKind kind, Basis basis,
                               std::optional<double> ridge_lambda = std::nullopt);

/// Same as fit_regression but on a prebuilt design matrix (intercept first).
RegressionModel fit_design(const Eigen::MatrixXd& design, std::span<const double> targets, RegressionKind kind,
                           Basis basis, int fitted_dimension, std::optional<double> ridge_lambda);

/// Sufficient statistics of a linear least-squares problem. Adding and
/// subtracting them is how cross-fitting gets per-fold training sets without
/// refactoring the data.
struct NormalEquations {
    Eigen::MatrixXd gram;
    Eigen::VectorXd rhs;
    long rows = 0;

    static NormalEquations accumulate(const Eigen::MatrixXd& design, std::span<const double> targets);
    NormalEquations& operator+=(const NormalEquations& other);
    NormalEquations operator-(const NormalEquations& other) const;
};

RegressionModel solve_linear(const NormalEquations& eq, Basis basis, int fitted_dimension,
                             std::optional<double> ridge_lambda);

}  // namespace fuseate
