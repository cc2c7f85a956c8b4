#include "fuseate/regression.hpp"

#include "fuseate/errors.hpp"

#include <cmath>

namespace fuseate {

std::string to_string(RegressionKind kind) {
    return kind == RegressionKind::linear ? "linear-least-squares" : "logistic";
}

std::string to_string(Basis basis) { return basis == Basis::raw ? "raw" : "quadratic"; }

Basis basis_from_string(const std::string& name) {
    if (name == "raw") return Basis::raw;
    if (name == "quadratic") return Basis::quadratic;
    throw ConfigError("unknown basis '" + name + "' (expected raw or quadratic)");
}

int expanded_dimension(int p, Basis basis) {
    return basis == Basis::raw ? p : p + p + p * (p - 1) / 2;
}

void design_row(std::span<const double> x, Basis basis, Eigen::Ref<Eigen::RowVectorXd> out) {
    const auto p = static_cast<int>(x.size());
    out(0) = 1.0;
    for (int j = 0; j < p; ++j) out(1 + j) = x[static_cast<std::size_t>(j)];
    if (basis == Basis::raw) return;
    int col = 1 + p;
    for (int j = 0; j < p; ++j) out(col++) = x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    for (int j = 0; j < p; ++j)
        for (int k = j + 1; k < p; ++k) out(col++) = x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(k)];
}

Eigen::MatrixXd design_matrix(const CovariateMatrix& x, Basis basis) {
    const auto p = static_cast<int>(x.cols());
    const long n = x.rows();
    Eigen::MatrixXd design(n, 1 + expanded_dimension(p, basis));
    design.col(0).setOnes();
    design.middleCols(1, p) = x;
    if (basis == Basis::quadratic) {
        int col = 1 + p;
        for (int j = 0; j < p; ++j) design.col(col++) = x.col(j).array().square();
        for (int j = 0; j < p; ++j)
            for (int k = j + 1; k < p; ++k) design.col(col++) = x.col(j).cwiseProduct(x.col(k));
    }
    return design;
}

double RegressionModel::predict(std::span<const double> x) const {
    Eigen::RowVectorXd row(coefficients.size());
    design_row(x, basis, row);
    const double eta = row.dot(coefficients);
    return kind == RegressionKind::linear ? eta : expit(eta);
}

Eigen::VectorXd RegressionModel::predict_design(const Eigen::MatrixXd& design) const {
    Eigen::VectorXd eta = design * coefficients;
    if (kind == RegressionKind::logistic) eta = eta.unaryExpr([](double e) { return expit(e); });
    return eta;
}

NormalEquations NormalEquations::accumulate(const Eigen::MatrixXd& design, std::span<const double> targets) {
    const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<long>(targets.size()));
    NormalEquations eq;
    const long k = design.cols();
    eq.gram = Eigen::MatrixXd::Zero(k, k);
    eq.gram.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
    eq.gram = eq.gram.selfadjointView<Eigen::Lower>();
    eq.rhs = design.transpose() * y;
    eq.rows = design.rows();
    return eq;
}

NormalEquations& NormalEquations::operator+=(const NormalEquations& other) {
    if (rows == 0 && gram.size() == 0) {
        *this = other;
        return *this;
    }
    gram += other.gram;
    rhs += other.rhs;
    rows += other.rows;
    return *this;
}

NormalEquations NormalEquations::operator-(const NormalEquations& other) const {
    NormalEquations out;
    out.gram = gram - other.gram;
    out.rhs = rhs - other.rhs;
    out.rows = rows - other.rows;
    return out;
}

namespace {

double default_lambda(const Eigen::MatrixXd& gram) {
    const long d = gram.rows() - 1;
    if (d <= 0) return 0.0;
    return 1e-6 * gram.diagonal().tail(d).sum() / static_cast<double>(d);
}

Eigen::VectorXd solve_penalized(Eigen::MatrixXd system, const Eigen::VectorXd& rhs, double lambda) {
    system.diagonal().tail(system.rows() - 1).array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    if (ldlt.info() != Eigen::Success) throw NumericalError("normal equations could not be factorized");
    const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
    if (d.minCoeff() <= 1e-13 * d.maxCoeff()) throw NumericalError("normal equations are singular beyond ridge rescue");
    Eigen::VectorXd beta = ldlt.solve(rhs);
    if (!beta.allFinite()) throw NumericalError("normal equations produced non-finite coefficients");
    return beta;
}

double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

}  // namespace

RegressionModel solve_linear(const NormalEquations& eq, Basis basis, int fitted_dimension,
                             std::optional<double> ridge_lambda) {
    const long k = eq.gram.rows();
    const double lambda = ridge_lambda.value_or(default_lambda(eq.gram));
    if (lambda < 0.0) throw InputError("ridge_lambda must be nonnegative");
    if (lambda == 0.0 && eq.rows < k) {
        throw InputError("unpenalized fit needs at least " + std::to_string(k) + " rows, got " +
                         std::to_string(eq.rows));
    }
    RegressionModel model;
    model.kind = RegressionKind::linear;
    model.basis = basis;
    model.ridge_lambda = lambda;
    model.fitted_dimension = fitted_dimension;
    model.coefficients = solve_penalized(eq.gram, eq.rhs, lambda);
    return model;
}

RegressionModel fit_design(const Eigen::MatrixXd& design, std::span<const double> targets, RegressionKind kind,
                           Basis basis, int fitted_dimension, std::optional<double> ridge_lambda) {
    if (design.rows() != static_cast<long>(targets.size())) throw InputError("design rows and targets differ in length");
    if (design.rows() == 0) throw InputError("cannot fit a regression on zero rows");
    if (kind == RegressionKind::linear) {
        return solve_linear(NormalEquations::accumulate(design, targets), basis, fitted_dimension, ridge_lambda);
    }

    long ones = 0;
    for (double y : targets) {
        if (y != 0.0 && y != 1.0) throw InputError("logistic targets must be 0/1");
        ones += (y == 1.0);
    }
    const long n = design.rows();
    if (ones == 0 || ones == n) throw InputError("logistic targets are constant; the likelihood has no maximizer");

    const Eigen::Map<const Eigen::VectorXd> y(targets.data(), n);
    const long k = design.cols();
    Eigen::MatrixXd gram = design.transpose() * design;
    const double lambda = ridge_lambda.value_or(default_lambda(gram));
    if (lambda < 0.0) throw InputError("ridge_lambda must be nonnegative");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    const double ybar = static_cast<double>(ones) / static_cast<double>(n);
    beta(0) = std::log(ybar / (1.0 - ybar));

    auto objective = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& eta) {
        double ll = 0.0;
        for (long i = 0; i < n; ++i) ll += y(i) * eta(i) - softplus(eta(i));
        return ll - 0.5 * lambda * b.tail(k - 1).squaredNorm();
    };

    Eigen::VectorXd eta = design * beta;
    double current = objective(beta, eta);
    int iter = 0;
    for (; iter < 100; ++iter) {
        const Eigen::VectorXd prob = eta.unaryExpr([](double e) { return expit(e); });
        Eigen::VectorXd grad = design.transpose() * (y - prob);
        grad.tail(k - 1) -= lambda * beta.tail(k - 1);
        // Per-row scale: a summed gradient cannot get below ~n * eps.
        if (grad.norm() <= 1e-8 * static_cast<double>(n)) break;

        const Eigen::VectorXd weight = prob.array() * (1.0 - prob.array());
        Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(k, k);
        hessian.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose() * weight.cwiseSqrt().asDiagonal());
        hessian = hessian.selfadjointView<Eigen::Lower>();
        hessian.diagonal().tail(k - 1).array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
        if (ldlt.info() != Eigen::Success) throw NumericalError("logistic Hessian could not be factorized");
        const Eigen::VectorXd step = ldlt.solve(grad);
        if (!step.allFinite()) throw NumericalError("logistic Newton step is not finite");

        double scale = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 30; ++halving, scale *= 0.5) {
            const Eigen::VectorXd candidate = beta + scale * step;
            const Eigen::VectorXd candidate_eta = design * candidate;
            const double value = objective(candidate, candidate_eta);
            if (value >= current) {
                beta = candidate;
                eta = candidate_eta;
                current = value;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }

    RegressionModel model;
    model.kind = RegressionKind::logistic;
    model.basis = basis;
    model.coefficients = beta;
    model.ridge_lambda = lambda;
    model.fitted_dimension = fitted_dimension;
    model.iterations = iter;
    return model;
}

RegressionModel fit_regression(const CovariateMatrix& features, std::span<const double> targets,
                               RegressionKind kind, Basis basis, std::optional<double> ridge_lambda) {
    if (features.rows() != static_cast<long>(targets.size())) throw InputError("features and targets differ in length");
    for (double y : targets) {
        if (!std::isfinite(y)) throw InputError("regression targets must be finite");
    }
    return fit_design(design_matrix(features, basis), targets, kind, basis, static_cast<int>(features.cols()),
                      ridge_lambda);
}

}  // namespace fuseate
