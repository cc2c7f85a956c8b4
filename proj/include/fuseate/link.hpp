#pragma once

#include "fuseate/dgp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fuseate {

/// |alpha(x)| must stay at or above this wherever the estimators divide by it.
inline constexpr double kAlphaMin = 1e-3;

enum class LinkKnowledge { fully_known, beta_known, unknown };

/// constant: c; linear_x1: c0 + c1 x1; linear_all: c0 + sum_j cj xj;
/// table: one value per sample unit, looked up by unit index.
enum class FunctionForm { constant, linear_x1, linear_all, table };

std::string to_string(LinkKnowledge knowledge);
std::string to_string(FunctionForm form);
LinkKnowledge knowledge_from_string(const std::string& name);
FunctionForm form_from_string(const std::string& name);

/// One side of the outcome link, alpha(x) or beta(x).
struct LinkFunction {
    FunctionForm form = FunctionForm::constant;
    Eigen::VectorXd coefficients = Eigen::VectorXd::Zero(1);
    std::vector<double> table;

    static LinkFunction constant(double c);
    static LinkFunction linear_x1(double c0, double c1);
    static LinkFunction linear_all(Eigen::VectorXd coefficients);
    static LinkFunction from_table(std::vector<double> values);

    /// `unit` is required by table forms and ignored otherwise.
    double operator()(std::span<const double> x, long unit = -1) const;

    /// k * f(x).
    LinkFunction scaled(double k) const;

    /// Number of basis columns of the form's function class (intercept included).
    static int class_dimension(FunctionForm form, int p);
    /// Basis row of the function class at x: [1], [1, x1] or [1, x].
    static void class_row(FunctionForm form, std::span<const double> x, double* out);

    bool operator==(const LinkFunction& other) const;
};

/// What is known about the link nu_Y^t(x) = alpha(x) nu_W^t(x) + beta(x).
/// The *_class fields name the function classes searched when a side is
/// estimated by the two-stage fit.
struct LinkSpec {
    LinkKnowledge knowledge = LinkKnowledge::fully_known;
    std::optional<LinkFunction> alpha;
    std::optional<LinkFunction> beta;
    FunctionForm alpha_class = FunctionForm::linear_x1;
    FunctionForm beta_class = FunctionForm::linear_x1;

    static LinkSpec fully_known(LinkFunction alpha, LinkFunction beta);
    static LinkSpec beta_known(LinkFunction beta, FunctionForm alpha_class);
    static LinkSpec unknown(FunctionForm alpha_class, FunctionForm beta_class);

    /// The simulation's true link: alpha = rho0 + rho1 x1, beta = 0.
    static LinkSpec from_config(const DgpConfig& cfg);

    /// Throws ConfigError when the knowledge state lacks a needed form or a
    /// class is `table`.
    void validate() const;

    bool operator==(const LinkSpec& other) const = default;
};

}  // namespace fuseate
