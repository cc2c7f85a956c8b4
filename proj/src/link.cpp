#include "fuseate/link.hpp"

#include "fuseate/errors.hpp"

namespace fuseate {

std::string to_string(LinkKnowledge knowledge) {
    switch (knowledge) {
        case LinkKnowledge::fully_known: return "fully_known";
        case LinkKnowledge::beta_known: return "beta_known";
        case LinkKnowledge::unknown: return "unknown";
    }
    return "unknown";
}

std::string to_string(FunctionForm form) {
    switch (form) {
        case FunctionForm::constant: return "constant";
        case FunctionForm::linear_x1: return "linear_x1";
        case FunctionForm::linear_all: return "linear_all";
        case FunctionForm::table: return "table";
    }
    return "constant";
}

LinkKnowledge knowledge_from_string(const std::string& name) {
    if (name == "fully_known") return LinkKnowledge::fully_known;
    if (name == "beta_known") return LinkKnowledge::beta_known;
    if (name == "unknown") return LinkKnowledge::unknown;
    throw ConfigError("unknown link knowledge '" + name + "'");
}

FunctionForm form_from_string(const std::string& name) {
    if (name == "constant") return FunctionForm::constant;
    if (name == "linear_x1") return FunctionForm::linear_x1;
    if (name == "linear_all") return FunctionForm::linear_all;
    if (name == "table") return FunctionForm::table;
    throw ConfigError("unknown function form '" + name + "'");
}

LinkFunction LinkFunction::constant(double c) {
    LinkFunction f;
    f.coefficients = Eigen::VectorXd::Constant(1, c);
    return f;
}

LinkFunction LinkFunction::linear_x1(double c0, double c1) {
    LinkFunction f;
    f.form = FunctionForm::linear_x1;
    f.coefficients = Eigen::Vector2d(c0, c1);
    return f;
}

LinkFunction LinkFunction::linear_all(Eigen::VectorXd coefficients) {
    if (coefficients.size() < 1) throw ConfigError("linear_all needs an intercept");
    LinkFunction f;
    f.form = FunctionForm::linear_all;
    f.coefficients = std::move(coefficients);
    return f;
}

LinkFunction LinkFunction::from_table(std::vector<double> values) {
    LinkFunction f;
    f.form = FunctionForm::table;
    f.coefficients.resize(0);
    f.table = std::move(values);
    return f;
}

double LinkFunction::operator()(std::span<const double> x, long unit) const {
    switch (form) {
        case FunctionForm::constant: return coefficients(0);
        case FunctionForm::linear_x1: return coefficients(0) + coefficients(1) * x[0];
        case FunctionForm::linear_all: {
            if (static_cast<std::size_t>(coefficients.size()) != x.size() + 1) {
                throw InputError("linear_all link has " + std::to_string(coefficients.size() - 1) +
                                 " slopes for " + std::to_string(x.size()) + " covariates");
            }
            double value = coefficients(0);
            for (std::size_t j = 0; j < x.size(); ++j) value += coefficients(static_cast<long>(j) + 1) * x[j];
            return value;
        }
        case FunctionForm::table:
            if (unit < 0 || static_cast<std::size_t>(unit) >= table.size()) {
                throw InputError("link table has no entry for unit " + std::to_string(unit));
            }
            return table[static_cast<std::size_t>(unit)];
    }
    return 0.0;
}

LinkFunction LinkFunction::scaled(double k) const {
    LinkFunction out = *this;
    out.coefficients *= k;
    for (double& value : out.table) value *= k;
    return out;
}

int LinkFunction::class_dimension(FunctionForm form, int p) {
    switch (form) {
        case FunctionForm::constant: return 1;
        case FunctionForm::linear_x1: return 2;
        case FunctionForm::linear_all: return p + 1;
        case FunctionForm::table: break;
    }
    throw ConfigError("table is not an estimable function class");
}

void LinkFunction::class_row(FunctionForm form, std::span<const double> x, double* out) {
    out[0] = 1.0;
    if (form == FunctionForm::linear_x1) out[1] = x[0];
    if (form == FunctionForm::linear_all) {
        for (std::size_t j = 0; j < x.size(); ++j) out[j + 1] = x[j];
    }
}

bool LinkFunction::operator==(const LinkFunction& other) const {
    return form == other.form && coefficients.size() == other.coefficients.size() &&
           coefficients == other.coefficients && table == other.table;
}

LinkSpec LinkSpec::fully_known(LinkFunction alpha, LinkFunction beta) {
    LinkSpec spec;
    spec.knowledge = LinkKnowledge::fully_known;
    spec.alpha = std::move(alpha);
    spec.beta = std::move(beta);
    return spec;
}

LinkSpec LinkSpec::beta_known(LinkFunction beta, FunctionForm alpha_class) {
    LinkSpec spec;
    spec.knowledge = LinkKnowledge::beta_known;
    spec.beta = std::move(beta);
    spec.alpha_class = alpha_class;
    return spec;
}

LinkSpec LinkSpec::unknown(FunctionForm alpha_class, FunctionForm beta_class) {
    LinkSpec spec;
    spec.knowledge = LinkKnowledge::unknown;
    spec.alpha_class = alpha_class;
    spec.beta_class = beta_class;
    return spec;
}

LinkSpec LinkSpec::from_config(const DgpConfig& cfg) {
    return fully_known(LinkFunction::linear_x1(cfg.rho0, cfg.rho1), LinkFunction::constant(0.0));
}

void LinkSpec::validate() const {
    switch (knowledge) {
        case LinkKnowledge::fully_known:
            if (!alpha || !beta) throw ConfigError("fully_known link needs both alpha and beta forms");
            break;
        case LinkKnowledge::beta_known:
            if (!beta) throw ConfigError("beta_known link needs a beta form");
            if (alpha_class == FunctionForm::table) throw ConfigError("alpha class cannot be a table");
            break;
        case LinkKnowledge::unknown:
            if (alpha_class == FunctionForm::table || beta_class == FunctionForm::table) {
                throw ConfigError("estimated link classes cannot be tables");
            }
            break;
    }
}

}  // namespace fuseate
