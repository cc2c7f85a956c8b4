#pragma once

#include "fuseate/dgp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <vector>

namespace testsupport {

// Textbook OLS through a QR factorization, kept apart from the library's
// normal-equation solver. Returns coefficients and their standard errors.
struct OlsOracle {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    double sigma_sq = 0.0;
};

inline OlsOracle ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    OlsOracle out;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    out.coef = qr.solve(y);
    const Eigen::VectorXd resid = y - design * out.coef;
    const double df = static_cast<double>(design.rows() - design.cols());
    out.sigma_sq = resid.squaredNorm() / df;
    const Eigen::MatrixXd cov = (design.transpose() * design).inverse() * out.sigma_sq;
    out.se = cov.diagonal().array().sqrt();
    return out;
}

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

// Benchmark with the noise switched off. 1e-300 times a standard normal
// vanishes when added to O(1) means.
inline fuseate::DgpConfig noiseless(fuseate::DgpConfig cfg) {
    cfg.sigma_w = 1e-300;
    cfg.sigma_y = 1e-300;
    return cfg;
}

}  // namespace testsupport
