#include "fuseate/dgp.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/random.hpp"

#include <cmath>
#include <string>

namespace fuseate {

double expit(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

DgpConfig DgpConfig::benchmark() { return DgpConfig{}; }

DgpConfig DgpConfig::constant_link_benchmark() {
    DgpConfig cfg;
    cfg.rho1 = 0.0;
    cfg.gamma1 = 0.0;
    cfg.gamma2 = 0.0;
    return cfg;
}

void DgpConfig::validate() const {
    if (p < 3) throw ConfigError("DgpConfig: p must be >= 3 (got " + std::to_string(p) + ")");
    if (n < 1) throw ConfigError("DgpConfig: n must be >= 1");
    if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) throw ConfigError("DgpConfig: sigma_w must be positive");
    if (!(sigma_y > 0.0) || !std::isfinite(sigma_y)) throw ConfigError("DgpConfig: sigma_y must be positive");
    for (double c : {a0, a1, a2, zeta1, gamma0, gamma1, gamma2, b0, b1, b2, b3, rho0, rho1}) {
        if (!std::isfinite(c)) throw ConfigError("DgpConfig: coefficients must be finite");
    }
}

double DgpConfig::selection_probability(std::span<const double> x) const {
    return expit(a0 + a1 * x[0] + a2 * x[1]);
}

double DgpConfig::treatment_probability(std::span<const double> x, int s) const {
    return s == 0 ? 0.5 : expit(zeta1 * x[0]);
}

double DgpConfig::outcome_mean(std::span<const double> x, int s, int t) const {
    const double w = w_mean(x, t);
    return s == 0 ? alpha(x) * w : w;
}

double DgpConfig::stratum_mean(std::span<const double> x, int s) const {
    const double e = treatment_probability(x, s);
    return (1.0 - e) * outcome_mean(x, s, 0) + e * outcome_mean(x, s, 1);
}

Sample::Sample(long n, int p)
    : x(n, p), s(static_cast<std::size_t>(n), 0), t(static_cast<std::size_t>(n), 0),
      v(static_cast<std::size_t>(n), 0.0) {}

long Sample::count_stratum(int stratum) const {
    long count = 0;
    for (auto si : s) count += (si == stratum);
    return count;
}

long Sample::count_cell(int stratum, int arm) const {
    long count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) count += (s[i] == stratum && t[i] == arm);
    return count;
}

Observation Sample::observation(long i) const {
    return Observation{x.row(i).transpose(), s[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(i)],
                       v[static_cast<std::size_t>(i)]};
}

Sample Sample::from_observations(const std::vector<Observation>& obs) {
    if (obs.empty()) return Sample{};
    const auto p = static_cast<int>(obs.front().x.size());
    Sample out(static_cast<long>(obs.size()), p);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs[i].x.size() != p) throw InputError("observations must share covariate dimension");
        out.x.row(static_cast<long>(i)) = obs[i].x.transpose();
        out.s[i] = static_cast<std::uint8_t>(obs[i].s);
        out.t[i] = static_cast<std::uint8_t>(obs[i].t);
        out.v[i] = obs[i].v;
    }
    out.validate();
    return out;
}

void Sample::validate() const {
    const auto n = static_cast<std::size_t>(x.rows());
    if (s.size() != n || t.size() != n || v.size() != n) throw InputError("Sample: column lengths differ");
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] > 1) throw InputError("Sample: s must be 0/1 (unit " + std::to_string(i) + ")");
        if (t[i] > 1) throw InputError("Sample: t must be 0/1 (unit " + std::to_string(i) + ")");
        if (!std::isfinite(v[i])) throw InputError("Sample: v must be finite (unit " + std::to_string(i) + ")");
    }
    if (!x.allFinite()) throw InputError("Sample: covariates must be finite");
}

bool Sample::operator==(const Sample& other) const {
    return x.rows() == other.x.rows() && x.cols() == other.x.cols() && x == other.x && s == other.s &&
           t == other.t && v == other.v;
}

namespace {

// Draw order per unit: p covariates, S, T, one noise variate.
struct UnitDraw {
    int s;
    int t;
    double v;
};

UnitDraw draw_unit(const DgpConfig& cfg, Rng& rng, double* x) {
    for (int j = 0; j < cfg.p; ++j) x[j] = rng.normal();
    const std::span<const double> xs(x, static_cast<std::size_t>(cfg.p));
    const int s = rng.bernoulli(cfg.selection_probability(xs)) ? 1 : 0;
    const int t = rng.bernoulli(cfg.treatment_probability(xs, s)) ? 1 : 0;
    const double noise = rng.normal();
    const double v = cfg.outcome_mean(xs, s, t) + cfg.noise_sd(s) * noise;
    return {s, t, v};
}

}  // namespace

Sample generate_dataset(const DgpConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Sample out(cfg.n, cfg.p);
    for (long i = 0; i < cfg.n; ++i) {
        const auto [s, t, v] = draw_unit(cfg, rng, out.x.row(i).data());
        out.s[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(s);
        out.t[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(t);
        out.v[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

Sample generate_fused_dataset(const DgpConfig& cfg, long n0, long n1, std::uint64_t seed) {
    cfg.validate();
    if (n0 < 0 || n1 < 0 || n0 + n1 < 1) throw ConfigError("generate_fused_dataset: need n0, n1 >= 0 and n0 + n1 >= 1");
    Rng rng(seed);
    Sample out(n0 + n1, cfg.p);
    std::vector<double> x(static_cast<std::size_t>(cfg.p));
    long filled[2] = {0, 0};
    const long quota[2] = {n0, n1};
    const long max_draws = 1000 * (n0 + n1) + 1'000'000;
    long row = 0;
    for (long draws = 0; row < n0 + n1; ++draws) {
        if (draws >= max_draws) throw ConfigError("generate_fused_dataset: stratum quota unreachable under selection model");
        const auto [s, t, v] = draw_unit(cfg, rng, x.data());
        if (filled[s] == quota[s]) continue;
        ++filled[s];
        out.x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), cfg.p);
        out.s[static_cast<std::size_t>(row)] = static_cast<std::uint8_t>(s);
        out.t[static_cast<std::size_t>(row)] = static_cast<std::uint8_t>(t);
        out.v[static_cast<std::size_t>(row)] = v;
        ++row;
    }
    return out;
}

MonteCarloValue true_ate(const DgpConfig& cfg, long mc_draws, std::uint64_t seed) {
    cfg.validate();
    if (mc_draws < 10'000) throw PrecisionError("true_ate: mc_draws must be >= 1e4");
    Rng rng(seed);
    // Accumulate deviations from the first draw's value so a constant effect
    // comes out exact.
    double x[3] = {0.0, 0.0, 0.0};
    double anchor = 0.0;
    double sum_w = 0.0, sum_wd = 0.0, sum_w2d = 0.0, sum_w2d2 = 0.0, sum_w2 = 0.0;
    for (long i = 0; i < mc_draws; ++i) {
        x[0] = rng.normal();
        x[1] = rng.normal();
        const std::span<const double> xs(x, 3);
        const double w = 1.0 - cfg.selection_probability(xs);
        const double theta = cfg.cate(xs);
        if (i == 0) anchor = theta;
        const double d = theta - anchor;
        sum_w += w;
        sum_wd += w * d;
        sum_w2 += w * w;
        sum_w2d += w * w * d;
        sum_w2d2 += w * w * d * d;
    }
    const double mean_d = sum_wd / sum_w;
    // Delta-method standard error of the ratio estimator.
    const double ss = sum_w2d2 - 2.0 * mean_d * sum_w2d + mean_d * mean_d * sum_w2;
    return {anchor + mean_d, std::sqrt(std::max(ss, 0.0)) / sum_w};
}

}  // namespace fuseate
