#include "fuseate/experiments.hpp"

#include "fuseate/errors.hpp"
#include "fuseate/nuisance.hpp"
#include "fuseate/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace fuseate {

namespace {

constexpr std::uint64_t kSolverStream = 0x5e1ec7104ULL;
constexpr std::uint64_t kOracleStream = 1ULL << 40;
constexpr std::uint64_t kFoldStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void parallel_for(long count, int threads, const std::function<void(long)>& fn) {
    const int workers = static_cast<int>(std::clamp<long>(threads, 1, std::max(count, 1L)));
    if (workers == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (long i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double solve_a0_for_log_ratio(const DgpConfig& cfg, double log_ratio, std::uint64_t seed, long mc_draws) {
    if (!std::isfinite(log_ratio)) throw ConfigError("log_ratio must be finite");
    Rng rng(seed);
    std::vector<double> eta(static_cast<std::size_t>(mc_draws));
    for (auto& e : eta) {
        const double x1 = rng.normal();
        const double x2 = rng.normal();
        e = cfg.a1 * x1 + cfg.a2 * x2;
    }
    auto log_ratio_at = [&](double a0) {
        double q = 0.0;
        for (double e : eta) q += expit(a0 + e);
        q /= static_cast<double>(mc_draws);
        return std::log(q) - std::log1p(-q);
    };
    double lo = -20.0, hi = 20.0;
    const double f_lo = log_ratio_at(lo), f_hi = log_ratio_at(hi);
    if (log_ratio < f_lo || log_ratio > f_hi) {
        throw ConfigError("log_ratio " + std::to_string(log_ratio) + " is not reachable with a0 in [-20, 20]");
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f = log_ratio_at(mid);
        if (std::abs(f - log_ratio) <= 1e-3) return mid;
        (f < log_ratio ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void ExperimentGrid::validate() const {
    if (n_values.empty() || p_values.empty() || log_ratio_values.empty()) throw ConfigError("grid lists must be non-empty");
    if (methods.empty()) throw ConfigError("grid needs at least one method");
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (folds < 1) throw ConfigError("folds must be >= 1");
    if (oracle_draws < 10'000) throw ConfigError("oracle_draws must be >= 1e4");
    for (long n : n_values) {
        if (n < 1) throw ConfigError("n values must be >= 1");
    }
    for (int p : p_values) {
        if (p < 3) throw ConfigError("p values must be >= 3");
    }
    base_cfg.validate();
    two_stage_link.validate();
}

CellSummary summarize(const std::vector<ExperimentRecord>& records, double truth) {
    CellSummary out;
    out.truth = truth;
    if (!records.empty()) {
        out.method = records.front().method;
        out.n = records.front().n;
        out.p = records.front().p;
        out.log_ratio = records.front().log_ratio;
    }
    out.replications = static_cast<int>(records.size());
    double sum = 0.0;
    int ok = 0, covered = 0;
    for (const auto& r : records) {
        if (r.failed) {
            ++out.n_failed;
            continue;
        }
        sum += r.estimate;
        covered += r.covered_truth;
        ++ok;
    }
    out.flagged = out.n_failed * 100 > out.replications;
    if (ok == 0) {
        out.mse = out.bias = out.variance = out.coverage = kNaN;
        return out;
    }
    const double mean = sum / ok;
    double sq_dev = 0.0, sq_err = 0.0;
    for (const auto& r : records) {
        if (r.failed) continue;
        sq_dev += (r.estimate - mean) * (r.estimate - mean);
        sq_err += (r.estimate - truth) * (r.estimate - truth);
    }
    out.bias = mean - truth;
    out.variance = sq_dev / ok;
    out.mse = sq_err / ok;
    out.coverage = static_cast<double>(covered) / ok;
    return out;
}

GridResult run_grid(const ExperimentGrid& grid, int threads) {
    grid.validate();
    const bool need_marginal = std::find(grid.methods.begin(), grid.methods.end(), Method::theta_a) != grid.methods.end();
    const std::size_t m = grid.methods.size();

    GridResult result;
    long cell_index = 0;
    for (long n : grid.n_values) {
        for (int p : grid.p_values) {
            for (double lr : grid.log_ratio_values) {
                const std::uint64_t cell_seed = derive_seed(grid.seed, static_cast<std::uint64_t>(cell_index++));
                DgpConfig cfg = grid.base_cfg;
                cfg.n = n;
                cfg.p = p;
                cfg.a0 = solve_a0_for_log_ratio(cfg, lr, derive_seed(grid.seed, kSolverStream));
                const double truth = true_ate(cfg, grid.oracle_draws, derive_seed(cell_seed, kOracleStream)).value;
                const LinkSpec true_link = LinkSpec::from_config(cfg);

                std::vector<ExperimentRecord> records(static_cast<std::size_t>(grid.replications) * m);
                parallel_for(grid.replications, threads, [&](long rep) {
                    const auto start = std::chrono::steady_clock::now();
                    const std::uint64_t rep_seed = derive_seed(cell_seed, static_cast<std::uint64_t>(rep));
                    auto* slot = &records[static_cast<std::size_t>(rep) * m];
                    for (std::size_t j = 0; j < m; ++j) {
                        slot[j] = ExperimentRecord{};
                        slot[j].method = grid.methods[j];
                        slot[j].n = n;
                        slot[j].p = p;
                        slot[j].log_ratio = lr;
                        slot[j].replication_index = static_cast<int>(rep);
                    }
                    std::optional<Sample> sample;
                    std::optional<NuisanceFit> fit;
                    std::string setup_error;
                    try {
                        sample = generate_dataset(cfg, rep_seed);
                        NuisanceOptions opts;
                        opts.folds = grid.folds;
                        opts.outcome_basis = grid.outcome_basis;
                        opts.propensity_basis = grid.propensity_basis;
                        if (grid.known_primary_propensity) opts.primary_propensity = 0.5;
                        opts.auxiliary_marginal = need_marginal;
                        opts.selection = false;
                        opts.seed = derive_seed(rep_seed, kFoldStream);
                        fit = cross_fit(*sample, opts);
                    } catch (const Error& e) {
                        setup_error = e.what();
                    }
                    const double setup_ms = elapsed_ms(start);
                    for (std::size_t j = 0; j < m; ++j) {
                        auto& rec = slot[j];
                        if (!fit) {
                            rec.failed = true;
                            rec.error = setup_error;
                            continue;
                        }
                        const auto method_start = std::chrono::steady_clock::now();
                        try {
                            const LinkSpec& link = rec.method == Method::theta_b ? grid.two_stage_link : true_link;
                            const auto est = estimate(rec.method, *sample, *fit, link);
                            rec.estimate = est.estimate;
                            rec.std_error = est.std_error;
                            rec.covered_truth = est.ci_low <= truth && truth <= est.ci_high;
                        } catch (const Error& e) {
                            rec.failed = true;
                            rec.error = e.what();
                        }
                        rec.runtime_ms = setup_ms + elapsed_ms(method_start);
                    }
                });

                for (std::size_t j = 0; j < m; ++j) {
                    std::vector<ExperimentRecord> per_method;
                    for (long rep = 0; rep < grid.replications; ++rep) {
                        per_method.push_back(records[static_cast<std::size_t>(rep) * m + j]);
                    }
                    auto summary = summarize(per_method, truth);
                    summary.method = grid.methods[j];
                    summary.n = n;
                    summary.p = p;
                    summary.log_ratio = lr;
                    summary.a0 = cfg.a0;
                    result.summaries.push_back(summary);
                }
                result.records.insert(result.records.end(), records.begin(), records.end());
            }
        }
    }
    return result;
}

std::vector<RateRow> run_rate_experiment(const DgpConfig& base_cfg, const std::vector<long>& n0_values,
                                         const std::vector<long>& n1_values, int replications, std::uint64_t seed,
                                         const RateOptions& options, int threads) {
    base_cfg.validate();
    if (n0_values.empty() || n1_values.empty()) throw InputError("rate experiment: n0 and n1 lists must be non-empty");
    if (replications < 1) throw InputError("rate experiment: replications must be >= 1");
    for (long n1 : n1_values) {
        if (n1 < 1) throw InputError("rate experiment: n1 must be >= 1 (the two-stage fit needs auxiliary data)");
    }
    for (long n0 : n0_values) {
        if (n0 < 2) throw InputError("rate experiment: n0 must be >= 2");
    }
    const LinkSpec link = LinkSpec::unknown(options.alpha_class, options.beta_class);

    std::vector<RateRow> rows;
    long pair_index = 0;
    for (long n0 : n0_values) {
        for (long n1 : n1_values) {
            const std::uint64_t pair_seed = derive_seed(seed, static_cast<std::uint64_t>(pair_index++));
            std::vector<double> one(static_cast<std::size_t>(replications), kNaN);
            std::vector<double> two(static_cast<std::size_t>(replications), kNaN);
            parallel_for(replications, threads, [&](long rep) {
                const std::uint64_t rep_seed = derive_seed(pair_seed, static_cast<std::uint64_t>(rep));
                try {
                    const Sample sample = generate_fused_dataset(base_cfg, n0, n1, rep_seed);
                    NuisanceOptions opts;
                    opts.folds = 1;
                    opts.outcome_basis = options.basis;
                    opts.ridge_lambda = options.ridge_lambda;
                    opts.primary_propensity = 0.5;
                    opts.auxiliary_marginal = false;
                    opts.selection = false;
                    const NuisanceFit fit = cross_fit(sample, opts);
                    const TwoStageFit stage = two_stage_outcome_fit(sample, fit, link);
                    const auto& direct = *fit.fold_models[0].mu_y0;

                    const Sample test = generate_fused_dataset(base_cfg, options.test_size, 0,
                                                               derive_seed(rep_seed, kTestStream));
                    double se1 = 0.0, se2 = 0.0;
                    for (long i = 0; i < test.size(); ++i) {
                        const auto x = test.covariates(i);
                        const double truth = base_cfg.stratum_mean(x, 0);
                        const double mu_w = 0.5 * fit.auxiliary_arms[0]->predict(x) + 0.5 * fit.auxiliary_arms[1]->predict(x);
                        const double two_stage = stage.alpha(x) * mu_w + stage.beta(x);
                        se1 += (direct.predict(x) - truth) * (direct.predict(x) - truth);
                        se2 += (two_stage - truth) * (two_stage - truth);
                    }
                    one[static_cast<std::size_t>(rep)] = std::sqrt(se1 / static_cast<double>(test.size()));
                    two[static_cast<std::size_t>(rep)] = std::sqrt(se2 / static_cast<double>(test.size()));
                } catch (const Error&) {
                    // Left as NaN and counted as failed.
                }
            });

            RateRow row;
            row.n0 = n0;
            row.n1 = n1;
            row.replications = replications;
            double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
            int ok = 0;
            for (int r = 0; r < replications; ++r) {
                const double a = one[static_cast<std::size_t>(r)], b = two[static_cast<std::size_t>(r)];
                if (!std::isfinite(a) || !std::isfinite(b)) {
                    ++row.n_failed;
                    continue;
                }
                s1 += a;
                s2 += b;
                q1 += a * a;
                q2 += b * b;
                ++ok;
            }
            if (ok == 0) {
                row.rmse_one_stage = row.rmse_two_stage = row.se_one_stage = row.se_two_stage = kNaN;
            } else {
                row.rmse_one_stage = s1 / ok;
                row.rmse_two_stage = s2 / ok;
                row.se_one_stage = std::sqrt(std::max(q1 / ok - row.rmse_one_stage * row.rmse_one_stage, 0.0) / ok);
                row.se_two_stage = std::sqrt(std::max(q2 / ok - row.rmse_two_stage * row.rmse_two_stage, 0.0) / ok);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace fuseate
