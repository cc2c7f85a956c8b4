#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/estimators.hpp"
#include "fuseate/link.hpp"
#include "fuseate/regression.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fuseate {

/// Runs fn(0..count-1) on up to `threads` workers pulling indices from a
/// shared counter. fn must only write to its own index's slot.
void parallel_for(long count, int threads, const std::function<void(long)>& fn);

/// a0 such that log(P(S=1)/P(S=0)) = log_ratio under the covariate law of
/// `cfg`, by bisection on [-20, 20] over fixed Monte Carlo draws of (X1, X2)
/// until the log ratio is within 1e-3 (a relative 1e-3 in the ratio).
/// Throws ConfigError when the target is outside the bracket.
double solve_a0_for_log_ratio(const DgpConfig& cfg, double log_ratio, std::uint64_t seed, long mc_draws = 100'000);

struct ExperimentGrid {
    std::vector<long> n_values;
    std::vector<int> p_values;
    std::vector<double> log_ratio_values;
    int replications = 1;
    std::vector<Method> methods;
    DgpConfig base_cfg;
    std::uint64_t seed = 0;

    int folds = 5;
    Basis outcome_basis = Basis::raw;
    Basis propensity_basis = Basis::raw;
    /// Use the trial's known P(T=1|S=0) = 0.5 instead of estimating it.
    bool known_primary_propensity = true;
    /// Link handed to theta_b; theta_a always gets the simulation's true link.
    LinkSpec two_stage_link = LinkSpec::unknown(FunctionForm::linear_x1, FunctionForm::linear_x1);
    long oracle_draws = 1'000'000;

    /// Throws ConfigError on empty lists, replications < 1 or bad values.
    void validate() const;
};

struct ExperimentRecord {
    Method method = Method::theta0;
    long n = 0;
    int p = 0;
    double log_ratio = 0.0;
    int replication_index = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    bool covered_truth = false;
    bool failed = false;
    std::string error;
    double runtime_ms = 0.0;
};

struct CellSummary {
    Method method = Method::theta0;
    long n = 0;
    int p = 0;
    double log_ratio = 0.0;
    double a0 = 0.0;
    double truth = 0.0;
    double mse = 0.0;
    double bias = 0.0;
    /// Population variance of the estimates (divisor = successful replications).
    double variance = 0.0;
    double coverage = 0.0;
    int replications = 0;
    int n_failed = 0;
    /// More than 1% of replications failed.
    bool flagged = false;
};

struct GridResult {
    std::vector<ExperimentRecord> records;
    std::vector<CellSummary> summaries;
};

/// Summary of one method's records against `truth`. MSE is computed directly
/// as mean((estimate - truth)^2) over successful records.
CellSummary summarize(const std::vector<ExperimentRecord>& records, double truth);

/// Every (n, p, log_ratio) cell in that nesting order: solve a0, compute the
/// cell's oracle ATE on a dedicated substream, then run the replications.
/// Records come out ordered by cell, replication, method regardless of
/// `threads`.
GridResult run_grid(const ExperimentGrid& grid, int threads = 1);

struct RateOptions {
    Basis basis = Basis::quadratic;
    std::optional<double> ridge_lambda;
    FunctionForm alpha_class = FunctionForm::linear_x1;
    FunctionForm beta_class = FunctionForm::linear_x1;
    long test_size = 10'000;
};

struct RateRow {
    long n0 = 0;
    long n1 = 0;
    /// Mean over successful replications of held-out RMSE against mu_Y(x, 0).
    double rmse_one_stage = 0.0;
    double rmse_two_stage = 0.0;
    double se_one_stage = 0.0;
    double se_two_stage = 0.0;
    int replications = 0;
    int n_failed = 0;
};

/// Held-out error of the direct regression mu_Y,0 and of the two-stage
/// regression mu_Y,b for every (n0, n1) pair. Throws InputError when any n1 is 0.
std::vector<RateRow> run_rate_experiment(const DgpConfig& base_cfg, const std::vector<long>& n0_values,
                                         const std::vector<long>& n1_values, int replications, std::uint64_t seed,
                                         const RateOptions& options = {}, int threads = 1);

}  // namespace fuseate
