// fuse-ate: command-line front end of the fuseate library.

#include "fuseate/dgp.hpp"
#include "fuseate/errors.hpp"
#include "fuseate/estimators.hpp"
#include "fuseate/experiments.hpp"
#include "fuseate/io.hpp"
#include "fuseate/nuisance.hpp"
#include "fuseate/random.hpp"
#include "fuseate/scores.hpp"
#include "fuseate/sensitivity.hpp"

#include "CLI11.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace fuseate;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::string out_dir;
};

fs::path output_path(const Globals& g, const std::string& name) {
    const fs::path p(name);
    if (g.out_dir.empty() || p.is_absolute()) return p;
    return fs::path(g.out_dir) / p;
}

// Writes to `out` (under --out-dir) when given, stdout otherwise.
void emit(const Globals& g, const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text;
    } else {
        write_text_file(output_path(g, out), text);
    }
}

struct FitFlags {
    int folds = 5;
    std::string basis = "raw";
    std::string propensity_basis = "raw";
    std::optional<double> known_propensity;
    std::optional<double> ridge;
    double epsilon = 0.01;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
    cmd->add_option("--folds", f.folds, "Cross-fitting folds (1 = no splitting)")->check(CLI::PositiveNumber);
    cmd->add_option("--basis", f.basis, "Outcome-model basis")->check(CLI::IsMember({"raw", "quadratic"}));
    cmd->add_option("--propensity-basis", f.propensity_basis, "Propensity-model basis")
        ->check(CLI::IsMember({"raw", "quadratic"}));
    cmd->add_option("--known-propensity", f.known_propensity, "Known P(T=1|S=0) of a randomized primary study");
    cmd->add_option("--ridge", f.ridge, "Ridge penalty (default 1e-6 * trace(G)/d)");
    cmd->add_option("--clip", f.epsilon, "Propensity clipping epsilon");
}

NuisanceOptions nuisance_options(const FitFlags& f, std::uint64_t seed) {
    NuisanceOptions o;
    o.folds = f.folds;
    o.outcome_basis = basis_from_string(f.basis);
    o.propensity_basis = basis_from_string(f.propensity_basis);
    o.primary_propensity = f.known_propensity;
    o.ridge_lambda = f.ridge;
    o.epsilon_clip = f.epsilon;
    o.seed = derive_seed(seed, 1);
    return o;
}

std::vector<double> parse_grid(const std::string& spec) {
    // lo:hi:steps
    const auto a = spec.find(':');
    const auto b = spec.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw ConfigError("grid must look like lo:hi:steps");
    double lo = 0.0, hi = 0.0;
    int steps = 0;
    auto num = [&](std::string_view s, auto& out) {
        const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("bad grid value '" + std::string(s) + "'");
    };
    const std::string_view sv(spec);
    num(sv.substr(0, a), lo);
    num(sv.substr(a + 1, b - a - 1), hi);
    num(sv.substr(b + 1), steps);
    if (steps < 1) throw ConfigError("grid steps must be >= 1");
    if (steps == 1) return {lo};
    std::vector<double> grid;
    for (int i = 0; i < steps; ++i) grid.push_back(lo + (hi - lo) * i / (steps - 1));
    return grid;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fused average-treatment-effect estimation with a primary and an auxiliary study"};
    app.require_subcommand(1);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Random seed (64-bit)");
    app.add_option("--threads", g.threads, "Worker threads for replications")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Directory for output files");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Draw a synthetic dataset and write it as CSV");
    std::string sim_config, sim_out;
    simulate->add_option("--config", sim_config, "DgpConfig JSON")->required();
    simulate->add_option("--out", sim_out, "Output CSV")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate the ATE of the primary study");
    std::string est_data, est_method = "theta0", est_link, est_out;
    FitFlags est_fit;
    est->add_option("--data", est_data, "Sample CSV")->required();
    est->add_option("--method", est_method, "Estimator")->check(CLI::IsMember({"theta0", "theta_a", "theta_b"}));
    est->add_option("--link", est_link, "LinkSpec JSON (theta_a, theta_b)");
    est->add_option("--out", est_out, "Output JSON (default stdout)");
    add_fit_flags(est, est_fit);

    // bounds
    auto* bounds = app.add_subcommand("bounds", "Variance bounds V0, Va, Vb under a simulation config");
    std::string bounds_config, bounds_out;
    long bounds_draws = 1'000'000;
    bounds->add_option("--config", bounds_config, "DgpConfig JSON")->required();
    bounds->add_option("--draws", bounds_draws, "Monte Carlo draws over X");
    bounds->add_option("--out", bounds_out, "Output JSON (default stdout)");

    // sensitivity
    auto* sens = app.add_subcommand("sensitivity", "Fused estimates over a grid of alpha scalings");
    std::string sens_data, sens_link, sens_grid = "0.5:1.5:11", sens_out;
    FitFlags sens_fit;
    sens->add_option("--data", sens_data, "Sample CSV")->required();
    sens->add_option("--link", sens_link, "Fully known LinkSpec JSON")->required();
    sens->add_option("--grid", sens_grid, "lo:hi:steps");
    sens->add_option("--out", sens_out, "Output CSV (default stdout)");
    add_fit_flags(sens, sens_fit);

    // link-from-thresholds
    auto* lft = app.add_subcommand("link-from-thresholds", "Linear crosswalk between two severity scales");
    std::string lft_a, lft_b, lft_out;
    bool lft_origin = false;
    lft->add_option("--a", lft_a, "Target-scale thresholds JSON")->required();
    lft->add_option("--b", lft_b, "Source-scale thresholds JSON")->required();
    lft->add_flag("--through-origin", lft_origin, "Fit without intercept");
    lft->add_option("--out", lft_out, "Output JSON (default stdout)");

    // grid
    auto* grid_cmd = app.add_subcommand("grid", "Monte Carlo grid over n, p and log_ratio");
    std::string grid_config;
    bool grid_timing = false;
    grid_cmd->add_option("--config", grid_config, "ExperimentGrid JSON")->required();
    grid_cmd->add_flag("--timing", grid_timing, "Add runtime_ms to the record files");

    // rate-experiment
    auto* rate = app.add_subcommand("rate-experiment", "Held-out error of one-stage vs two-stage outcome regression");
    std::string rate_config;
    rate->add_option("--config", rate_config, "Rate experiment JSON")->required();

    CLI11_PARSE(app, argc, argv);
    g.seed_given = seed_opt->count() > 0;

    try {
        if (*simulate) {
            const auto cfg = dgp_config_from_json(read_json_file(sim_config));
            write_sample_csv(output_path(g, sim_out), generate_dataset(cfg, g.seed));
        } else if (*est) {
            const auto ingested = ingest_csv(fs::path(est_data));
            const Method method = method_from_string(est_method);
            LinkSpec link;
            if (method != Method::theta0) {
                if (est_link.empty()) throw ConfigError("--link is required for " + est_method);
                link = link_spec_from_json(read_json_file(est_link));
            }
            auto options = nuisance_options(est_fit, g.seed);
            options.auxiliary_marginal = method == Method::theta_a;
            const auto fit = cross_fit(ingested.sample, options);
            const auto result = estimate(method, ingested.sample, fit, link);
            emit(g, est_out, to_json(result).dump(2) + "\n");
        } else if (*bounds) {
            const auto cfg = dgp_config_from_json(read_json_file(bounds_config));
            const double theta = true_ate(cfg, std::max(bounds_draws, 10'000L), derive_seed(g.seed, 1)).value;
            auto ctx = ScoreContext::oracle(cfg, theta);
            ctx.theta_fn = [cfg](std::span<const double> x) { return cfg.cate(x); };
            const auto vb = variance_bound(cfg, ctx, bounds_draws, derive_seed(g.seed, 2));
            emit(g, bounds_out, to_json(vb).dump(2) + "\n");
        } else if (*sens) {
            const auto ingested = ingest_csv(fs::path(sens_data));
            const auto link = link_spec_from_json(read_json_file(sens_link));
            const auto fit = cross_fit(ingested.sample, nuisance_options(sens_fit, g.seed));
            emit(g, sens_out, sensitivity_csv(sensitivity_sweep(ingested.sample, fit, link, parse_grid(sens_grid))));
        } else if (*lft) {
            const auto a = thresholds_from_json(read_json_file(lft_a));
            const auto b = thresholds_from_json(read_json_file(lft_b));
            emit(g, lft_out, to_json(scale_link_from_thresholds(a, b, lft_origin)).dump(2) + "\n");
        } else if (*grid_cmd) {
            auto grid = grid_from_json(read_json_file(grid_config));
            if (g.seed_given) grid.seed = g.seed;
            const auto result = run_grid(grid, g.threads);
            const fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
            write_text_file(dir / "records.csv", records_csv(result.records, grid_timing));
            write_text_file(dir / "records.jsonl", records_jsonl(result.records, grid_timing));
            const std::string summary = summary_csv(result.summaries);
            write_text_file(dir / "summary.csv", summary);
            std::cout << summary;
            for (const auto& s : result.summaries) {
                if (s.flagged) {
                    std::cerr << "warning: " << to_string(s.method) << " n=" << s.n << " p=" << s.p
                              << " log_ratio=" << s.log_ratio << " failed in " << s.n_failed << " of "
                              << s.replications << " replications\n";
                }
            }
        } else if (*rate) {
            auto config = rate_config_from_json(read_json_file(rate_config));
            if (g.seed_given) config.seed = g.seed;
            const auto rows = run_rate_experiment(config.base_cfg, config.n0_values, config.n1_values,
                                                  config.replications, config.seed, config.options, g.threads);
            const std::string text = rate_csv(rows);
            const fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
            write_text_file(dir / "rate.csv", text);
            std::cout << text;
        }
    } catch (const Error& e) {
        std::cerr << "fuse-ate: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fuse-ate: unexpected failure: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
