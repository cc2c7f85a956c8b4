#pragma once

#include "fuseate/dgp.hpp"
#include "fuseate/estimators.hpp"
#include "fuseate/experiments.hpp"
#include "fuseate/link.hpp"
#include "fuseate/scores.hpp"
#include "fuseate/sensitivity.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fuseate {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);

// ---- sample CSV ------------------------------------------------------------

/// Header `x1,...,xp,s,t,v`, one row per unit.
void write_sample_csv(std::ostream& out, const Sample& sample);
void write_sample_csv(const std::filesystem::path& path, const Sample& sample);

/// Which header names hold the covariates and the s/t/v columns. An empty
/// `x_columns` selects every column named x1, x2, ... in numeric order.
struct ColumnMapping {
    std::vector<std::string> x_columns;
    std::string s_column = "s";
    std::string t_column = "t";
    std::string v_column = "v";
};

struct IngestReport {
    long n0 = 0;
    long n1 = 0;
    /// arm_counts[s][t]
    std::array<std::array<long, 2>, 2> arm_counts{};
};

struct IngestResult {
    Sample sample;
    IngestReport report;
};

/// Throws IngestionError (with row and column) on a missing column, a
/// non-numeric or missing cell, non-binary s/t, or an empty stratum.
IngestResult ingest_csv(std::istream& in, const ColumnMapping& mapping = {});
IngestResult ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping = {});

// ---- JSON documents --------------------------------------------------------

/// Every document carries "schema_version"; unknown keys are rejected.
Json to_json(const DgpConfig& cfg);
DgpConfig dgp_config_from_json(const Json& doc);

Json to_json(const LinkSpec& link);
LinkSpec link_spec_from_json(const Json& doc);

Json to_json(const SeverityThresholds& thresholds);
SeverityThresholds thresholds_from_json(const Json& doc);

Json to_json(const ExperimentGrid& grid);
ExperimentGrid grid_from_json(const Json& doc);

/// Input of the rate experiment.
struct RateExperimentConfig {
    DgpConfig base_cfg;
    std::vector<long> n0_values;
    std::vector<long> n1_values;
    int replications = 1;
    std::uint64_t seed = 0;
    RateOptions options;
};

Json to_json(const RateExperimentConfig& config);
RateExperimentConfig rate_config_from_json(const Json& doc);

Json to_json(const EstimateResult& result);
Json to_json(const VarianceBounds& bounds);
Json to_json(const ScaleLink& link);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// ---- experiment output -----------------------------------------------------

/// method,n,p,log_ratio,replication_index,estimate,std_error,covered_truth,failed[,runtime_ms]
std::string records_csv(const std::vector<ExperimentRecord>& records, bool timing);
std::string records_jsonl(const std::vector<ExperimentRecord>& records, bool timing);
/// method,n,p,log_ratio,mse,bias,variance,coverage,n_failed
std::string summary_csv(const std::vector<CellSummary>& summaries);
/// n0,n1,replications,n_failed,rmse_one_stage,se_one_stage,rmse_two_stage,se_two_stage
std::string rate_csv(const std::vector<RateRow>& rows);
/// scale,estimate,se,ci_lo,ci_hi
std::string sensitivity_csv(const std::vector<std::pair<double, EstimateResult>>& curve);

}  // namespace fuseate
