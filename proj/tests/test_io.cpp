#include "doctest.h"

#include "fuseate/errors.hpp"
#include "fuseate/io.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>

using namespace fuseate;

namespace {

std::string message_of(const std::string& csv) {
    std::istringstream in(csv);
    try {
        ingest_csv(in);
    } catch (const IngestionError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("shortest round-trip doubles") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 0.0}) {
        const auto s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("sample CSV round trip") {
    auto cfg = DgpConfig::benchmark();
    cfg.n = 700;
    const auto sample = generate_dataset(cfg, 5);
    std::ostringstream out;
    write_sample_csv(out, sample);
    const std::string text = out.str();
    CHECK(text.rfind("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,s,t,v\n", 0) == 0);

    std::istringstream in(text);
    const auto back = ingest_csv(in);
    CHECK(back.sample == sample);
    CHECK(back.report.n0 == sample.n0());
    CHECK(back.report.n1 == sample.n1());
    CHECK(back.report.arm_counts[1][1] == sample.count_cell(1, 1));

    const auto dir = std::filesystem::temp_directory_path() / "fuseate_io_test";
    write_sample_csv(dir / "sample.csv", sample);
    CHECK(ingest_csv(dir / "sample.csv").sample == sample);
    std::filesystem::remove_all(dir);
}

TEST_CASE("permuted header with an explicit mapping") {
    const std::string plain = "x1,x2,x3,s,t,v\n0.5,1,2,0,1,3.5\n-1,0,0.25,1,0,2\n";
    const std::string permuted = "outcome,arm,study,c,a,b\n3.5,1,0,2,0.5,1\n2,0,1,0.25,-1,0\n";
    std::istringstream a(plain), b(permuted);
    ColumnMapping mapping;
    mapping.x_columns = {"a", "b", "c"};
    mapping.s_column = "study";
    mapping.t_column = "arm";
    mapping.v_column = "outcome";
    CHECK(ingest_csv(a).sample == ingest_csv(b, mapping).sample);

    // covariates pick up x1..xp in numeric order regardless of position
    const std::string shuffled = "v,x2,t,x10,s,x1,x3,x4,x5,x6,x7,x8,x9\n1,2,0,10,1,1,3,4,5,6,7,8,9\n"
                                 "1,2,1,10,0,1,3,4,5,6,7,8,9\n";
    std::istringstream c(shuffled);
    const auto sample = ingest_csv(c).sample;
    CHECK(sample.x(0, 0) == 1.0);
    CHECK(sample.x(0, 9) == 10.0);
}

TEST_CASE("ingestion errors carry their position") {
    const auto bad_s = message_of("x1,x2,x3,s,t,v\n0,0,0,0,1,1\n0,0,0,2,1,1\n0,0,0,1,0,1\n");
    CHECK(bad_s.find("line 3") != std::string::npos);
    CHECK(bad_s.find("'s'") != std::string::npos);

    CHECK(message_of("x1,x2,x3,s,t\n0,0,0,0,1\n").find("missing column 'v'") != std::string::npos);
    const auto text = message_of("x1,x2,x3,s,t,v\n0,abc,0,0,1,1\n0,0,0,1,0,1\n");
    CHECK(text.find("line 2") != std::string::npos);
    CHECK(text.find("'x2'") != std::string::npos);
    CHECK(message_of("x1,x2,x3,s,t,v\n0,,0,0,1,1\n").find("'x2'") != std::string::npos);
    CHECK(message_of("x1,x2,x3,s,t,v\n0,0,0,0,1,1\n0,0,0,0,0,1\n").find("empty stratum") != std::string::npos);
    CHECK(message_of("").find("header") != std::string::npos);
    CHECK_THROWS_AS(ingest_csv(std::filesystem::path("/nonexistent/file.csv")), IngestionError);
}

TEST_CASE("config documents round trip") {
    const auto cfg = DgpConfig::benchmark();
    CHECK(dgp_config_from_json(to_json(cfg)) == cfg);
    CHECK(to_json(cfg).at("schema_version") == kSchemaVersion);

    const auto link = LinkSpec::from_config(cfg);
    CHECK(link_spec_from_json(to_json(link)) == link);
    const auto unknown = LinkSpec::unknown(FunctionForm::constant, FunctionForm::linear_all);
    CHECK(link_spec_from_json(to_json(unknown)) == unknown);

    SeverityThresholds t;
    t.ranges = {{1, 10}, {11, std::nullopt}};
    t.scale_max = 30.0;
    CHECK(thresholds_from_json(to_json(t)) == t);

    ExperimentGrid grid;
    grid.n_values = {500};
    grid.p_values = {5};
    grid.log_ratio_values = {0.0};
    grid.methods = {Method::theta0, Method::theta_b};
    grid.replications = 3;
    grid.seed = 99;
    const auto back = grid_from_json(to_json(grid));
    CHECK(back.n_values == grid.n_values);
    CHECK(back.methods == grid.methods);
    CHECK(back.seed == 99);
    CHECK(back.base_cfg == grid.base_cfg);
    CHECK(back.two_stage_link == grid.two_stage_link);

    RateExperimentConfig rate;
    rate.n0_values = {200};
    rate.n1_values = {200, 2000};
    rate.replications = 4;
    const auto rate_back = rate_config_from_json(to_json(rate));
    CHECK(rate_back.n1_values == rate.n1_values);
    CHECK(rate_back.options.basis == rate.options.basis);
}

TEST_CASE("config documents are strict") {
    auto doc = to_json(DgpConfig::benchmark());
    doc.erase("schema_version");
    CHECK_THROWS_AS(dgp_config_from_json(doc), ConfigError);
    doc = to_json(DgpConfig::benchmark());
    doc["schema_version"] = 99;
    CHECK_THROWS_AS(dgp_config_from_json(doc), ConfigError);
    doc = to_json(DgpConfig::benchmark());
    doc["rho2"] = 1.0;
    CHECK_THROWS_AS(dgp_config_from_json(doc), ConfigError);
    doc = to_json(DgpConfig::benchmark());
    doc["p"] = "ten";
    CHECK_THROWS_AS(dgp_config_from_json(doc), ConfigError);
}

TEST_CASE("shipped configs parse") {
    const std::filesystem::path dir = FUSEATE_SOURCE_DIR "/configs";
    CHECK(dgp_config_from_json(read_json_file(dir / "benchmark.json")) == DgpConfig::benchmark());
    CHECK(dgp_config_from_json(read_json_file(dir / "constant_link.json")) == DgpConfig::constant_link_benchmark());
    CHECK_NOTHROW(link_spec_from_json(read_json_file(dir / "link_true.json")).validate());
    CHECK_NOTHROW(link_spec_from_json(read_json_file(dir / "link_unknown.json")).validate());
    CHECK_NOTHROW(grid_from_json(read_json_file(dir / "grid_small.json")).validate());
    CHECK_NOTHROW(rate_config_from_json(read_json_file(dir / "rate.json")));
    const auto a = thresholds_from_json(read_json_file(dir / "sows.json"));
    const auto b = thresholds_from_json(read_json_file(dir / "cows.json"));
    CHECK(scale_link_from_thresholds(a, b, true).alpha == doctest::Approx(0.6219).epsilon(1e-3));
}

TEST_CASE("record and summary tables") {
    ExperimentRecord r;
    r.method = Method::theta_a;
    r.n = 500;
    r.p = 5;
    r.log_ratio = 2.0;
    r.replication_index = 3;
    r.estimate = 1.25;
    r.std_error = 0.5;
    r.covered_truth = true;
    r.runtime_ms = 12.0;
    const auto csv = records_csv({r}, false);
    CHECK(csv == "method,n,p,log_ratio,replication_index,estimate,std_error,covered_truth,failed\n"
                 "theta_a,500,5,2,3,1.25,0.5,1,0\n");
    CHECK(records_csv({r}, true).find("runtime_ms") != std::string::npos);
    const auto line = records_jsonl({r}, false);
    const auto parsed = Json::parse(line.substr(0, line.find('\n')));
    CHECK(parsed.at("estimate") == 1.25);
    CHECK_FALSE(parsed.contains("runtime_ms"));

    CellSummary s;
    s.method = Method::theta0;
    s.n = 500;
    s.p = 5;
    s.mse = 0.25;
    const auto table = summary_csv({s});
    CHECK(table.rfind("method,n,p,log_ratio,mse,bias,variance,coverage,n_failed\n", 0) == 0);
}
