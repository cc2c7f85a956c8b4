#include "fuseate/io.hpp"

#include "fuseate/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fuseate {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

// ---- sample CSV ------------------------------------------------------------

void write_sample_csv(std::ostream& out, const Sample& sample) {
    const int p = sample.dim();
    for (int j = 0; j < p; ++j) out << 'x' << (j + 1) << ',';
    out << "s,t,v\n";
    for (long i = 0; i < sample.size(); ++i) {
        for (int j = 0; j < p; ++j) out << format_double(sample.x(i, j)) << ',';
        const auto u = static_cast<std::size_t>(i);
        out << int(sample.s[u]) << ',' << int(sample.t[u]) << ',' << format_double(sample.v[u]) << '\n';
    }
}

void write_sample_csv(const std::filesystem::path& path, const Sample& sample) {
    std::ostringstream text;
    write_sample_csv(text, sample);
    write_text_file(path, text.str());
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

[[noreturn]] void ingest_fail(long line, const std::string& column, const std::string& what) {
    throw IngestionError("line " + std::to_string(line) + ", column '" + column + "': " + what);
}

double parse_cell(const std::string& cell, long line, const std::string& column) {
    if (cell.empty()) ingest_fail(line, column, "missing value");
    double value = 0.0;
    const char* first = cell.data();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, cell.data() + cell.size(), value);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        ingest_fail(line, column, "'" + cell + "' is not a number");
    }
    if (!std::isfinite(value)) ingest_fail(line, column, "value is not finite");
    return value;
}

int parse_binary(const std::string& cell, long line, const std::string& column) {
    const double value = parse_cell(cell, line, column);
    if (value != 0.0 && value != 1.0) ingest_fail(line, column, "value " + cell + " is not 0 or 1");
    return static_cast<int>(value);
}

}  // namespace

IngestResult ingest_csv(std::istream& in, const ColumnMapping& mapping) {
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("empty file: no header row");
    const auto header = split(line);
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!index.emplace(header[c], c).second) throw IngestionError("duplicate column '" + header[c] + "'");
    }
    auto column = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end()) throw IngestionError("missing column '" + name + "'");
        return it->second;
    };

    std::vector<std::string> x_names = mapping.x_columns;
    if (x_names.empty()) {
        for (int j = 1; index.count("x" + std::to_string(j)); ++j) x_names.push_back("x" + std::to_string(j));
        if (x_names.empty()) throw IngestionError("missing column 'x1'");
    }
    std::vector<std::size_t> x_cols;
    for (const auto& name : x_names) x_cols.push_back(column(name));
    const std::size_t s_col = column(mapping.s_column), t_col = column(mapping.t_column), v_col = column(mapping.v_column);

    std::vector<Observation> obs;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(cells.size()));
        }
        Observation o;
        o.x.resize(static_cast<long>(x_cols.size()));
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            o.x(static_cast<long>(j)) = parse_cell(cells[x_cols[j]], line_no, x_names[j]);
        }
        o.s = parse_binary(cells[s_col], line_no, mapping.s_column);
        o.t = parse_binary(cells[t_col], line_no, mapping.t_column);
        o.v = parse_cell(cells[v_col], line_no, mapping.v_column);
        obs.push_back(std::move(o));
    }
    if (obs.empty()) throw IngestionError("no data rows");

    IngestResult result;
    result.sample = Sample::from_observations(obs);
    for (const auto& o : obs) ++result.report.arm_counts[static_cast<std::size_t>(o.s)][static_cast<std::size_t>(o.t)];
    result.report.n0 = result.report.arm_counts[0][0] + result.report.arm_counts[0][1];
    result.report.n1 = result.report.arm_counts[1][0] + result.report.arm_counts[1][1];
    if (result.report.n0 == 0) throw IngestionError("empty stratum: no rows with s = 0");
    if (result.report.n1 == 0) throw IngestionError("empty stratum: no rows with s = 1");
    return result;
}

IngestResult ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    return ingest_csv(in, mapping);
}

// ---- JSON documents --------------------------------------------------------

namespace {

void check_document(const Json& doc, const std::set<std::string>& allowed, const std::string& what,
                    bool require_version = true) {
    if (!doc.is_object()) throw ConfigError(what + ": expected a JSON object");
    if (doc.contains("schema_version")) {
        if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion) {
            throw ConfigError(what + ": unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
        }
    } else if (require_version) {
        throw ConfigError(what + ": missing schema_version");
    }
    for (const auto& [key, value] : doc.items()) {
        if (key != "schema_version" && !allowed.count(key)) throw ConfigError(what + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const Json& doc, const char* key, T& out, const std::string& what) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(what + ": bad value for '" + key + "': " + e.what());
    }
}

Json link_function_json(const LinkFunction& f) {
    Json j{{"form", to_string(f.form)}};
    if (f.form == FunctionForm::table) {
        j["values"] = f.table;
    } else {
        j["coefficients"] = std::vector<double>(f.coefficients.data(), f.coefficients.data() + f.coefficients.size());
    }
    return j;
}

LinkFunction link_function_from_json(const Json& doc) {
    check_document(doc, {"form", "coefficients", "values"}, "link function", false);
    std::string form_name = "constant";
    read(doc, "form", form_name, "link function");
    const FunctionForm form = form_from_string(form_name);
    if (form == FunctionForm::table) {
        std::vector<double> values;
        read(doc, "values", values, "link function");
        return LinkFunction::from_table(std::move(values));
    }
    std::vector<double> c;
    read(doc, "coefficients", c, "link function");
    const Eigen::VectorXd coef = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<long>(c.size()));
    switch (form) {
        case FunctionForm::constant:
            if (c.size() != 1) throw ConfigError("constant link needs 1 coefficient");
            return LinkFunction::constant(c[0]);
        case FunctionForm::linear_x1:
            if (c.size() != 2) throw ConfigError("linear_x1 link needs 2 coefficients");
            return LinkFunction::linear_x1(c[0], c[1]);
        default:
            return LinkFunction::linear_all(coef);
    }
}

Json methods_json(const std::vector<Method>& methods) {
    Json j = Json::array();
    for (auto m : methods) j.push_back(to_string(m));
    return j;
}

}  // namespace

Json to_json(const DgpConfig& cfg) {
    return Json{{"schema_version", kSchemaVersion},
                {"p", cfg.p},
                {"n", cfg.n},
                {"a0", cfg.a0},
                {"a1", cfg.a1},
                {"a2", cfg.a2},
                {"zeta1", cfg.zeta1},
                {"gamma0", cfg.gamma0},
                {"gamma1", cfg.gamma1},
                {"gamma2", cfg.gamma2},
                {"b0", cfg.b0},
                {"b1", cfg.b1},
                {"b2", cfg.b2},
                {"b3", cfg.b3},
                {"rho0", cfg.rho0},
                {"rho1", cfg.rho1},
                {"sigma_w", cfg.sigma_w},
                {"sigma_y", cfg.sigma_y}};
}

DgpConfig dgp_config_from_json(const Json& doc) {
    const std::string what = "DgpConfig";
    check_document(doc, {"p", "n", "a0", "a1", "a2", "zeta1", "gamma0", "gamma1", "gamma2", "b0", "b1", "b2", "b3",
                         "rho0", "rho1", "sigma_w", "sigma_y"},
                   what);
    DgpConfig cfg;
    read(doc, "p", cfg.p, what);
    read(doc, "n", cfg.n, what);
    read(doc, "a0", cfg.a0, what);
    read(doc, "a1", cfg.a1, what);
    read(doc, "a2", cfg.a2, what);
    read(doc, "zeta1", cfg.zeta1, what);
    read(doc, "gamma0", cfg.gamma0, what);
    read(doc, "gamma1", cfg.gamma1, what);
    read(doc, "gamma2", cfg.gamma2, what);
    read(doc, "b0", cfg.b0, what);
    read(doc, "b1", cfg.b1, what);
    read(doc, "b2", cfg.b2, what);
    read(doc, "b3", cfg.b3, what);
    read(doc, "rho0", cfg.rho0, what);
    read(doc, "rho1", cfg.rho1, what);
    read(doc, "sigma_w", cfg.sigma_w, what);
    read(doc, "sigma_y", cfg.sigma_y, what);
    cfg.validate();
    return cfg;
}

Json to_json(const LinkSpec& link) {
    Json j{{"schema_version", kSchemaVersion},
           {"knowledge", to_string(link.knowledge)},
           {"alpha_class", to_string(link.alpha_class)},
           {"beta_class", to_string(link.beta_class)}};
    if (link.alpha) j["alpha"] = link_function_json(*link.alpha);
    if (link.beta) j["beta"] = link_function_json(*link.beta);
    return j;
}

LinkSpec link_spec_from_json(const Json& doc) {
    const std::string what = "LinkSpec";
    check_document(doc, {"knowledge", "alpha", "beta", "alpha_class", "beta_class"}, what);
    LinkSpec link;
    std::string knowledge = "fully_known", alpha_class = "linear_x1", beta_class = "linear_x1";
    read(doc, "knowledge", knowledge, what);
    read(doc, "alpha_class", alpha_class, what);
    read(doc, "beta_class", beta_class, what);
    link.knowledge = knowledge_from_string(knowledge);
    link.alpha_class = form_from_string(alpha_class);
    link.beta_class = form_from_string(beta_class);
    if (doc.contains("alpha")) link.alpha = link_function_from_json(doc["alpha"]);
    if (doc.contains("beta")) link.beta = link_function_from_json(doc["beta"]);
    link.validate();
    return link;
}

Json to_json(const SeverityThresholds& thresholds) {
    Json ranges = Json::array();
    for (const auto& r : thresholds.ranges) ranges.push_back(Json::array({r.low, r.high ? Json(*r.high) : Json(nullptr)}));
    Json j{{"schema_version", kSchemaVersion}, {"ranges", ranges}, {"anchored_at_zero", thresholds.anchored_at_zero}};
    if (thresholds.scale_max) j["scale_max"] = *thresholds.scale_max;
    return j;
}

SeverityThresholds thresholds_from_json(const Json& doc) {
    const std::string what = "SeverityThresholds";
    check_document(doc, {"ranges", "anchored_at_zero", "scale_max", "name"}, what);
    SeverityThresholds t;
    if (!doc.contains("ranges") || !doc["ranges"].is_array()) throw ConfigError(what + ": 'ranges' must be an array");
    for (const auto& r : doc["ranges"]) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !(r[1].is_number() || r[1].is_null())) {
            throw ConfigError(what + ": each range is [low, high] with high a number or null");
        }
        t.ranges.push_back({r[0].get<double>(), r[1].is_null() ? std::nullopt : std::optional<double>(r[1].get<double>())});
    }
    read(doc, "anchored_at_zero", t.anchored_at_zero, what);
    if (doc.contains("scale_max") && !doc["scale_max"].is_null()) t.scale_max = doc["scale_max"].get<double>();
    t.validate();
    return t;
}

Json to_json(const ExperimentGrid& grid) {
    Json cfg = to_json(grid.base_cfg);
    cfg.erase("schema_version");
    Json link = to_json(grid.two_stage_link);
    link.erase("schema_version");
    return Json{{"schema_version", kSchemaVersion},
                {"n_values", grid.n_values},
                {"p_values", grid.p_values},
                {"log_ratio_values", grid.log_ratio_values},
                {"replications", grid.replications},
                {"methods", methods_json(grid.methods)},
                {"base_cfg", cfg},
                {"seed", grid.seed},
                {"folds", grid.folds},
                {"outcome_basis", to_string(grid.outcome_basis)},
                {"propensity_basis", to_string(grid.propensity_basis)},
                {"known_primary_propensity", grid.known_primary_propensity},
                {"two_stage_link", link},
                {"oracle_draws", grid.oracle_draws}};
}

namespace {

// Nested documents inherit the outer schema_version.
Json with_version(Json doc) {
    if (doc.is_object() && !doc.contains("schema_version")) doc["schema_version"] = kSchemaVersion;
    return doc;
}

}  // namespace

ExperimentGrid grid_from_json(const Json& doc) {
    const std::string what = "ExperimentGrid";
    check_document(doc, {"n_values", "p_values", "log_ratio_values", "replications", "methods", "base_cfg", "seed",
                         "folds", "outcome_basis", "propensity_basis", "known_primary_propensity", "two_stage_link",
                         "oracle_draws"},
                   what);
    ExperimentGrid grid;
    read(doc, "n_values", grid.n_values, what);
    read(doc, "p_values", grid.p_values, what);
    read(doc, "log_ratio_values", grid.log_ratio_values, what);
    read(doc, "replications", grid.replications, what);
    read(doc, "seed", grid.seed, what);
    read(doc, "folds", grid.folds, what);
    read(doc, "known_primary_propensity", grid.known_primary_propensity, what);
    read(doc, "oracle_draws", grid.oracle_draws, what);
    std::vector<std::string> methods;
    read(doc, "methods", methods, what);
    for (const auto& m : methods) grid.methods.push_back(method_from_string(m));
    std::string basis = "raw", pbasis = "raw";
    read(doc, "outcome_basis", basis, what);
    read(doc, "propensity_basis", pbasis, what);
    grid.outcome_basis = basis_from_string(basis);
    grid.propensity_basis = basis_from_string(pbasis);
    if (doc.contains("base_cfg")) grid.base_cfg = dgp_config_from_json(with_version(doc["base_cfg"]));
    if (doc.contains("two_stage_link")) grid.two_stage_link = link_spec_from_json(with_version(doc["two_stage_link"]));
    grid.validate();
    return grid;
}

Json to_json(const RateExperimentConfig& config) {
    Json cfg = to_json(config.base_cfg);
    cfg.erase("schema_version");
    Json j{{"schema_version", kSchemaVersion},
           {"base_cfg", cfg},
           {"n0_values", config.n0_values},
           {"n1_values", config.n1_values},
           {"replications", config.replications},
           {"seed", config.seed},
           {"basis", to_string(config.options.basis)},
           {"alpha_class", to_string(config.options.alpha_class)},
           {"beta_class", to_string(config.options.beta_class)},
           {"test_size", config.options.test_size}};
    if (config.options.ridge_lambda) j["ridge_lambda"] = *config.options.ridge_lambda;
    return j;
}

RateExperimentConfig rate_config_from_json(const Json& doc) {
    const std::string what = "RateExperimentConfig";
    check_document(doc, {"base_cfg", "n0_values", "n1_values", "replications", "seed", "basis", "ridge_lambda",
                         "alpha_class", "beta_class", "test_size"},
                   what);
    RateExperimentConfig c;
    if (doc.contains("base_cfg")) c.base_cfg = dgp_config_from_json(with_version(doc["base_cfg"]));
    read(doc, "n0_values", c.n0_values, what);
    read(doc, "n1_values", c.n1_values, what);
    read(doc, "replications", c.replications, what);
    read(doc, "seed", c.seed, what);
    read(doc, "test_size", c.options.test_size, what);
    std::string basis = "quadratic", ac = "linear_x1", bc = "linear_x1";
    read(doc, "basis", basis, what);
    read(doc, "alpha_class", ac, what);
    read(doc, "beta_class", bc, what);
    c.options.basis = basis_from_string(basis);
    c.options.alpha_class = form_from_string(ac);
    c.options.beta_class = form_from_string(bc);
    if (doc.contains("ridge_lambda") && !doc["ridge_lambda"].is_null()) c.options.ridge_lambda = doc["ridge_lambda"].get<double>();
    if (c.options.test_size < 1) throw ConfigError(what + ": test_size must be >= 1");
    return c;
}

Json to_json(const EstimateResult& result) {
    Json diagnostics = Json::object();
    for (const auto& [key, value] : result.diagnostics) diagnostics[key] = value;
    return Json{{"schema_version", kSchemaVersion},
                {"method", to_string(result.method)},
                {"estimate", result.estimate},
                {"std_error", result.std_error},
                {"ci_low", result.ci_low},
                {"ci_high", result.ci_high},
                {"n0", result.n0},
                {"n1", result.n1},
                {"diagnostics", diagnostics}};
}

Json to_json(const VarianceBounds& bounds) {
    return Json{{"schema_version", kSchemaVersion},
                {"V0", bounds.v0},
                {"Va", bounds.va},
                {"Vb", bounds.vb},
                {"Sigma_b", Json::array({Json::array({bounds.sigma_b(0, 0), bounds.sigma_b(0, 1)}),
                                         Json::array({bounds.sigma_b(1, 0), bounds.sigma_b(1, 1)})})},
                {"draws", bounds.draws}};
}

Json to_json(const ScaleLink& link) {
    return Json{{"schema_version", kSchemaVersion}, {"alpha", link.alpha}, {"beta", link.beta}, {"pairs_used", link.pairs_used}};
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("write failed: " + path.string());
}

// ---- experiment output -----------------------------------------------------

std::string records_csv(const std::vector<ExperimentRecord>& records, bool timing) {
    std::ostringstream out;
    out << "method,n,p,log_ratio,replication_index,estimate,std_error,covered_truth,failed";
    if (timing) out << ",runtime_ms";
    out << '\n';
    for (const auto& r : records) {
        out << to_string(r.method) << ',' << r.n << ',' << r.p << ',' << format_double(r.log_ratio) << ','
            << r.replication_index << ',' << (r.failed ? "" : format_double(r.estimate)) << ','
            << (r.failed ? "" : format_double(r.std_error)) << ',' << (r.covered_truth ? 1 : 0) << ','
            << (r.failed ? 1 : 0);
        if (timing) out << ',' << format_double(r.runtime_ms);
        out << '\n';
    }
    return out.str();
}

std::string records_jsonl(const std::vector<ExperimentRecord>& records, bool timing) {
    std::string out;
    for (const auto& r : records) {
        Json j{{"method", to_string(r.method)},
               {"n", r.n},
               {"p", r.p},
               {"log_ratio", r.log_ratio},
               {"replication_index", r.replication_index},
               {"covered_truth", r.covered_truth},
               {"failed", r.failed}};
        if (r.failed) {
            j["error"] = r.error;
        } else {
            j["estimate"] = r.estimate;
            j["std_error"] = r.std_error;
        }
        if (timing) j["runtime_ms"] = r.runtime_ms;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string summary_csv(const std::vector<CellSummary>& summaries) {
    std::ostringstream out;
    out << "method,n,p,log_ratio,mse,bias,variance,coverage,n_failed\n";
    for (const auto& s : summaries) {
        out << to_string(s.method) << ',' << s.n << ',' << s.p << ',' << format_double(s.log_ratio) << ','
            << format_double(s.mse) << ',' << format_double(s.bias) << ',' << format_double(s.variance) << ','
            << format_double(s.coverage) << ',' << s.n_failed << '\n';
    }
    return out.str();
}

std::string rate_csv(const std::vector<RateRow>& rows) {
    std::ostringstream out;
    out << "n0,n1,replications,n_failed,rmse_one_stage,se_one_stage,rmse_two_stage,se_two_stage\n";
    for (const auto& r : rows) {
        out << r.n0 << ',' << r.n1 << ',' << r.replications << ',' << r.n_failed << ','
            << format_double(r.rmse_one_stage) << ',' << format_double(r.se_one_stage) << ','
            << format_double(r.rmse_two_stage) << ',' << format_double(r.se_two_stage) << '\n';
    }
    return out.str();
}

std::string sensitivity_csv(const std::vector<std::pair<double, EstimateResult>>& curve) {
    std::ostringstream out;
    out << "scale,estimate,se,ci_lo,ci_hi\n";
    for (const auto& [k, r] : curve) {
        out << format_double(k) << ',' << format_double(r.estimate) << ',' << format_double(r.std_error) << ','
            << format_double(r.ci_low) << ',' << format_double(r.ci_high) << '\n';
    }
    return out.str();
}

}  // namespace fuseate
