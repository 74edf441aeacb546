#include "capstruct/report.hpp"

#include "capstruct/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace capstruct {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Json num(double x) {
    if (!std::isfinite(x)) return nullptr;
    return round_sig6(x);
}

Json cell(const Cell& c) { return c ? num(*c) : Json(nullptr); }

double get_num(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Cell get_cell(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

Json vec(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v(i)));
    return out;
}

Vector get_vec(const Json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(j[i]);
    return v;
}

Json mat(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
    return out;
}

Matrix get_mat(const Json& j) {
    if (j.empty()) return Matrix();
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t i = 0; i < j.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = get_vec(j[i]).transpose();
    return m;
}

template <typename T, typename F>
Json opt(const std::optional<T>& v, F&& f) {
    return v ? f(*v) : Json(nullptr);
}

template <typename T, typename F>
std::optional<T> get_opt(const Json& j, const char* key, F&& f) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return f(j.at(key));
}

std::string fmt6(double x) {
    if (!std::isfinite(x)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string fmt6(const Cell& c) { return c ? fmt6(*c) : std::string(); }

std::string fixed(double x, int decimals) {
    if (!std::isfinite(x)) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals) << x;
    return os.str();
}

std::string pad(const std::string& s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    const std::string fill(width - s.size(), ' ');
    return right ? fill + s : s + fill;
}

Engine parse_engine(const std::string& s) {
    if (s == "mean_fe") return Engine::mean_fe;
    if (s == "panel_qr") return Engine::panel_qr;
    throw ConfigError("unknown engine '" + s + "'");
}

ErrorKind parse_error_kind(const std::string& s) {
    if (s == "config") return ErrorKind::config;
    if (s == "data") return ErrorKind::data;
    if (s == "estimation") return ErrorKind::estimation;
    throw ConfigError("unknown error kind '" + s + "'");
}

State parse_state(const std::string& s) {
    if (s == "good") return State::good;
    if (s == "bad") return State::bad;
    throw ConfigError("unknown state '" + s + "'");
}

CovarianceType parse_covariance(const std::string& s) {
    if (s == "conventional") return CovarianceType::conventional;
    if (s == "clustered") return CovarianceType::clustered;
    throw ConfigError("unknown covariance type '" + s + "' (expected conventional or clustered)");
}

ErrorDistribution parse_errors(const std::string& s) {
    if (s == "normal") return ErrorDistribution::normal;
    if (s == "heavy_tailed") return ErrorDistribution::heavy_tailed;
    throw ConfigError("unknown error distribution '" + s + "' (expected normal or heavy_tailed)");
}

// --- adjustment pieces ---

Json to_json_rc(const RegimeCoefficients& rc) {
    Json j;
    j["source"] = std::string(engine_name(rc.source));
    j["tau"] = opt(rc.tau, num);
    j["lambda"] = num(rc.lambda);
    j["dependent"] = rc.dependent;
    j["a"] = num(rc.a);
    j["a_c"] = num(rc.a_c);
    j["delta"] = num(rc.delta);
    j["delta_c"] = num(rc.delta_c);
    j["firm_factors"] = rc.firm_factors;
    j["beta"] = vec(rc.beta);
    j["beta_c"] = vec(rc.beta_c);
    j["macro_factors"] = rc.macro_factors;
    j["gamma"] = vec(rc.gamma);
    j["gamma_c"] = vec(rc.gamma_c);
    j["names"] = rc.names;
    j["coefficients"] = vec(rc.coefficients);
    j["covariance"] = mat(rc.covariance);
    j["warnings"] = rc.warnings;
    return j;
}

RegimeCoefficients rc_from_json(const Json& j) {
    RegimeCoefficients rc;
    rc.source = parse_engine(j.at("source").get<std::string>());
    rc.tau = get_opt<double>(j, "tau", get_num);
    rc.lambda = get_num(j.at("lambda"));
    rc.dependent = j.at("dependent").get<std::string>();
    rc.a = get_num(j.at("a"));
    rc.a_c = get_num(j.at("a_c"));
    rc.delta = get_num(j.at("delta"));
    rc.delta_c = get_num(j.at("delta_c"));
    rc.firm_factors = j.at("firm_factors").get<std::vector<std::string>>();
    rc.beta = get_vec(j.at("beta"));
    rc.beta_c = get_vec(j.at("beta_c"));
    rc.macro_factors = j.at("macro_factors").get<std::vector<std::string>>();
    rc.gamma = get_vec(j.at("gamma"));
    rc.gamma_c = get_vec(j.at("gamma_c"));
    rc.names = j.at("names").get<std::vector<std::string>>();
    rc.coefficients = get_vec(j.at("coefficients"));
    rc.covariance = get_mat(j.at("covariance"));
    rc.warnings = j.at("warnings").get<std::vector<std::string>>();
    return rc;
}

Json to_json_speeds(const SpeedEstimates& s) {
    return Json{{"speed_good", num(s.speed_good)}, {"speed_bad", num(s.speed_bad)}};
}

SpeedEstimates speeds_from_json(const Json& j) {
    return {get_num(j.at("speed_good")), get_num(j.at("speed_bad"))};
}

Json to_json_target(const TargetModelParams& t) {
    Json j;
    j["state"] = std::string(state_name(t.state));
    j["speed"] = num(t.speed);
    j["a_star"] = num(t.a_star);
    j["firm_factors"] = t.firm_factors;
    j["beta_star"] = vec(t.beta_star);
    j["macro_factors"] = t.macro_factors;
    j["gamma_star"] = vec(t.gamma_star);
    return j;
}

TargetModelParams target_from_json(const Json& j) {
    TargetModelParams t;
    t.state = parse_state(j.at("state").get<std::string>());
    t.speed = get_num(j.at("speed"));
    t.a_star = get_num(j.at("a_star"));
    t.firm_factors = j.at("firm_factors").get<std::vector<std::string>>();
    t.beta_star = get_vec(j.at("beta_star"));
    t.macro_factors = j.at("macro_factors").get<std::vector<std::string>>();
    t.gamma_star = get_vec(j.at("gamma_star"));
    return t;
}

WaldResult wald_from_json(const Json& j) {
    WaldResult w;
    w.names = j.at("names").get<std::vector<std::string>>();
    w.statistic = get_num(j.at("statistic"));
    w.df = j.at("df").get<int>();
    w.p_value = get_num(j.at("p_value"));
    return w;
}

Json to_json_tests(const StateDummyTests& t) {
    Json j;
    j["delta_c"] = to_json(t.delta_c);
    j["beta_c"] = Json::array();
    for (const auto& w : t.beta_c) j["beta_c"].push_back(to_json(w));
    j["gamma_c"] = Json::array();
    for (const auto& w : t.gamma_c) j["gamma_c"].push_back(to_json(w));
    j["firm_block"] = opt(t.firm_block, [](const WaldResult& w) { return to_json(w); });
    j["macro_block"] = opt(t.macro_block, [](const WaldResult& w) { return to_json(w); });
    return j;
}

StateDummyTests tests_from_json(const Json& j) {
    StateDummyTests t;
    t.delta_c = wald_from_json(j.at("delta_c"));
    for (const auto& w : j.at("beta_c")) t.beta_c.push_back(wald_from_json(w));
    for (const auto& w : j.at("gamma_c")) t.gamma_c.push_back(wald_from_json(w));
    t.firm_block = get_opt<WaldResult>(j, "firm_block", wald_from_json);
    t.macro_block = get_opt<WaldResult>(j, "macro_block", wald_from_json);
    return t;
}

Json to_json_cell(const AdjustmentCell& c) {
    Json j;
    j["coefficients"] = opt(c.coefficients, to_json_rc);
    j["speeds"] = opt(c.speeds, to_json_speeds);
    j["target_good"] = opt(c.target_good, to_json_target);
    j["target_bad"] = opt(c.target_bad, to_json_target);
    j["tests"] = opt(c.tests, to_json_tests);
    j["notes"] = c.notes;
    j["error"] = c.error;
    return j;
}

AdjustmentCell cell_from_json(const Json& j) {
    AdjustmentCell c;
    c.coefficients = get_opt<RegimeCoefficients>(j, "coefficients", rc_from_json);
    c.speeds = get_opt<SpeedEstimates>(j, "speeds", speeds_from_json);
    c.target_good = get_opt<TargetModelParams>(j, "target_good", target_from_json);
    c.target_bad = get_opt<TargetModelParams>(j, "target_bad", target_from_json);
    c.tests = get_opt<StateDummyTests>(j, "tests", tests_from_json);
    c.notes = j.at("notes").get<std::vector<std::string>>();
    c.error = j.at("error").get<std::string>();
    return c;
}

// --- config helpers ---

void check_keys(const Json& j, const std::set<std::string>& allowed, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) throw ConfigError(std::string(what) + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
void read_key(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

// label for one adjustment cell in CSV/text output
struct CellRef {
    std::string leverage;
    std::string engine;
    std::string tau;
    const AdjustmentCell* cell;
};

std::vector<CellRef> cells_of(const std::vector<AdjustmentReport>& reports) {
    std::vector<CellRef> out;
    for (const auto& r : reports) {
        const std::string lev(leverage_name(r.leverage));
        if (r.mean) out.push_back({lev, "mean_fe", "", &*r.mean});
        for (std::size_t k = 0; k < r.quantiles.size(); ++k) {
            out.push_back({lev, "panel_qr", fmt6(r.taus[k]), &r.quantiles[k]});
        }
    }
    return out;
}

Vector standard_errors_of(const RegimeCoefficients& rc) {
    Vector se = Vector::Constant(rc.coefficients.size(), kNaN);
    if (rc.covariance.rows() == rc.coefficients.size()) {
        for (Eigen::Index i = 0; i < se.size(); ++i) {
            const double v = rc.covariance(i, i);
            se(i) = v >= 0.0 ? std::sqrt(v) : kNaN;
        }
    }
    return se;
}

std::string stars(double p) {
    if (!std::isfinite(p)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.10) return "*";
    return "";
}

}  // namespace

double round_sig6(double value) {
    if (!std::isfinite(value) || value == 0.0) return value == 0.0 ? 0.0 : value;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return std::strtod(buf, nullptr);
}

std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- to_json

Json to_json(const MergeDiagnostics& d) {
    Json j;
    j["input_rows"] = d.input_rows;
    j["output_rows"] = d.output_rows;
    j["nonpositive_assets"] = d.nonpositive_assets;
    j["missing_assets"] = d.missing_assets;
    j["total_dropped"] = d.total_dropped();
    Json by_year = Json::object();
    for (const auto& [year, count] : d.outside_macro_range_by_year) by_year[std::to_string(year)] = count;
    j["outside_macro_range_by_year"] = by_year;
    return j;
}

Json to_json(const YearMeansTable& t) {
    Json j;
    j["variables"] = t.variables;
    j["years"] = t.years;
    j["firms"] = t.firms;
    j["counts"] = t.counts;
    Json means = Json::array();
    for (const auto& row : t.means) {
        Json r = Json::array();
        for (const auto& c : row) r.push_back(cell(c));
        means.push_back(r);
    }
    j["means"] = means;
    return j;
}

Json to_json(const CorrelationTable& t) {
    Json j;
    j["variables"] = t.variables;
    j["counts"] = t.counts;
    Json r = Json::array();
    for (const auto& row : t.r) {
        Json out = Json::array();
        for (const auto& c : row) out.push_back(cell(c));
        r.push_back(out);
    }
    j["r"] = r;
    return j;
}

Json to_json(const HausmanResult& h) {
    return Json{{"statistic", num(h.statistic)}, {"df", h.df}, {"p_value", num(h.p_value)}, {"names", h.names}};
}

Json to_json(const WaldResult& w) {
    return Json{{"statistic", num(w.statistic)}, {"df", w.df}, {"p_value", num(w.p_value)}, {"names", w.names}};
}

Json to_json(const AdjustmentReport& r) {
    Json j;
    j["leverage"] = std::string(leverage_name(r.leverage));
    j["rows"] = r.rows;
    j["firms"] = r.firms;
    j["mean_years_per_firm"] = num(r.mean_years_per_firm);
    j["mean"] = opt(r.mean, to_json_cell);
    j["taus"] = Json::array();
    for (double t : r.taus) j["taus"].push_back(num(t));
    j["quantiles"] = Json::array();
    for (const auto& c : r.quantiles) j["quantiles"].push_back(to_json_cell(c));
    j["advisories"] = r.advisories;
    return j;
}

Json to_json(const StudyReport& r) {
    Json j;
    const auto& m = r.metadata;
    Json meta;
    meta["source"] = m.source;
    meta["seed"] = m.seed;
    meta["leverage"] = m.leverage;
    meta["engines"] = m.engines;
    meta["taus"] = Json::array();
    for (double t : m.taus) meta["taus"].push_back(num(t));
    meta["lambda"] = num(m.lambda);
    meta["bootstrap"] = m.bootstrap;
    meta["winsorize"] = opt(m.winsorize, num);
    meta["covariance"] = m.covariance;
    j["metadata"] = meta;

    Json diag;
    diag["merge"] = opt(r.diagnostics.merge, [](const MergeDiagnostics& d) { return to_json(d); });
    diag["derived_rows"] = r.diagnostics.derived_rows;
    diag["warnings"] = r.diagnostics.warnings;
    j["diagnostics"] = diag;

    j["yearly_means"] = opt(r.yearly_means, [](const YearMeansTable& t) { return to_json(t); });
    j["correlations"] = opt(r.correlations, [](const CorrelationTable& t) { return to_json(t); });
    j["hausman"] = Json::array();
    for (const auto& h : r.hausman) {
        Json e = to_json(h.result);
        e["leverage"] = std::string(leverage_name(h.leverage));
        j["hausman"].push_back(e);
    }
    j["adjustments"] = Json::array();
    for (const auto& a : r.adjustments) j["adjustments"].push_back(to_json(a));
    j["true_speeds"] = opt(r.true_speeds, to_json_speeds);
    j["errors"] = Json::array();
    for (const auto& e : r.errors) {
        j["errors"].push_back(Json{{"stage", e.stage}, {"kind", std::string(error_kind_name(e.kind))}, {"message", e.message}});
    }
    return j;
}

Json to_json(const DgpConfig& c) {
    Json j;
    j["firms"] = c.firms;
    j["years"] = c.years;
    j["start_year"] = c.start_year;
    j["speed"] = c.speed;
    j["bad_state_shift"] = c.bad_state_shift;
    j["a_star"] = c.a_star;
    j["beta_star"] = c.beta_star;
    j["gamma_star"] = c.gamma_star;
    j["sigma_alpha"] = c.sigma_alpha;
    j["rho"] = c.rho;
    j["sigma_eps"] = c.sigma_eps;
    j["errors"] = c.errors == ErrorDistribution::normal ? "normal" : "heavy_tailed";
    j["error_quantile"] = c.error_quantile;
    j["persistence"] = c.persistence;
    j["ltdr_share"] = c.ltdr_share;
    j["recession_years"] = c.recession_years;
    j["switch_probability"] = c.switch_probability;
    j["recovery_probability"] = c.recovery_probability;
    j["seed"] = c.seed;
    return j;
}

// -------------------------------------------------------------- from_json

MergeDiagnostics merge_diagnostics_from_json(const Json& j) {
    MergeDiagnostics d;
    d.input_rows = j.at("input_rows").get<std::size_t>();
    d.output_rows = j.at("output_rows").get<std::size_t>();
    d.nonpositive_assets = j.at("nonpositive_assets").get<std::size_t>();
    d.missing_assets = j.at("missing_assets").get<std::size_t>();
    for (const auto& item : j.at("outside_macro_range_by_year").items()) {
        d.outside_macro_range_by_year[std::stoi(item.key())] = item.value().get<std::size_t>();
    }
    return d;
}

YearMeansTable year_means_from_json(const Json& j) {
    YearMeansTable t;
    t.variables = j.at("variables").get<std::vector<std::string>>();
    t.years = j.at("years").get<std::vector<int>>();
    t.firms = j.at("firms").get<std::vector<std::size_t>>();
    t.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& row : j.at("means")) {
        std::vector<Cell> r;
        for (const auto& c : row) r.push_back(get_cell(c));
        t.means.push_back(std::move(r));
    }
    return t;
}

CorrelationTable correlation_table_from_json(const Json& j) {
    CorrelationTable t;
    t.variables = j.at("variables").get<std::vector<std::string>>();
    t.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& row : j.at("r")) {
        std::vector<Cell> r;
        for (const auto& c : row) r.push_back(get_cell(c));
        t.r.push_back(std::move(r));
    }
    return t;
}

HausmanResult hausman_from_json(const Json& j) {
    HausmanResult h;
    h.statistic = get_num(j.at("statistic"));
    h.df = j.at("df").get<int>();
    h.p_value = get_num(j.at("p_value"));
    h.names = j.at("names").get<std::vector<std::string>>();
    return h;
}

AdjustmentReport adjustment_report_from_json(const Json& j) {
    AdjustmentReport r;
    r.leverage = parse_leverage(j.at("leverage").get<std::string>());
    r.rows = j.at("rows").get<Eigen::Index>();
    r.firms = j.at("firms").get<std::size_t>();
    r.mean_years_per_firm = get_num(j.at("mean_years_per_firm"));
    r.mean = get_opt<AdjustmentCell>(j, "mean", cell_from_json);
    for (const auto& t : j.at("taus")) r.taus.push_back(get_num(t));
    for (const auto& c : j.at("quantiles")) r.quantiles.push_back(cell_from_json(c));
    r.advisories = j.at("advisories").get<std::vector<std::string>>();
    return r;
}

StudyReport study_report_from_json(const Json& j) {
    StudyReport r;
    const Json& meta = j.at("metadata");
    auto& m = r.metadata;
    m.source = meta.at("source").get<std::string>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.leverage = meta.at("leverage").get<std::vector<std::string>>();
    m.engines = meta.at("engines").get<std::vector<std::string>>();
    for (const auto& t : meta.at("taus")) m.taus.push_back(get_num(t));
    m.lambda = get_num(meta.at("lambda"));
    m.bootstrap = meta.at("bootstrap").get<std::size_t>();
    m.winsorize = get_opt<double>(meta, "winsorize", get_num);
    m.covariance = meta.at("covariance").get<std::string>();

    const Json& diag = j.at("diagnostics");
    r.diagnostics.merge = get_opt<MergeDiagnostics>(diag, "merge", merge_diagnostics_from_json);
    r.diagnostics.derived_rows = diag.at("derived_rows").get<std::size_t>();
    r.diagnostics.warnings = diag.at("warnings").get<std::vector<std::string>>();

    r.yearly_means = get_opt<YearMeansTable>(j, "yearly_means", year_means_from_json);
    r.correlations = get_opt<CorrelationTable>(j, "correlations", correlation_table_from_json);
    for (const auto& h : j.at("hausman")) {
        r.hausman.push_back({parse_leverage(h.at("leverage").get<std::string>()), hausman_from_json(h)});
    }
    for (const auto& a : j.at("adjustments")) r.adjustments.push_back(adjustment_report_from_json(a));
    r.true_speeds = get_opt<SpeedEstimates>(j, "true_speeds", speeds_from_json);
    for (const auto& e : j.at("errors")) {
        r.errors.push_back({e.at("stage").get<std::string>(), parse_error_kind(e.at("kind").get<std::string>()),
                            e.at("message").get<std::string>()});
    }
    return r;
}

// ---------------------------------------------------------------- configs

DgpConfig parse_dgp_config(const Json& j) {
    check_keys(j,
               {"firms", "years", "start_year", "speed", "bad_state_shift", "a_star", "beta_star", "gamma_star",
                "sigma_alpha", "rho", "sigma_eps", "errors", "error_quantile", "persistence", "ltdr_share",
                "recession_years", "switch_probability", "recovery_probability", "seed"},
               "simulation config");
    DgpConfig c;
    try {
        read_key(j, "firms", c.firms);
        read_key(j, "years", c.years);
        read_key(j, "start_year", c.start_year);
        read_key(j, "speed", c.speed);
        read_key(j, "bad_state_shift", c.bad_state_shift);
        read_key(j, "a_star", c.a_star);
        read_key(j, "beta_star", c.beta_star);
        read_key(j, "gamma_star", c.gamma_star);
        read_key(j, "sigma_alpha", c.sigma_alpha);
        read_key(j, "rho", c.rho);
        read_key(j, "sigma_eps", c.sigma_eps);
        if (j.contains("errors")) c.errors = parse_errors(j.at("errors").get<std::string>());
        read_key(j, "error_quantile", c.error_quantile);
        read_key(j, "persistence", c.persistence);
        read_key(j, "ltdr_share", c.ltdr_share);
        read_key(j, "recession_years", c.recession_years);
        read_key(j, "switch_probability", c.switch_probability);
        read_key(j, "recovery_probability", c.recovery_probability);
        read_key(j, "seed", c.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

StudyConfig parse_study_config(const Json& j, const std::filesystem::path& base_dir) {
    check_keys(j,
               {"panel", "macro", "simulate", "leverage", "engines", "taus", "lambda", "bootstrap", "seed",
                "winsorize", "covariance", "hausman"},
               "study config");
    StudyConfig c;
    try {
        auto resolve = [&](const std::string& p) {
            std::filesystem::path path(p);
            return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        };
        if (j.contains("panel")) c.panel = resolve(j.at("panel").get<std::string>());
        if (j.contains("macro")) c.macro = resolve(j.at("macro").get<std::string>());
        read_key(j, "seed", c.seed);
        if (j.contains("simulate")) {
            Json sim = j.at("simulate");
            if (sim.is_object() && !sim.contains("seed")) sim["seed"] = c.seed;
            c.simulate = parse_dgp_config(sim);
        }
        if (j.contains("leverage")) {
            c.leverage.clear();
            for (const auto& s : j.at("leverage")) c.leverage.push_back(parse_leverage(s.get<std::string>()));
        }
        if (j.contains("engines")) {
            c.mean_engine = c.qr_engine = false;
            for (const auto& s : j.at("engines")) {
                const auto name = s.get<std::string>();
                if (name == "mean") c.mean_engine = true;
                else if (name == "qr") c.qr_engine = true;
                else throw ConfigError("study config: unknown engine '" + name + "' (expected mean or qr)");
            }
        }
        read_key(j, "taus", c.taus);
        read_key(j, "lambda", c.lambda);
        read_key(j, "bootstrap", c.bootstrap);
        if (j.contains("winsorize") && !j.at("winsorize").is_null()) c.winsorize = j.at("winsorize").get<double>();
        if (j.contains("covariance")) c.covariance = parse_covariance(j.at("covariance").get<std::string>());
        read_key(j, "hausman", c.hausman);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("study config: ") + e.what());
    }
    c.validate();
    return c;
}

// -------------------------------------------------------------------- CSV

std::string diagnostics_csv(const MergeDiagnostics& d) {
    std::ostringstream os;
    os << "item,year,count\n";
    os << "input_rows,," << d.input_rows << "\n";
    os << "output_rows,," << d.output_rows << "\n";
    for (const auto& [year, count] : d.outside_macro_range_by_year) os << "outside_macro_range," << year << "," << count << "\n";
    os << "missing_assets,," << d.missing_assets << "\n";
    os << "nonpositive_assets,," << d.nonpositive_assets << "\n";
    os << "total_dropped,," << d.total_dropped() << "\n";
    return os.str();
}

std::string yearly_means_csv(const YearMeansTable& t) {
    std::ostringstream os;
    os << "year,firms";
    for (const auto& v : t.variables) os << "," << v;
    for (const auto& v : t.variables) os << ",n_" << v;
    os << "\n";
    for (std::size_t y = 0; y < t.years.size(); ++y) {
        os << t.years[y] << "," << t.firms[y];
        for (const auto& c : t.means[y]) os << "," << fmt6(c);
        for (auto n : t.counts[y]) os << "," << n;
        os << "\n";
    }
    return os.str();
}

std::string correlations_csv(const CorrelationTable& t) {
    std::ostringstream os;
    os << "variable";
    for (const auto& v : t.variables) os << "," << v;
    os << "\n";
    for (std::size_t i = 0; i < t.variables.size(); ++i) {
        os << t.variables[i];
        for (const auto& c : t.r[i]) os << "," << fmt6(c);
        os << "\n";
    }
    return os.str();
}

std::string hausman_csv(const std::vector<LeverageHausman>& rows) {
    std::ostringstream os;
    os << "leverage,statistic,df,p_value\n";
    for (const auto& h : rows) {
        os << leverage_name(h.leverage) << "," << fmt6(h.result.statistic) << "," << h.result.df << ","
           << fmt6(h.result.p_value) << "\n";
    }
    return os.str();
}

std::string coefficients_csv(const std::vector<AdjustmentReport>& reports) {
    std::ostringstream os;
    os << "leverage,engine,tau,term,estimate,std_error\n";
    for (const auto& ref : cells_of(reports)) {
        if (!ref.cell->coefficients) continue;
        const auto& rc = *ref.cell->coefficients;
        const Vector se = standard_errors_of(rc);
        for (std::size_t k = 0; k < rc.names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            os << ref.leverage << "," << ref.engine << "," << ref.tau << "," << rc.names[k] << ","
               << fmt6(rc.coefficients(i)) << "," << fmt6(se(i)) << "\n";
        }
    }
    return os.str();
}

std::string speeds_csv(const std::vector<AdjustmentReport>& reports) {
    std::ostringstream os;
    os << "leverage,engine,tau,speed_good,speed_bad\n";
    for (const auto& ref : cells_of(reports)) {
        if (!ref.cell->speeds) continue;
        os << ref.leverage << "," << ref.engine << "," << ref.tau << "," << fmt6(ref.cell->speeds->speed_good) << ","
           << fmt6(ref.cell->speeds->speed_bad) << "\n";
    }
    return os.str();
}

std::string tests_csv(const std::vector<AdjustmentReport>& reports) {
    std::ostringstream os;
    os << "leverage,engine,tau,test,statistic,df,p_value\n";
    for (const auto& ref : cells_of(reports)) {
        if (!ref.cell->tests) continue;
        const auto& t = *ref.cell->tests;
        auto line = [&](const std::string& name, const WaldResult& w) {
            os << ref.leverage << "," << ref.engine << "," << ref.tau << "," << name << "," << fmt6(w.statistic) << ","
               << w.df << "," << fmt6(w.p_value) << "\n";
        };
        line(t.delta_c.names.empty() ? "delta_c" : t.delta_c.names.front(), t.delta_c);
        for (const auto& w : t.beta_c) line(w.names.empty() ? "beta_c" : w.names.front(), w);
        for (const auto& w : t.gamma_c) line(w.names.empty() ? "gamma_c" : w.names.front(), w);
        if (t.firm_block) line("firm_block", *t.firm_block);
        if (t.macro_block) line("macro_block", *t.macro_block);
    }
    return os.str();
}

std::vector<CsvTable> study_csv_tables(const StudyReport& report) {
    std::vector<CsvTable> out;
    if (report.diagnostics.merge) out.push_back({"diagnostics", diagnostics_csv(*report.diagnostics.merge)});
    if (report.yearly_means) out.push_back({"yearly_means", yearly_means_csv(*report.yearly_means)});
    if (report.correlations) out.push_back({"correlations", correlations_csv(*report.correlations)});
    out.push_back({"hausman", hausman_csv(report.hausman)});
    out.push_back({"coefficients", coefficients_csv(report.adjustments)});
    out.push_back({"speeds", speeds_csv(report.adjustments)});
    out.push_back({"tests", tests_csv(report.adjustments)});
    std::ostringstream errors;
    errors << "stage,kind,message\n";
    for (const auto& e : report.errors) {
        std::string msg = e.message;
        for (char& ch : msg) if (ch == '"') ch = '\'';
        errors << e.stage << "," << error_kind_name(e.kind) << ",\"" << msg << "\"\n";
    }
    out.push_back({"errors", errors.str()});
    return out;
}

// ------------------------------------------------------------------- text

std::string render_text(const MergeDiagnostics& d) {
    std::ostringstream os;
    os << "Ingest diagnostics\n";
    os << "  input rows            " << d.input_rows << "\n";
    os << "  output rows           " << d.output_rows << "\n";
    os << "  missing total assets  " << d.missing_assets << "\n";
    os << "  nonpositive assets    " << d.nonpositive_assets << "\n";
    for (const auto& [year, count] : d.outside_macro_range_by_year) {
        os << "  outside macro range   " << year << ": " << count << "\n";
    }
    os << "  total dropped         " << d.total_dropped() << "\n";
    return os.str();
}

std::string render_text(const YearMeansTable& t) {
    std::ostringstream os;
    os << "Mean value of the variables by year\n";
    os << pad("Year", 6) << pad("Firms", 8);
    for (const auto& v : t.variables) os << pad(v == "as" ? "AS" : [&] {
        std::string up = v;
        for (char& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        return up;
    }(), 10);
    os << "\n";
    for (std::size_t y = 0; y < t.years.size(); ++y) {
        os << pad(std::to_string(t.years[y]), 6) << pad(std::to_string(t.firms[y]), 8);
        for (const auto& c : t.means[y]) os << pad(c ? fixed(*c, 4) : "NA", 10);
        os << "\n";
    }
    return os.str();
}

std::string render_text(const CorrelationTable& t) {
    std::ostringstream os;
    os << "Pearson correlation matrix (pairwise-complete)\n";
    os << pad("", 8, false);
    for (const auto& v : t.variables) os << pad(v, 9);
    os << "\n";
    for (std::size_t i = 0; i < t.variables.size(); ++i) {
        os << pad(t.variables[i], 8, false);
        for (std::size_t k = 0; k <= i; ++k) os << pad(t.r[i][k] ? fixed(*t.r[i][k], 4) : "NA", 9);
        os << "\n";
    }
    return os.str();
}

std::string render_text(const LeverageHausman& h) {
    std::ostringstream os;
    os << "Correlated Random Effects - Hausman Test (" << leverage_name(h.leverage) << ")\n";
    os << "Test cross-section random effects\n\n";
    os << pad("Test Summary", 22, false) << pad("Chi-Sq. Statistic", 19) << pad("Chi-Sq. d.f.", 14) << pad("Prob.", 10)
       << "\n";
    os << pad("Cross-section random", 22, false) << pad(fixed(h.result.statistic, 4), 19)
       << pad(std::to_string(h.result.df), 14) << pad(fixed(h.result.p_value, 4), 10) << "\n";
    return os.str();
}

std::string render_text(const AdjustmentReport& r) {
    std::ostringstream os;
    os << "Partial adjustment model, dependent variable " << leverage_name(r.leverage) << "\n";
    os << "  observations " << r.rows << ", firms " << r.firms << ", mean years per firm "
       << fixed(r.mean_years_per_firm, 2) << "\n";

    std::vector<std::pair<std::string, const AdjustmentCell*>> cols;
    if (r.mean) cols.push_back({"FE mean", &*r.mean});
    for (std::size_t k = 0; k < r.quantiles.size(); ++k) cols.push_back({"q" + fixed(r.taus[k], 2), &r.quantiles[k]});

    std::vector<std::string> terms;
    for (const auto& [label, c] : cols) {
        if (c->coefficients) {
            terms = c->coefficients->names;
            break;
        }
    }
    constexpr std::size_t w = 14;
    os << "\n" << pad("", 16, false);
    for (const auto& [label, c] : cols) os << pad(label, w);
    os << "\n";
    for (const auto& term : terms) {
        std::ostringstream coef_line, se_line;
        coef_line << pad(term, 16, false);
        se_line << pad("", 16, false);
        for (const auto& [label, c] : cols) {
            std::string coef = "", se = "";
            if (c->coefficients) {
                const auto& rc = *c->coefficients;
                const Vector ses = standard_errors_of(rc);
                for (std::size_t k = 0; k < rc.names.size(); ++k) {
                    if (rc.names[k] != term) continue;
                    const auto i = static_cast<Eigen::Index>(k);
                    std::string mark;
                    if (std::isfinite(ses(i)) && ses(i) > 0.0) {
                        mark = stars(chi_square_sf(std::pow(rc.coefficients(i) / ses(i), 2), 1));
                        se = "(" + fixed(ses(i), 4) + ")";
                    }
                    coef = fixed(rc.coefficients(i), 4) + mark;
                }
            }
            coef_line << pad(coef, w);
            se_line << pad(se, w);
        }
        os << coef_line.str() << "\n" << se_line.str() << "\n";
    }

    os << "\n" << pad("speed (good)", 16, false);
    for (const auto& [label, c] : cols) os << pad(c->speeds ? fixed(c->speeds->speed_good, 4) : "NA", w);
    os << "\n" << pad("speed (bad)", 16, false);
    for (const auto& [label, c] : cols) os << pad(c->speeds ? fixed(c->speeds->speed_bad, 4) : "NA", w);
    os << "\n" << pad("Wald delta_c p", 16, false);
    for (const auto& [label, c] : cols) os << pad(c->tests ? fixed(c->tests->delta_c.p_value, 4) : "NA", w);
    os << "\n" << pad("Wald firm blk p", 16, false);
    for (const auto& [label, c] : cols) {
        os << pad(c->tests && c->tests->firm_block ? fixed(c->tests->firm_block->p_value, 4) : "NA", w);
    }
    os << "\n" << pad("Wald macro blk p", 16, false);
    for (const auto& [label, c] : cols) {
        os << pad(c->tests && c->tests->macro_block ? fixed(c->tests->macro_block->p_value, 4) : "NA", w);
    }
    os << "\n";
    for (const auto& [label, c] : cols) {
        if (!c->error.empty()) os << "  " << label << " failed: " << c->error << "\n";
        for (const auto& n : c->notes) os << "  " << label << ": " << n << "\n";
    }
    for (const auto& a : r.advisories) os << "  note: " << a << "\n";
    os << "  significance: *** 1%, ** 5%, * 10%\n";
    return os.str();
}

std::string render_text(const StudyReport& r) {
    std::ostringstream os;
    const auto& m = r.metadata;
    os << "Study (" << m.source << " data, seed " << m.seed << ")\n";
    os << "  engines";
    for (const auto& e : m.engines) os << " " << e;
    os << "; leverage";
    for (const auto& l : m.leverage) os << " " << l;
    os << "; covariance " << m.covariance;
    if (m.winsorize) os << "; winsorize " << fmt6(*m.winsorize);
    os << "\n";
    if (!m.taus.empty()) {
        os << "  taus";
        for (double t : m.taus) os << " " << fmt6(t);
        os << "; lambda " << fmt6(m.lambda) << "; bootstrap " << m.bootstrap << "\n";
    }
    os << "  derived rows " << r.diagnostics.derived_rows << "\n";
    if (r.true_speeds) {
        os << "  true speeds: good " << fixed(r.true_speeds->speed_good, 4) << ", bad "
           << fixed(r.true_speeds->speed_bad, 4) << "\n";
    }
    os << "\n";
    if (r.diagnostics.merge) os << render_text(*r.diagnostics.merge) << "\n";
    if (r.yearly_means) os << render_text(*r.yearly_means) << "\n";
    if (r.correlations) os << render_text(*r.correlations) << "\n";
    for (const auto& h : r.hausman) os << render_text(h) << "\n";
    for (const auto& a : r.adjustments) os << render_text(a) << "\n";
    for (const auto& w : r.diagnostics.warnings) os << "warning: " << w << "\n";
    for (const auto& e : r.errors) os << "error [" << e.stage << ", " << error_kind_name(e.kind) << "]: " << e.message << "\n";
    return os.str();
}

}  // namespace capstruct
