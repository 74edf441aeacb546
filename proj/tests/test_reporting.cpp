#include "capstruct/descriptives.hpp"
#include "capstruct/errors.hpp"
#include "capstruct/report.hpp"
#include "capstruct/study.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace capstruct;
namespace fs = std::filesystem;

namespace {

DerivedRow row(const std::string& firm, int year, double tdr, double pr) {
    DerivedRow r;
    r.firm_id = firm;
    r.year = year;
    r.set(Variable::tdr, tdr);
    r.set(Variable::pr, pr);
    return r;
}

std::vector<DerivedRow> random_rows(std::uint64_t seed, std::size_t n) {
    RandomSource rng(seed);
    std::vector<DerivedRow> rows;
    for (std::size_t i = 0; i < n; ++i) {
        DerivedRow r;
        r.firm_id = "f" + std::to_string(i % 37);
        r.year = 1990 + static_cast<int>(i / 37);
        const double z = rng.normal();
        for (std::size_t v = 0; v < kVariableCount; ++v) {
            if (rng.uniform() < 0.05) continue;
            r.values[v] = 0.3 * z + rng.normal(static_cast<double>(v), 1.0 + static_cast<double>(v) * 100.0);
        }
        rows.push_back(r);
    }
    return rows;
}

// Two-pass Pearson on pairwise-complete rows.
std::optional<double> two_pass(const std::vector<DerivedRow>& rows, std::size_t a, std::size_t b) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (r.values[a] && r.values[b]) {
            x.push_back(*r.values[a]);
            y.push_back(*r.values[b]);
        }
    }
    if (x.size() < 3) return std::nullopt;
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

std::size_t vidx(Variable v) { return static_cast<std::size_t>(v); }

StudyConfig small_study(std::uint64_t seed) {
    StudyConfig cfg;
    DgpConfig dgp;
    dgp.firms = 40;
    dgp.years = 16;
    dgp.seed = seed;
    dgp.recession_years = {1983, 1987, 1991, 1995};
    cfg.simulate = dgp;
    cfg.taus = {0.25, 0.5};
    cfg.bootstrap = 5;
    cfg.seed = seed;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CAPSTRUCT_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("yearly means") {
    std::vector<DerivedRow> rows = {row("A", 2000, 0.2, 0.1), row("B", 2000, 0.4, 0.3), row("A", 2001, 0.5, 0.2)};
    rows[2].set(Variable::pr, std::nullopt);
    const YearMeansTable t = yearly_means(rows);
    REQUIRE(t.years == std::vector<int>{2000, 2001});
    CHECK(t.variables.size() == kVariableCount);
    CHECK(t.variables[0] == "tdr");
    CHECK(*t.means[0][vidx(Variable::tdr)] == doctest::Approx(0.3));
    CHECK(*t.means[0][vidx(Variable::pr)] == doctest::Approx(0.2));
    CHECK(*t.means[1][vidx(Variable::tdr)] == doctest::Approx(0.5));
    CHECK_FALSE(t.means[1][vidx(Variable::pr)]);
    CHECK(t.counts[1][vidx(Variable::pr)] == 0);
    CHECK(t.firms == std::vector<std::size_t>{2, 1});

    CHECK_THROWS_AS(yearly_means(std::vector<DerivedRow>{}), DataError);

    SUBCASE("row order does not matter") {
        const auto base = random_rows(3, 400);
        const YearMeansTable a = yearly_means(base);
        auto shuffled = base;
        std::mt19937_64 g(7);
        std::shuffle(shuffled.begin(), shuffled.end(), g);
        const YearMeansTable b = yearly_means(shuffled);
        CHECK(a.years == b.years);
        CHECK(a.counts == b.counts);
        for (std::size_t y = 0; y < a.years.size(); ++y) {
            for (std::size_t v = 0; v < kVariableCount; ++v) {
                REQUIRE(a.means[y][v].has_value() == b.means[y][v].has_value());
                if (a.means[y][v]) CHECK(*a.means[y][v] == doctest::Approx(*b.means[y][v]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("correlation matrix") {
    SUBCASE("perfect relations") {
        std::vector<DerivedRow> rows;
        for (int i = 0; i < 5; ++i) rows.push_back(row("A", 2000 + i, i, 3.0 - 2.0 * i));
        const CorrelationTable t = correlation_matrix(rows);
        CHECK(*t.r[vidx(Variable::tdr)][vidx(Variable::pr)] == doctest::Approx(-1.0));
        CHECK(*t.r[vidx(Variable::tdr)][vidx(Variable::tdr)] == doctest::Approx(1.0));
        CHECK_FALSE(t.r[vidx(Variable::tdr)][vidx(Variable::size)]);
    }
    SUBCASE("constant column is missing") {
        std::vector<DerivedRow> rows;
        for (int i = 0; i < 5; ++i) rows.push_back(row("A", 2000 + i, 0.5, i));
        CHECK_FALSE(correlation_matrix(rows).r[vidx(Variable::tdr)][vidx(Variable::pr)]);
    }
    SUBCASE("two-pass oracle on 1000 rows") {
        const auto rows = random_rows(11, 1000);
        const CorrelationTable t = correlation_matrix(rows);
        double worst = 0.0;
        for (std::size_t a = 0; a < kVariableCount; ++a) {
            for (std::size_t b = 0; b < kVariableCount; ++b) {
                const auto expected = two_pass(rows, a, b);
                REQUIRE(t.r[a][b].has_value() == expected.has_value());
                if (expected) worst = std::max(worst, std::abs(*t.r[a][b] - *expected));
                CHECK(t.r[a][b] == t.r[b][a]);
            }
        }
        CHECK(worst < 1e-12);
    }
    CHECK_THROWS_AS(correlation_matrix(std::vector<DerivedRow>{row("A", 2000, 1, 1)}), DataError);
}

TEST_CASE("number formatting") {
    CHECK(round_sig6(0.123456789) == 0.123457);
    CHECK(round_sig6(1234567.0) == 1234570.0);
    CHECK(round_sig6(0.0) == 0.0);
    Json j{{"b", 1}, {"a", std::nan("")}};
    const std::string s = canonical_dump(j);
    CHECK(s.find("\"a\"") < s.find("\"b\""));
    CHECK(s.back() == '\n');
}

TEST_CASE("config parsing") {
    const Json ok = Json::parse(R"({"simulate": {"firms": 30, "years": 12}, "leverage": ["ltdr"],
                                   "engines": ["qr"], "taus": [0.5], "seed": 4, "bootstrap": 0})");
    const StudyConfig c = parse_study_config(ok);
    REQUIRE(c.simulate);
    CHECK(c.simulate->firms == 30);
    CHECK(c.simulate->seed == 4);
    CHECK(c.leverage == std::vector<LeverageForm>{LeverageForm::ltdr});
    CHECK_FALSE(c.mean_engine);
    CHECK(c.qr_engine);

    const Json paths = Json::parse(R"({"panel": "p.csv", "macro": "m.csv"})");
    const StudyConfig p = parse_study_config(paths, "/data");
    CHECK(*p.panel == fs::path("/data/p.csv"));

    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({"simulate": {}, "tau": [0.5]})")), ConfigError);
    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({"simulate": {}, "taus": "x"})")), ConfigError);
    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({"simulate": {}, "leverage": ["debt"]})")), ConfigError);
    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({"simulate": {}, "taus": [1.5]})")), ConfigError);
    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({"simulate": {"speed": 2}})")), ConfigError);
    CHECK_THROWS_AS(parse_study_config(Json::parse(R"({})")), ConfigError);
    CHECK_THROWS_AS(parse_dgp_config(Json::parse(R"({"sigma": 1})")), ConfigError);
    CHECK_THROWS_AS(read_json_file("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("study report") {
    const StudyConfig cfg = small_study(21);
    const StudyReport a = run_study(cfg);
    for (const auto& e : a.errors) MESSAGE(e.stage << ": " << e.message);
    REQUIRE(a.ok());
    CHECK(a.metadata.source == "simulated");
    REQUIRE(a.yearly_means);
    REQUIRE(a.correlations);
    CHECK(a.hausman.size() == 3);
    CHECK(a.adjustments.size() == 3);
    REQUIRE(a.true_speeds);

    const std::string ja = canonical_dump(to_json(a));
    CHECK(ja == canonical_dump(to_json(run_study(cfg))));

    SUBCASE("JSON round trip") {
        const StudyReport back = study_report_from_json(Json::parse(ja));
        CHECK(canonical_dump(to_json(back)) == ja);
    }
    SUBCASE("CSV and text renderings") {
        const auto tables = study_csv_tables(a);
        std::vector<std::string> names;
        for (const auto& t : tables) names.push_back(t.name);
        for (const char* n : {"yearly_means", "correlations", "hausman", "coefficients", "speeds", "tests"}) {
            CHECK(std::find(names.begin(), names.end(), n) != names.end());
        }
        const std::string text = render_text(a);
        CHECK(text.find("Hausman") != std::string::npos);
        CHECK(text.find("q0.25") != std::string::npos);
    }
}

TEST_CASE("study projection") {
    StudyConfig cfg = small_study(5);
    cfg.leverage = {LeverageForm::ltdr};
    cfg.mean_engine = false;
    cfg.taus = {0.5};
    cfg.bootstrap = 0;
    cfg.hausman = false;
    const StudyReport r = run_study(cfg);
    REQUIRE(r.ok());
    REQUIRE(r.adjustments.size() == 1);
    CHECK(r.adjustments[0].leverage == LeverageForm::ltdr);
    CHECK_FALSE(r.adjustments[0].mean);
    CHECK(r.adjustments[0].quantiles.size() == 1);
    CHECK(r.hausman.empty());
}

TEST_CASE("study detects a state-dependent speed") {
    StudyConfig cfg;
    DgpConfig dgp;
    dgp.firms = 300;
    dgp.years = 30;
    dgp.speed = 0.4;
    dgp.bad_state_shift = -0.2;
    dgp.seed = 8;
    cfg.simulate = dgp;
    cfg.leverage = {LeverageForm::tdr};
    cfg.qr_engine = false;
    cfg.hausman = false;
    const StudyReport r = run_study(cfg);
    REQUIRE(r.ok());
    const auto& cell = *r.adjustments[0].mean;
    REQUIRE(cell.speeds);
    CHECK(cell.speeds->speed_bad < cell.speeds->speed_good);
    CHECK(cell.tests->delta_c.p_value < 0.05);
}

TEST_CASE("study stage errors are recorded") {
    StudyConfig cfg;
    cfg.panel = "/nonexistent/panel.csv";
    cfg.macro = "/nonexistent/macro.csv";
    const StudyReport r = run_study(cfg);
    REQUIRE_FALSE(r.ok());
    CHECK(r.errors.front().stage == "ingest");
    CHECK(r.errors.front().kind == ErrorKind::data);
    CHECK(exit_code(ErrorKind::config) == 2);
    CHECK(exit_code(ErrorKind::data) == 3);
    CHECK(exit_code(ErrorKind::estimation) == 4);
}

TEST_CASE("command line exit codes") {
    const fs::path dir = test_support::temp_dir("cli_codes");
    write_text(dir / "dgp.json", R"({"firms": 30, "years": 14, "seed": 3, "recession_years": [1984, 1986, 1988, 1990, 1992]})");
    CHECK(run_cli("simulate --config " + (dir / "dgp.json").string() + " --out " + (dir / "sim").string()) == 0);
    CHECK(fs::exists(dir / "sim" / "panel.csv"));
    CHECK(fs::exists(dir / "sim" / "truth.json"));

    const std::string files = " --panel " + (dir / "sim" / "panel.csv").string() + " --macro " +
                              (dir / "sim" / "macro.csv").string();
    CHECK(run_cli("ingest" + files) == 0);
    CHECK(run_cli("describe" + files + " --format csv --out " + (dir / "describe").string()) == 0);
    CHECK(fs::exists(dir / "describe" / "yearly_means.csv"));
    CHECK(run_cli("hausman" + files + " --format text") == 0);
    CHECK(run_cli("fit" + files + " --engine qr --tau 0.5") == 0);

    CHECK(run_cli("fit" + files + " --engine mean --tau 0.5") == 2);
    CHECK(run_cli("fit" + files + " --leverage debt") == 2);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("study --config " + (dir / "missing.json").string()) == 2);
    write_text(dir / "bad.json", R"({"simulate": {"firms": 1}})");
    CHECK(run_cli("study --config " + (dir / "bad.json").string()) == 2);

    write_text(dir / "broken.csv", "firm_id,year\nA,notayear\n");
    CHECK(run_cli("ingest --panel " + (dir / "broken.csv").string() + " --macro " + (dir / "sim" / "macro.csv").string()) == 3);

    SUBCASE("study from files, written to a directory") {
        const std::string cfg = R"({"panel": "sim/panel.csv", "macro": "sim/macro.csv", "leverage": ["tdr"],
                                    "taus": [0.5], "bootstrap": 0})";
        write_text(dir / "study.json", cfg);
        CHECK(run_cli("study --config " + (dir / "study.json").string() + " --out " + (dir / "out").string()) == 0);
        const std::string report = read_text(dir / "out" / "study.json");
        CHECK_NOTHROW(study_report_from_json(Json::parse(report)));
    }
}
