#include "capstruct/errors.hpp"
#include "capstruct/report.hpp"
#include "capstruct/study.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace capstruct;

namespace {

struct Common {
    std::string format = "json";
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv", "text"}));
    cmd->add_option("--out", c.out, "Output directory (default: stdout)");
    cmd->add_option("--seed", c.seed, "Random seed");
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
}

fs::path out_dir(const Common& c) {
    fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

/// Single ordered emitter for every subcommand.
void emit(const Common& c, const std::string& name, const Json& json, const std::vector<CsvTable>& tables,
          const std::string& text) {
    if (c.format == "json") {
        if (c.out.empty()) std::cout << canonical_dump(json);
        else write_file(out_dir(c) / (name + ".json"), canonical_dump(json));
    } else if (c.format == "csv") {
        if (c.out.empty()) {
            for (std::size_t k = 0; k < tables.size(); ++k) {
                if (tables.size() > 1) std::cout << (k ? "\n" : "") << "# " << tables[k].name << "\n";
                std::cout << tables[k].content;
            }
        } else {
            const fs::path dir = out_dir(c);
            for (const auto& t : tables) write_file(dir / (t.name + ".csv"), t.content);
        }
    } else {
        if (c.out.empty()) std::cout << text;
        else write_file(out_dir(c) / (name + ".txt"), text);
    }
}

std::vector<double> parse_taus(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& item : items) {
        std::size_t start = 0;
        while (start <= item.size()) {
            const auto comma = item.find(',', start);
            const std::string piece = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!piece.empty()) {
                try {
                    std::size_t used = 0;
                    out.push_back(std::stod(piece, &used));
                    if (used != piece.size()) throw std::invalid_argument(piece);
                } catch (const std::exception&) {
                    throw ConfigError("invalid tau '" + piece + "'");
                }
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return out;
}

CovarianceType covariance_of(const std::string& s) {
    return s == "clustered" ? CovarianceType::clustered : CovarianceType::conventional;
}

std::vector<DerivedRow> load_rows(const std::string& panel, const std::string& macro, std::optional<double> winsorize) {
    const MergeResult merged = ingest(panel, macro);
    FeatureOptions options;
    if (winsorize) {
        if (!(*winsorize > 0.0 && *winsorize < 0.5)) throw ConfigError("--winsorize must lie in (0, 0.5)");
        options.winsorize = winsorize;
    }
    return derive_rows(merged.dataset, options);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Capital structure partial-adjustment toolkit"};
    app.require_subcommand(1);

    std::string panel, macro, leverage = "tdr", engine = "mean", covariance = "conventional", config;
    std::optional<double> winsorize;
    std::vector<std::string> taus;
    double lambda = 0.0;
    std::size_t bootstrap = 0;

    Common c_ingest, c_describe, c_hausman, c_fit, c_simulate, c_study;
    const auto cov_check = CLI::IsMember({"conventional", "clustered"});
    const auto lev_check = CLI::IsMember({"tdr", "ltdr", "stdr"});

    auto* ingest_cmd = app.add_subcommand("ingest", "Validate and merge panel and macro files");
    ingest_cmd->add_option("--panel", panel)->required();
    ingest_cmd->add_option("--macro", macro)->required();
    add_common(ingest_cmd, c_ingest);

    auto* describe_cmd = app.add_subcommand("describe", "Yearly means and correlation matrix");
    describe_cmd->add_option("--panel", panel)->required();
    describe_cmd->add_option("--macro", macro)->required();
    describe_cmd->add_option("--winsorize", winsorize);
    add_common(describe_cmd, c_describe);

    auto* hausman_cmd = app.add_subcommand("hausman", "FE vs RE test on the mean model");
    hausman_cmd->add_option("--panel", panel)->required();
    hausman_cmd->add_option("--macro", macro)->required();
    hausman_cmd->add_option("--leverage", leverage)->check(lev_check);
    hausman_cmd->add_option("--covariance", covariance)->check(cov_check);
    hausman_cmd->add_option("--winsorize", winsorize);
    add_common(hausman_cmd, c_hausman);

    auto* fit_cmd = app.add_subcommand("fit", "Fit the partial-adjustment model");
    fit_cmd->add_option("--panel", panel)->required();
    fit_cmd->add_option("--macro", macro)->required();
    fit_cmd->add_option("--leverage", leverage)->check(lev_check);
    fit_cmd->add_option("--engine", engine)->check(CLI::IsMember({"mean", "qr"}));
    fit_cmd->add_option("--tau", taus, "Quantiles (comma separated)");
    fit_cmd->add_option("--lambda", lambda);
    fit_cmd->add_option("--bootstrap", bootstrap);
    fit_cmd->add_option("--covariance", covariance)->check(cov_check);
    fit_cmd->add_option("--winsorize", winsorize);
    add_common(fit_cmd, c_fit);

    auto* simulate_cmd = app.add_subcommand("simulate", "Write a synthetic panel");
    simulate_cmd->add_option("--config", config)->required();
    add_common(simulate_cmd, c_simulate);

    auto* study_cmd = app.add_subcommand("study", "Run the full pipeline");
    study_cmd->add_option("--config", config)->required();
    add_common(study_cmd, c_study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest_cmd) {
            const MergeResult merged = ingest(panel, macro);
            const auto& d = merged.diagnostics;
            if (!c_ingest.out.empty()) {
                const fs::path dir = out_dir(c_ingest);
                write_panel_csv(merged.dataset, dir / "panel.csv");
                write_macro_csv(merged.dataset.macro(), dir / "macro.csv");
            }
            emit(c_ingest, "diagnostics", to_json(d), {{"diagnostics", diagnostics_csv(d)}}, render_text(d));
        } else if (*describe_cmd) {
            const auto rows = load_rows(panel, macro, winsorize);
            const YearMeansTable means = yearly_means(rows);
            const CorrelationTable corr = correlation_matrix(rows);
            Json j{{"yearly_means", to_json(means)}, {"correlations", to_json(corr)}};
            emit(c_describe, "describe", j,
                 {{"yearly_means", yearly_means_csv(means)}, {"correlations", correlations_csv(corr)}},
                 render_text(means) + "\n" + render_text(corr));
        } else if (*hausman_cmd) {
            const auto rows = load_rows(panel, macro, winsorize);
            const LeverageHausman h{parse_leverage(leverage), hausman_for(rows, parse_leverage(leverage), covariance_of(covariance))};
            Json j = to_json(h.result);
            j["leverage"] = leverage;
            emit(c_hausman, "hausman", j, {{"hausman", hausman_csv({h})}}, render_text(h));
        } else if (*fit_cmd) {
            const auto rows = load_rows(panel, macro, winsorize);
            const LeverageForm form = parse_leverage(leverage);
            AdjustmentConfig ac;
            ac.mean_engine = engine == "mean";
            if (engine == "qr") {
                ac.taus = taus.empty() ? std::vector<double>{0.5} : parse_taus(taus);
            } else if (!taus.empty()) {
                throw ConfigError("--tau requires --engine qr");
            }
            ac.lambda = lambda;
            ac.bootstrap = bootstrap;
            ac.seed = c_fit.seed.value_or(1);
            ac.covariance = covariance_of(covariance);
            const AdjustmentReport report = build_adjustment_report(build_design(rows, form, DesignOptions{}), form, ac);
            emit(c_fit, "fit", to_json(report),
                 {{"coefficients", coefficients_csv({report})}, {"speeds", speeds_csv({report})}, {"tests", tests_csv({report})}},
                 render_text(report));
            const AdjustmentCell* first = report.mean ? &*report.mean : report.quantiles.empty() ? nullptr : &report.quantiles.front();
            bool failed = false;
            for (const auto& q : report.quantiles) failed = failed || !q.error.empty();
            if (first && !first->error.empty()) failed = true;
            if (failed) {
                std::cerr << "error: one or more fits failed (see report)\n";
                return 4;
            }
        } else if (*simulate_cmd) {
            if (c_simulate.out.empty()) throw ConfigError("simulate requires --out <dir>");
            Json j = read_json_file(config);
            if (c_simulate.seed) j["seed"] = *c_simulate.seed;
            const DgpConfig cfg = parse_dgp_config(j);
            const SimulatedPanel sim = simulate_panel(cfg);
            const fs::path dir = out_dir(c_simulate);
            write_panel_csv(sim.dataset, dir / "panel.csv");
            write_macro_csv(sim.dataset.macro(), dir / "macro.csv");
            Json truth;
            truth["config"] = to_json(cfg);
            truth["true_speeds"] = Json{{"speed_good", sim.true_speeds.speed_good}, {"speed_bad", sim.true_speeds.speed_bad}};
            Json recession = Json::object();
            for (std::size_t k = 0; k < sim.recession.size(); ++k) {
                recession[std::to_string(sim.dataset.macro()[k].year)] = sim.recession[k];
            }
            truth["recession"] = recession;
            Json effects = Json::object();
            for (std::size_t k = 0; k < sim.dataset.firms().size(); ++k) {
                effects[sim.dataset.firms()[k].firm_id] = round_sig6(sim.firm_effects[k]);
            }
            truth["firm_effects"] = effects;
            write_file(dir / "truth.json", canonical_dump(truth));
        } else if (*study_cmd) {
            Json j = read_json_file(config);
            if (c_study.seed) j["seed"] = *c_study.seed;
            const StudyConfig cfg = parse_study_config(j, fs::path(config).parent_path());
            const StudyReport report = run_study(cfg);
            emit(c_study, "study", to_json(report), study_csv_tables(report), render_text(report));
            if (!report.ok()) {
                const auto& e = report.errors.front();
                std::cerr << "error [" << e.stage << "]: " << e.message << "\n";
                return exit_code(e.kind);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
