#include "capstruct/study.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>

namespace capstruct {

namespace {

template <typename F>
bool run_stage(StudyReport& report, const std::string& stage, F&& body) {
    try {
        body();
        return true;
    } catch (const ConfigError& e) {
        report.errors.push_back({stage, ErrorKind::config, e.what()});
    } catch (const DataError& e) {
        report.errors.push_back({stage, ErrorKind::data, e.what()});
    } catch (const std::exception& e) {
        report.errors.push_back({stage, ErrorKind::estimation, e.what()});
    }
    return false;
}

}  // namespace

void StudyConfig::validate() const {
    const bool files = panel.has_value() || macro.has_value();
    if (files && simulate) throw ConfigError("study: give either panel/macro files or a simulation config, not both");
    if (!simulate && !(panel && macro)) throw ConfigError("study: both panel and macro paths are required");
    if (simulate) simulate->validate();
    if (leverage.empty()) throw ConfigError("study: no leverage form selected");
    if (!mean_engine && !qr_engine) throw ConfigError("study: no engine selected");
    if (qr_engine) {
        if (taus.empty()) throw ConfigError("study: quantile engine needs a tau grid");
        for (std::size_t k = 0; k < taus.size(); ++k) {
            if (!(taus[k] > 0.0 && taus[k] < 1.0)) throw ConfigError("study: taus must lie in (0, 1)");
            if (k > 0 && !(taus[k] > taus[k - 1])) throw ConfigError("study: taus must be strictly increasing");
        }
    }
    if (!(lambda >= 0.0)) throw ConfigError("study: lambda must be nonnegative");
    if (bootstrap == 1) throw ConfigError("study: bootstrap needs 0 (off) or at least 2 replicates");
    if (winsorize && !(*winsorize > 0.0 && *winsorize < 0.5)) throw ConfigError("study: winsorize must lie in (0, 0.5)");
}

std::string_view error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::estimation: return "estimation";
    }
    return "";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::estimation: return 4;
    }
    return 4;
}

MergeResult ingest(const std::filesystem::path& panel, const std::filesystem::path& macro) {
    const PanelDataset raw = load_panel_csv(panel);
    const auto series = load_macro_csv(macro);
    return validate_and_merge(raw, series);
}

HausmanResult hausman_for(const std::vector<DerivedRow>& rows, LeverageForm form, CovarianceType covariance) {
    const DesignMatrix design = build_design(rows, form, DesignOptions{});
    MeanOptions opt;
    opt.covariance = covariance;
    return hausman_test(fit_fixed_effects(design, opt), fit_random_effects(design, opt));
}

StudyReport run_study(const StudyConfig& config) {
    StudyReport report;
    auto& meta = report.metadata;
    meta.source = config.simulate ? "simulated" : "files";
    meta.seed = config.seed;
    for (auto f : config.leverage) meta.leverage.emplace_back(leverage_name(f));
    if (config.mean_engine) meta.engines.emplace_back("mean");
    if (config.qr_engine) {
        meta.engines.emplace_back("qr");
        meta.taus = config.taus;
        meta.lambda = config.lambda;
        meta.bootstrap = config.bootstrap;
    }
    meta.winsorize = config.winsorize;
    meta.covariance = config.covariance == CovarianceType::clustered ? "clustered" : "conventional";

    if (!run_stage(report, "config", [&] { config.validate(); })) return report;

    PanelDataset dataset;
    const bool ingested = run_stage(report, "ingest", [&] {
        if (config.simulate) {
            SimulatedPanel sim = simulate_panel(*config.simulate);
            report.true_speeds = sim.true_speeds;
            dataset = std::move(sim.dataset);
        } else {
            MergeResult merged = ingest(*config.panel, *config.macro);
            report.diagnostics.merge = merged.diagnostics;
            dataset = std::move(merged.dataset);
        }
    });
    if (!ingested) return report;

    std::vector<DerivedRow> rows;
    FeatureOptions features;
    features.winsorize = config.winsorize;
    if (!run_stage(report, "features", [&] { rows = derive_rows(dataset, features); })) return report;
    report.diagnostics.derived_rows = rows.size();

    run_stage(report, "descriptives", [&] {
        report.yearly_means = yearly_means(rows);
        report.correlations = correlation_matrix(rows);
    });

    for (LeverageForm form : config.leverage) {
        const std::string lev(leverage_name(form));
        if (config.hausman) {
            run_stage(report, "hausman:" + lev, [&] {
                report.hausman.push_back({form, hausman_for(rows, form, config.covariance)});
            });
        }
        run_stage(report, "adjustment:" + lev, [&] {
            const DesignMatrix design = build_design(rows, form, DesignOptions{});
            AdjustmentConfig ac;
            ac.mean_engine = config.mean_engine;
            if (config.qr_engine) ac.taus = config.taus;
            ac.lambda = config.lambda;
            ac.bootstrap = config.bootstrap;
            ac.seed = derive_seed(config.seed, static_cast<std::uint64_t>(form));
            ac.covariance = config.covariance;
            AdjustmentReport adj = build_adjustment_report(design, form, ac);
            auto collect = [&](const AdjustmentCell& cell, const std::string& label) {
                if (!cell.error.empty()) {
                    report.errors.push_back({"adjustment:" + lev + ":" + label, ErrorKind::estimation, cell.error});
                }
                if (cell.coefficients) {
                    for (const auto& w : cell.coefficients->warnings) report.diagnostics.warnings.push_back(lev + " " + label + ": " + w);
                }
            };
            if (adj.mean) collect(*adj.mean, "mean");
            for (std::size_t k = 0; k < adj.quantiles.size(); ++k) {
                collect(adj.quantiles[k], "tau=" + format_exact(adj.taus[k]));
            }
            report.adjustments.push_back(std::move(adj));
        });
    }
    return report;
}

}  // namespace capstruct
