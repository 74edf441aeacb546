#pragma once

#include "capstruct/adjustment.hpp"
#include "capstruct/descriptives.hpp"
#include "capstruct/mean_panel.hpp"
#include "capstruct/panel_store.hpp"
#include "capstruct/simulate.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace capstruct {

struct StudyConfig {
    // Either both file paths or a simulation config.
    std::optional<std::filesystem::path> panel;
    std::optional<std::filesystem::path> macro;
    std::optional<DgpConfig> simulate;

    std::vector<LeverageForm> leverage = {LeverageForm::tdr, LeverageForm::ltdr, LeverageForm::stdr};
    bool mean_engine = true;
    bool qr_engine = true;
    std::vector<double> taus = decile_grid();
    double lambda = 0.0;
    std::size_t bootstrap = 50;
    std::uint64_t seed = 1;
    std::optional<double> winsorize;
    CovarianceType covariance = CovarianceType::conventional;
    bool hausman = true;

    void validate() const;
};

enum class ErrorKind { config, data, estimation };
std::string_view error_kind_name(ErrorKind kind);

struct StageError {
    std::string stage;
    ErrorKind kind = ErrorKind::estimation;
    std::string message;
};

struct StudyMetadata {
    std::string source;  // "files" or "simulated"
    std::uint64_t seed = 1;
    std::vector<std::string> leverage;
    std::vector<std::string> engines;
    std::vector<double> taus;
    double lambda = 0.0;
    std::size_t bootstrap = 0;
    std::optional<double> winsorize;
    std::string covariance;
};

struct StudyDiagnostics {
    std::optional<MergeDiagnostics> merge;
    std::size_t derived_rows = 0;
    std::vector<std::string> warnings;
};

struct LeverageHausman {
    LeverageForm leverage = LeverageForm::tdr;
    HausmanResult result;
};

struct StudyReport {
    StudyMetadata metadata;
    StudyDiagnostics diagnostics;
    std::optional<YearMeansTable> yearly_means;
    std::optional<CorrelationTable> correlations;
    std::vector<LeverageHausman> hausman;
    std::vector<AdjustmentReport> adjustments;
    std::optional<SpeedEstimates> true_speeds;  // simulated mode only
    std::vector<StageError> errors;

    bool ok() const { return errors.empty(); }
};

/// ingest -> features -> descriptives -> Hausman -> adjustment fits -> tests.
/// Stage failures are recorded in `errors`; completed stages are kept.
StudyReport run_study(const StudyConfig& config);

/// Loads both CSV files and merges them.
MergeResult ingest(const std::filesystem::path& panel, const std::filesystem::path& macro);

/// FE vs RE on the mean model for one leverage form.
HausmanResult hausman_for(const std::vector<DerivedRow>& rows, LeverageForm form,
                          CovarianceType covariance = CovarianceType::conventional);

/// CLI exit code for an error kind: 2 config, 3 data, 4 estimation.
int exit_code(ErrorKind kind);

}  // namespace capstruct
