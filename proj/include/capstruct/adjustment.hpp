#pragma once

#include "capstruct/features.hpp"
#include "capstruct/mean_panel.hpp"
#include "capstruct/panel_quantreg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace capstruct {

enum class Engine { mean_fe, panel_qr };
std::string_view engine_name(Engine e);

struct EngineSpec {
    Engine engine = Engine::mean_fe;
    double tau = 0.5;            // panel_qr only
    double lambda = 0.0;         // panel_qr only
    std::size_t bootstrap = 0;   // panel_qr covariance replicates
    std::uint64_t seed = 0;
    CovarianceType covariance = CovarianceType::conventional;  // mean_fe only
};

/// Coefficients of the state-dummy partial-adjustment model
///
///   DR_t = a + a_i + a_c c_t + delta DR_{t-1} + delta_c DR_{t-1} c_t
///        + beta X_{t-1} + beta_c X_{t-1} c_t + gamma M_{t-1} + gamma_c M_{t-1} c_t + e.
struct RegimeCoefficients {
    Engine source = Engine::mean_fe;
    std::optional<double> tau;
    double lambda = 0.0;
    std::string dependent;

    double a = 0.0;  // mean FE: grand constant; panel QR: mean firm intercept
    double a_c = 0.0;
    double delta = 0.0;
    double delta_c = 0.0;
    std::vector<std::string> firm_factors;
    Vector beta, beta_c;
    std::vector<std::string> macro_factors;
    Vector gamma, gamma_c;

    // Full coefficient vector in design-column order with its covariance
    // (empty covariance for QR fits without bootstrap).
    std::vector<std::string> names;
    Vector coefficients;
    Matrix covariance;
    std::vector<std::string> warnings;
};

/// Fits the model on a design built with state dummies.
RegimeCoefficients fit_adjustment(const DesignMatrix& design, const EngineSpec& spec);

struct SpeedEstimates {
    double speed_good = 0.0;  // 1 - delta
    double speed_bad = 0.0;   // 1 - (delta + delta_c)
};

SpeedEstimates adjustment_speeds(const RegimeCoefficients& rc);

enum class State { good, bad };
std::string_view state_name(State s);

/// Target-equation parameters: fitted coefficients divided by the state's speed.
struct TargetModelParams {
    State state = State::good;
    double speed = 0.0;
    double a_star = 0.0;
    std::vector<std::string> firm_factors;
    Vector beta_star;
    std::vector<std::string> macro_factors;
    Vector gamma_star;
};

inline constexpr double kMinInvertibleSpeed = 0.05;

TargetModelParams recover_targets(const RegimeCoefficients& rc, State state);

struct StateDummyTests {
    WaldResult delta_c;
    std::vector<WaldResult> beta_c;
    std::vector<WaldResult> gamma_c;
    std::optional<WaldResult> firm_block;
    std::optional<WaldResult> macro_block;
};

/// Wald tests that the interaction coefficients are zero: individually and
/// as firm-factor and macro-factor blocks.
StateDummyTests test_state_dummies(const RegimeCoefficients& rc);

struct AdjustmentCell {
    std::optional<RegimeCoefficients> coefficients;
    std::optional<SpeedEstimates> speeds;
    std::optional<TargetModelParams> target_good;
    std::optional<TargetModelParams> target_bad;
    std::optional<StateDummyTests> tests;
    std::vector<std::string> notes;
    std::string error;  // non-empty when the fit failed
};

struct AdjustmentConfig {
    bool mean_engine = true;
    std::vector<double> taus;  // empty: no quantile cells
    double lambda = 0.0;
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
    CovarianceType covariance = CovarianceType::conventional;
};

struct AdjustmentReport {
    LeverageForm leverage = LeverageForm::tdr;
    Eigen::Index rows = 0;
    std::size_t firms = 0;
    double mean_years_per_firm = 0.0;
    std::optional<AdjustmentCell> mean;
    std::vector<double> taus;
    std::vector<AdjustmentCell> quantiles;  // one per tau
    std::vector<std::string> advisories;
};

/// Mean FE cell plus one panel-QR cell per tau; QR cell k bootstraps with
/// seed derive_seed(config.seed, k).
AdjustmentReport build_adjustment_report(const DesignMatrix& design, LeverageForm form, const AdjustmentConfig& config);

AdjustmentCell evaluate_cell(const DesignMatrix& design, const EngineSpec& spec);

}  // namespace capstruct
