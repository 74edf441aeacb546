#pragma once

#include "capstruct/adjustment.hpp"
#include "capstruct/features.hpp"
#include "capstruct/panel_store.hpp"
#include "capstruct/random.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace capstruct {

enum class ErrorDistribution { normal, heavy_tailed };

/// Ground truth for the partial-adjustment data generating process
///
///   DR*_it = a* + a*_i + beta* X_{i,t-1} + gamma* M_{t-1}
///   DR_it  = DR_{i,t-1} + speed_t (DR*_it - DR_{i,t-1}) + e_it
///
/// with speed_t = speed in growth years and speed + bad_state_shift in
/// recession years. X and M are the firm and macro factors computed from the
/// simulated balance sheets and macro series.
struct DgpConfig {
    std::size_t firms = 100;
    std::size_t years = 20;
    int start_year = 1980;
    double speed = 0.4;
    double bad_state_shift = 0.0;
    double a_star = 0.2;
    std::map<std::string, double> beta_star = {{"pr", -0.4}, {"as", 0.2}, {"size", 0.02}};
    std::map<std::string, double> gamma_star = {{"cred", 0.3}};
    double sigma_alpha = 0.05;
    double rho = 0.0;  // correlation of firm effects with firm covariate means
    double sigma_eps = 0.02;
    ErrorDistribution errors = ErrorDistribution::normal;
    double error_quantile = 0.5;  // heavy-tailed errors are centred to have this quantile at 0
    double persistence = 0.5;     // AR(1) coefficient of covariate drivers
    double ltdr_share = 0.6;      // long-term share of total debt
    std::vector<int> recession_years;           // explicit pattern when non-empty
    double switch_probability = 0.2;            // Markov chain otherwise: P(growth -> recession)
    double recovery_probability = 0.6;          // P(recession -> growth)
    std::uint64_t seed = 1;

    /// Throws ConfigError on invalid settings.
    void validate() const;
};

struct SimulatedPanel {
    PanelDataset dataset;  // merged with its macro series
    std::vector<int> recession;           // per macro year (0/1)
    std::vector<double> target;           // DR* per dataset record
    std::vector<double> debt_ratio;       // simulated total debt ratio per record
    std::vector<double> firm_effects;     // a*_i per firm, in dataset firm order
    SpeedEstimates true_speeds;

    /// Design built through the features module (regressors are exactly the
    /// factors the DGP used).
    DesignMatrix design(LeverageForm form, const DesignOptions& options = {}) const;
};

SimulatedPanel simulate_panel(const DgpConfig& cfg);

SpeedEstimates true_speeds(const DgpConfig& cfg);

/// Location-shift panel y_it = alpha_i + beta x_it + e_it with iid errors.
struct LocationShiftConfig {
    std::size_t firms = 50;
    std::size_t years = 10;
    double beta = 0.5;
    double sigma_alpha = 1.0;
    double sigma_eps = 0.5;
    ErrorDistribution errors = ErrorDistribution::normal;
    std::uint64_t seed = 1;
};

DesignMatrix simulate_location_shift(const LocationShiftConfig& cfg);

}  // namespace capstruct
