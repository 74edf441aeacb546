#pragma once

#include "capstruct/features.hpp"
#include "capstruct/quantreg.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capstruct {

/// Fixed-effects quantile fit: one intercept per firm, no global constant.
struct PanelQrFit {
    double tau = 0.5;
    double lambda = 0.0;
    std::vector<std::string> names;
    Vector coefficients;
    std::vector<std::string> firm_ids;
    Vector alphas;
    double objective = 0.0;  // check loss + lambda * sum |alpha_i|
    int iterations = 0;
    double gap = 0.0;
    Eigen::Index n = 0;

    // Firm-clustered bootstrap; empty when no replicates were requested.
    Matrix covariance;
    Vector standard_errors;
    std::size_t bootstrap_replicates = 0;

    std::optional<OptimalityCertificate> certificate;  // lambda == 0 only
    std::vector<std::string> dropped_firms;
    std::vector<std::string> warnings;

    std::optional<Eigen::Index> index_of(std::string_view name) const;
};

struct PanelQrOptions {
    double lambda = 0.0;
    std::size_t bootstrap = 0;  // replicates; 0 disables
    std::uint64_t seed = 0;
    SolverOptions solver{};
};

PanelQrFit fit_panel_quantile(const DesignMatrix& design, double tau, const PanelQrOptions& options = {});

struct TauCell {
    double tau = 0.0;
    std::optional<PanelQrFit> fit;
    std::string error;  // set when fit is empty
};

using PanelQrFitter = std::function<PanelQrFit(const DesignMatrix&, double, const PanelQrOptions&)>;

/// Independent fits over an increasing grid. Failures are recorded per tau;
/// the tau at grid position k bootstraps with seed derive_seed(options.seed, k).
std::vector<TauCell> fit_tau_grid(const DesignMatrix& design, std::span<const double> taus,
                                  const PanelQrOptions& options = {}, const PanelQrFitter& fitter = fit_panel_quantile);

std::vector<double> decile_grid();

/// alpha_i(tau) + covariates' * coefficients, covariates in design column order.
double predict_conditional_quantile(const PanelQrFit& fit, std::string_view firm_id,
                                    std::span<const double> covariates);

/// Conditional quantile at the design mean: the row-weighted mean firm
/// intercept plus the mean covariate row times the slopes. Nondecreasing in
/// tau (the firm dummies sum to a constant column).
double predict_at_design_mean(const PanelQrFit& fit, const DesignMatrix& design);

}  // namespace capstruct
