#pragma once

#include "capstruct/features.hpp"
#include "capstruct/numerics.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace capstruct {

enum class MeanEstimator { pooled, fixed_effects, random_effects };
std::string_view estimator_name(MeanEstimator kind);

enum class CovarianceType { conventional, clustered };

/// A conditional-mean panel fit. `coefficients`/`covariance` cover the design
/// columns only; the constant is carried separately in `intercept`.
struct MeanFit {
    MeanEstimator kind = MeanEstimator::pooled;
    CovarianceType covariance_type = CovarianceType::conventional;
    std::vector<std::string> names;
    Vector coefficients;
    Matrix covariance;
    double intercept = 0.0;
    double intercept_se = 0.0;
    double residual_variance = 0.0;

    // Fixed effects: per-firm effects normalised to sum to zero, so that
    // firm i's intercept is intercept + effects[i].
    std::vector<std::string> firm_ids;
    Vector effects;

    // Random effects: variance components and the quasi-demeaning range.
    double sigma2_alpha = 0.0;
    double theta_min = 0.0;
    double theta_max = 0.0;

    Eigen::Index n = 0;
    Eigen::Index p = 0;
    std::size_t firms = 0;
    std::vector<std::string> dropped_columns;
    std::vector<std::string> warnings;

    std::optional<Eigen::Index> index_of(std::string_view name) const;
    Vector standard_errors() const;
};

struct MeanOptions {
    CovarianceType covariance = CovarianceType::conventional;
};

MeanFit fit_pooled(const DesignMatrix& design, const MeanOptions& options = {});

/// Within estimator. Columns with no within-firm variation are dropped with
/// a warning naming them.
MeanFit fit_fixed_effects(const DesignMatrix& design, const MeanOptions& options = {});

/// Feasible GLS with Swamy-Arora variance components.
MeanFit fit_random_effects(const DesignMatrix& design, const MeanOptions& options = {});

struct HausmanResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    std::vector<std::string> names;  // common regressors tested
};

/// Contrast of fixed- and random-effects estimates on their common regressors,
/// using a pseudo-inverse of the covariance difference.
HausmanResult hausman_test(const MeanFit& fe, const MeanFit& re);

struct WaldResult {
    std::vector<std::string> names;
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
};

/// H0: the named coefficients are jointly zero.
WaldResult wald_test(std::span<const std::string> names, const Vector& coefficients, const Matrix& covariance,
                     std::span<const std::string> subset);
WaldResult wald_test(const MeanFit& fit, std::span<const std::string> subset);

}  // namespace capstruct
