#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace capstruct {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Koenker-Bassett check function: u * (tau - 1{u < 0}).
double check_loss(double tau, double u);

/// Total check loss of a residual vector.
double total_check_loss(double tau, std::span<const double> residuals);

/// Type-1 (inverse CDF) quantile: the ceil(n * tau)-th order statistic.
double empirical_quantile(std::span<const double> values, double tau);

struct LeastSquaresResult {
    Vector coefficients;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

/// Minimum-norm least squares; flags rank deficiency instead of failing.
LeastSquaresResult solve_least_squares(const Matrix& X, const Vector& y);

/// Moore-Penrose pseudo-inverse. Singular values below rtol * sigma_max are
/// treated as zero.
Matrix pseudo_inverse(const Matrix& A, double rtol = 1e-10);

/// Numerical rank using the same cutoff as pseudo_inverse.
Eigen::Index numerical_rank(const Matrix& A, double rtol = 1e-10);

/// Upper tail probability of a chi-square distribution with df degrees of
/// freedom.
double chi_square_sf(double x, int df);

/// Student-t quantile, used to centre heavy-tailed simulation errors.
double student_t_quantile(double dof, double p);

}  // namespace capstruct
