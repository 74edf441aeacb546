#include "capstruct/numerics.hpp"

#include "capstruct/errors.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace capstruct {

namespace {

void require_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ConfigError("quantile level must lie in (0, 1), got " + std::to_string(tau));
    }
}

}  // namespace

double check_loss(double tau, double u) {
    require_tau(tau);
    return u < 0.0 ? (tau - 1.0) * u : tau * u;
}

double total_check_loss(double tau, std::span<const double> residuals) {
    require_tau(tau);
    double total = 0.0;
    for (double u : residuals) total += u < 0.0 ? (tau - 1.0) * u : tau * u;
    return total;
}

double empirical_quantile(std::span<const double> values, double tau) {
    require_tau(tau);
    if (values.empty()) throw DataError("empirical_quantile: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    const auto n = static_cast<double>(sorted.size());
    // n * tau is computed in floating point; 10 * 0.3 must not round up to 4.
    auto k = static_cast<std::size_t>(std::ceil(n * tau - 1e-9));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    return sorted[k - 1];
}

LeastSquaresResult solve_least_squares(const Matrix& X, const Vector& y) {
    if (X.rows() < X.cols()) {
        throw EstimationError("least squares needs at least as many rows (" + std::to_string(X.rows()) +
                              ") as columns (" + std::to_string(X.cols()) + ")");
    }
    if (X.rows() != y.size()) throw EstimationError("least squares: X and y row counts differ");
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
    cod.setThreshold(1e-10);
    LeastSquaresResult out;
    out.coefficients = cod.solve(y);
    out.rank = cod.rank();
    out.rank_deficient = out.rank < X.cols();
    return out;
}

Matrix pseudo_inverse(const Matrix& A, double rtol) {
    if (A.size() == 0) return Matrix(A.cols(), A.rows());
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = rtol * (s.size() > 0 ? s(0) : 0.0);
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::Index numerical_rank(const Matrix& A, double rtol) {
    if (A.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(A);
    const Vector& s = svd.singularValues();
    const double cutoff = rtol * s(0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) ++r;
    }
    return r;
}

double chi_square_sf(double x, int df) {
    if (df < 1) throw ConfigError("chi-square degrees of freedom must be >= 1");
    if (!(x >= 0.0)) throw ConfigError("chi-square statistic must be nonnegative");
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double student_t_quantile(double dof, double p) {
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, p);
}

}  // namespace capstruct
