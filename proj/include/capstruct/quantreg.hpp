#pragma once

#include "capstruct/errors.hpp"
#include "capstruct/numerics.hpp"
#include "capstruct/random.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace capstruct {

/// Weighted absolute-deviation LP
///
///   min  sum_i pos_weight_i * max(r_i, 0) + neg_weight_i * max(-r_i, 0),
///   r_i = y_i - group_coef_i * alpha[group_i] - x_i' beta,
///
/// where each row touches at most one "group" column (a firm intercept or a
/// penalty pseudo-row). Group columns are unit-sparse, so the normal
/// equations are reduced to a dense p x p Schur complement per iteration.
struct CheckLossProblem {
    Matrix X;                      // n x p dense part (p may be 0)
    Vector y;                      // n
    std::vector<long> group;       // n; -1 when the row has no group column
    Vector group_coef;             // n
    Eigen::Index groups = 0;
    Vector pos_weight;             // weight on positive residuals (tau for data rows)
    Vector neg_weight;             // weight on negative residuals (1 - tau for data rows)

    Eigen::Index rows() const { return y.size(); }
    Eigen::Index unknowns() const { return groups + X.cols(); }

    /// Ordinary quantile-regression problem on a dense design.
    static CheckLossProblem dense(const Matrix& X, const Vector& y, double tau);
};

struct SolverOptions {
    int max_iterations = 200;
    double gap_tolerance = 1e-8;  // relative: gap <= tol * (1 + |objective|)
    bool polish_vertex = true;
};

struct LpSolution {
    Vector alpha;      // group coefficients
    Vector beta;       // dense coefficients
    Vector residuals;
    double objective = 0.0;
    double gap = 0.0;
    int iterations = 0;
    bool vertex = false;  // true when the interior iterate was moved to a basic solution
};

/// Thrown when the interior-point iteration cap is reached before the
/// duality gap closes. Carries the iterate with the smallest gap.
class NonConvergenceError : public EstimationError {
public:
    NonConvergenceError(const std::string& what, LpSolution best)
        : EstimationError(what), best_(std::move(best)) {}
    const LpSolution& best() const { return best_; }

private:
    LpSolution best_;
};

/// Primal-dual (Mehrotra predictor-corrector) interior point on the dual of
/// the check-loss LP, optionally followed by a move to a nearby basic
/// solution when that does not worsen the objective.
LpSolution solve_check_loss(const CheckLossProblem& problem, const SolverOptions& options = {});

struct OptimalityCertificate {
    std::size_t negative = 0;  // residuals < -tol
    std::size_t zero = 0;      // |residual| <= tol
    double tolerance = 0.0;
    bool pass = false;
};

struct QrFit {
    double tau = 0.5;
    Vector coefficients;
    double objective = 0.0;
    Vector residuals;
    int iterations = 0;
    double gap = 0.0;
    OptimalityCertificate certificate;
};

/// Quantile regression of y on X (no implicit intercept column).
QrFit fit_quantile(const Matrix& X, const Vector& y, double tau, const SolverOptions& options = {});

/// Counting condition N- <= n*tau <= N- + N0, with tol = 1e-7 * max(1, max|y|).
OptimalityCertificate certify_optimality(std::span<const double> residuals, double tau, double y_scale);
OptimalityCertificate certify_optimality(const QrFit& fit, const Vector& y);

struct BruteForceResult {
    double objective = 0.0;
    Vector coefficients;
};

/// Reference optimum by enumerating every interpolating p-subset. Guarded to
/// n <= 14 and p <= 3.
BruteForceResult brute_force_qr(const Matrix& X, const Vector& y, double tau);

struct BootstrapResult {
    Matrix covariance;
    Vector standard_errors;
    std::size_t replicates = 0;
    std::size_t draws = 0;
};

/// Pairs bootstrap (whole clusters when ids are given). Replicate r uses the
/// child seed derive_seed(seed, r); failed replicates are redrawn up to 10*B
/// draws in total.
BootstrapResult bootstrap_covariance(const Matrix& X, const Vector& y, double tau, std::size_t replicates,
                                     const RandomSource& rng,
                                     std::optional<std::span<const std::size_t>> clusters = std::nullopt);

/// Shared bootstrap driver: `fit_draw(seed)` returns coefficients or throws.
template <typename FitDraw>
BootstrapResult bootstrap_replicates(std::size_t replicates, std::uint64_t seed, Eigen::Index p, FitDraw&& fit_draw);

/// Column indices that are linear combinations of the others (empty when X
/// has full column rank).
std::vector<Eigen::Index> dependent_columns(const Matrix& X);

}  // namespace capstruct

#include "capstruct/detail/bootstrap_impl.hpp"
