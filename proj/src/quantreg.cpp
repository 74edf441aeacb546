#include "capstruct/quantreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace capstruct {

namespace {

/// Xfull * (alpha, beta).
Vector apply(const CheckLossProblem& pr, const Vector& alpha, const Vector& beta) {
    Vector out = pr.X.cols() > 0 ? Vector(pr.X * beta) : Vector::Zero(pr.rows());
    for (Eigen::Index i = 0; i < pr.rows(); ++i) {
        const long g = pr.group[static_cast<std::size_t>(i)];
        if (g >= 0) out(i) += pr.group_coef(i) * alpha(g);
    }
    return out;
}

/// Xfull' * v, split into (group part, dense part).
void apply_transpose(const CheckLossProblem& pr, const Vector& v, Vector& ga, Vector& gb) {
    ga = Vector::Zero(pr.groups);
    for (Eigen::Index i = 0; i < pr.rows(); ++i) {
        const long g = pr.group[static_cast<std::size_t>(i)];
        if (g >= 0) ga(g) += pr.group_coef(i) * v(i);
    }
    gb = pr.X.cols() > 0 ? Vector(pr.X.transpose() * v) : Vector::Zero(0);
}

double objective_of(const CheckLossProblem& pr, const Vector& resid) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
        total += resid(i) >= 0.0 ? pr.pos_weight(i) * resid(i) : -pr.neg_weight(i) * resid(i);
    }
    return total;
}

/// Solves (Xfull' Q Xfull) [da; db] = [ra; rb] by eliminating the diagonal
/// group block.
class NormalSystem {
public:
    NormalSystem(const CheckLossProblem& pr, const Vector& q) : pr_(pr) {
        const Eigen::Index G = pr.groups;
        const Eigen::Index p = pr.X.cols();
        D_ = Vector::Zero(G);
        B_ = Matrix::Zero(G, p);
        for (Eigen::Index i = 0; i < pr.rows(); ++i) {
            const long g = pr.group[static_cast<std::size_t>(i)];
            if (g < 0) continue;
            const double e = pr.group_coef(i);
            D_(g) += q(i) * e * e;
            if (p > 0) B_.row(g) += (q(i) * e) * pr.X.row(i);
        }
        Matrix C = p > 0 ? Matrix(pr.X.transpose() * q.asDiagonal() * pr.X) : Matrix(0, 0);
        if (G > 0 && p > 0) {
            const Matrix DinvB = D_.cwiseInverse().asDiagonal() * B_;
            C.noalias() -= B_.transpose() * DinvB;
        }
        schur_.compute(C);
    }

    void solve(const Vector& ra, const Vector& rb, Vector& da, Vector& db) const {
        const Eigen::Index p = pr_.X.cols();
        if (p > 0) {
            Vector rhs = rb;
            if (pr_.groups > 0) rhs.noalias() -= B_.transpose() * ra.cwiseQuotient(D_);
            db = schur_.solve(rhs);
        } else {
            db = Vector::Zero(0);
        }
        if (pr_.groups > 0) {
            Vector t = ra;
            if (p > 0) t.noalias() -= B_ * db;
            da = t.cwiseQuotient(D_);
        } else {
            da = Vector::Zero(0);
        }
    }

private:
    const CheckLossProblem& pr_;
    Vector D_;
    Matrix B_;
    Eigen::LDLT<Matrix> schur_;
};

double max_step(const Vector& x, const Vector& dx) {
    double a = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
    }
    return a;
}

/// Moves to a basic solution interpolating the rows with the smallest
/// residuals, when one of full rank exists. Returns false if none is found.
bool basic_solution(const CheckLossProblem& pr, const Vector& resid, Vector& alpha, Vector& beta) {
    const Eigen::Index G = pr.groups;
    const Eigen::Index p = pr.X.cols();
    const Eigen::Index P = G + p;
    const Eigen::Index n = pr.rows();
    if (P == 0 || n < P) return false;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return std::abs(resid(a)) < std::abs(resid(b)); });

    Matrix basis(P, P);  // orthonormal columns accepted so far
    std::vector<Eigen::Index> chosen;
    chosen.reserve(static_cast<std::size_t>(P));
    Vector row(P);
    for (Eigen::Index i : order) {
        if (static_cast<Eigen::Index>(chosen.size()) == P) break;
        row.setZero();
        const long g = pr.group[static_cast<std::size_t>(i)];
        if (g >= 0) row(g) = pr.group_coef(i);
        if (p > 0) row.tail(p) = pr.X.row(i).transpose();
        const double norm = row.norm();
        if (norm == 0.0) continue;
        const auto k = static_cast<Eigen::Index>(chosen.size());
        if (k > 0) {
            const auto Q = basis.leftCols(k);
            row -= Q * (Q.transpose() * row);
            row -= Q * (Q.transpose() * row);
        }
        const double rest = row.norm();
        if (rest <= 1e-9 * norm) continue;
        basis.col(k) = row / rest;
        chosen.push_back(i);
    }
    if (static_cast<Eigen::Index>(chosen.size()) != P) return false;

    Matrix A = Matrix::Zero(P, P);
    Vector rhs(P);
    for (Eigen::Index k = 0; k < P; ++k) {
        const Eigen::Index i = chosen[static_cast<std::size_t>(k)];
        const long g = pr.group[static_cast<std::size_t>(i)];
        if (g >= 0) A(k, g) = pr.group_coef(i);
        if (p > 0) A.row(k).tail(p) = pr.X.row(i);
        rhs(k) = pr.y(i);
    }
    const Vector sol = A.partialPivLu().solve(rhs);
    if (!sol.allFinite()) return false;
    alpha = sol.head(G);
    beta = sol.tail(p);
    return true;
}

}  // namespace

CheckLossProblem CheckLossProblem::dense(const Matrix& X, const Vector& y, double tau) {
    CheckLossProblem pr;
    pr.X = X;
    pr.y = y;
    pr.group.assign(static_cast<std::size_t>(y.size()), -1);
    pr.group_coef = Vector::Zero(y.size());
    pr.pos_weight = Vector::Constant(y.size(), tau);
    pr.neg_weight = Vector::Constant(y.size(), 1.0 - tau);
    return pr;
}

LpSolution solve_check_loss(const CheckLossProblem& pr, const SolverOptions& options) {
    const Eigen::Index n = pr.rows();
    const Eigen::Index G = pr.groups;
    const Eigen::Index p = pr.X.cols();
    if (n <= G + p) throw EstimationError("check-loss problem needs more rows than unknowns");
    if (!pr.X.allFinite() || !pr.y.allFinite()) throw EstimationError("check-loss problem has non-finite data");

    const Vector& a = pr.pos_weight;
    const Vector& c = pr.neg_weight;
    const Vector s = a + c;

    // Dual box variable d in [0, s] with Xfull' d = Xfull' c; d = c is feasible.
    Vector rca, rcb;
    apply_transpose(pr, c, rca, rcb);
    Vector d = c;
    Vector t = a;

    // Start b at least squares.
    Vector alpha, beta;
    {
        Vector ya, yb;
        apply_transpose(pr, pr.y, ya, yb);
        NormalSystem ls(pr, Vector::Ones(n));
        ls.solve(ya, yb, alpha, beta);
    }
    Vector resid = pr.y - apply(pr, alpha, beta);
    const double shift = std::max(resid.cwiseAbs().mean(), 1e-8 * (1.0 + pr.y.cwiseAbs().maxCoeff()));
    Vector u = resid.cwiseMax(0.0).array() + shift;
    Vector v = (-resid).cwiseMax(0.0).array() + shift;

    LpSolution best;
    best.gap = std::numeric_limits<double>::infinity();
    const double eta = 0.99995;
    const double two_n = 2.0 * static_cast<double>(n);

    for (int iter = 0; iter <= options.max_iterations; ++iter) {
        resid = pr.y - apply(pr, alpha, beta);
        const double primal = objective_of(pr, resid);
        const double dual = pr.y.dot(d - c);
        const double gap = primal - dual;
        if (gap < best.gap) {
            best.alpha = alpha;
            best.beta = beta;
            best.residuals = resid;
            best.objective = primal;
            best.gap = gap;
            best.iterations = iter;
        }
        if (gap <= options.gap_tolerance * (1.0 + std::abs(primal))) break;
        if (iter == options.max_iterations) {
            throw NonConvergenceError("quantile regression did not converge in " + std::to_string(iter) +
                                          " iterations (duality gap " + std::to_string(best.gap) + ")",
                                      best);
        }

        Vector xda, xdb;
        apply_transpose(pr, d, xda, xdb);
        const Vector rpa = rca - xda;
        const Vector rpb = rcb - xdb;
        const Vector rd = pr.y - apply(pr, alpha, beta) - u + v;
        const double mu = (d.dot(v) + t.dot(u)) / two_n;
        const Vector q = (u.cwiseQuotient(t) + v.cwiseQuotient(d)).cwiseInverse();
        const NormalSystem system(pr, q);

        auto direction = [&](const Vector& rv, const Vector& ru, Vector& dA, Vector& dB, Vector& dd, Vector& du,
                             Vector& dv) {
            const Vector rhat = rd - ru.cwiseQuotient(t) + rv.cwiseQuotient(d);
            Vector qa, qb;
            apply_transpose(pr, q.cwiseProduct(rhat), qa, qb);
            system.solve(qa - rpa, qb - rpb, dA, dB);
            dd = q.cwiseProduct(rhat - apply(pr, dA, dB));
            dv = (rv - v.cwiseProduct(dd)).cwiseQuotient(d);
            du = (ru + u.cwiseProduct(dd)).cwiseQuotient(t);
        };

        // Predictor.
        Vector dA, dB, dd, du, dv;
        const Vector rv_aff = -d.cwiseProduct(v);
        const Vector ru_aff = -t.cwiseProduct(u);
        direction(rv_aff, ru_aff, dA, dB, dd, du, dv);
        double ap = std::min({1.0, max_step(d, dd), max_step(t, -dd)});
        double ad = std::min({1.0, max_step(u, du), max_step(v, dv)});
        const double mu_aff = ((d + ap * dd).dot(v + ad * dv) + (t - ap * dd).dot(u + ad * du)) / two_n;
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

        // Corrector.
        const Vector rv = (Vector::Constant(n, sigma * mu) - d.cwiseProduct(v) - dd.cwiseProduct(dv)).eval();
        const Vector ru = (Vector::Constant(n, sigma * mu) - t.cwiseProduct(u) + dd.cwiseProduct(du)).eval();
        direction(rv, ru, dA, dB, dd, du, dv);
        ap = std::min(1.0, eta * std::min(max_step(d, dd), max_step(t, -dd)));
        ad = std::min(1.0, eta * std::min(max_step(u, du), max_step(v, dv)));

        d += ap * dd;
        t -= ap * dd;
        alpha += ad * dA;
        beta += ad * dB;
        u += ad * du;
        v += ad * dv;
    }

    LpSolution out = best;
    if (options.polish_vertex) {
        Vector va, vb;
        if (basic_solution(pr, out.residuals, va, vb)) {
            const Vector vres = pr.y - apply(pr, va, vb);
            const double vobj = objective_of(pr, vres);
            if (vobj <= out.objective + options.gap_tolerance * (1.0 + std::abs(out.objective))) {
                out.gap += vobj - out.objective;
                out.alpha = va;
                out.beta = vb;
                out.residuals = vres;
                out.objective = vobj;
                out.vertex = true;
            }
        }
    }
    return out;
}

std::vector<Eigen::Index> dependent_columns(const Matrix& X) {
    std::vector<Eigen::Index> out;
    if (X.cols() == 0) return out;
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) out.push_back(perm(k));
    std::sort(out.begin(), out.end());
    return out;
}

QrFit fit_quantile(const Matrix& X, const Vector& y, double tau, const SolverOptions& options) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
    if (X.rows() != y.size()) throw EstimationError("quantile regression: X and y row counts differ");
    if (X.rows() <= X.cols()) throw EstimationError("quantile regression needs n > p");
    if (const auto dep = dependent_columns(X); !dep.empty()) {
        std::string names;
        for (auto j : dep) names += (names.empty() ? "" : ", ") + std::to_string(j);
        throw EstimationError("quantile regression: design is rank deficient; dependent columns: " + names);
    }
    const auto sol = solve_check_loss(CheckLossProblem::dense(X, y, tau), options);
    QrFit fit;
    fit.tau = tau;
    fit.coefficients = sol.beta;
    fit.objective = sol.objective;
    fit.residuals = sol.residuals;
    fit.iterations = sol.iterations;
    fit.gap = sol.gap;
    fit.certificate = certify_optimality(fit, y);
    return fit;
}

OptimalityCertificate certify_optimality(std::span<const double> residuals, double tau, double y_scale) {
    OptimalityCertificate cert;
    cert.tolerance = 1e-7 * std::max(1.0, y_scale);
    for (double r : residuals) {
        if (std::abs(r) <= cert.tolerance) {
            ++cert.zero;
        } else if (r < 0.0) {
            ++cert.negative;
        }
    }
    const double target = static_cast<double>(residuals.size()) * tau;
    const auto neg = static_cast<double>(cert.negative);
    const auto zero = static_cast<double>(cert.zero);
    // A little slack for n * tau computed in floating point.
    cert.pass = neg <= target + 1e-9 && target <= neg + zero + 1e-9;
    return cert;
}

OptimalityCertificate certify_optimality(const QrFit& fit, const Vector& y) {
    const double scale = y.size() > 0 ? y.cwiseAbs().maxCoeff() : 1.0;
    return certify_optimality(std::span<const double>(fit.residuals.data(), static_cast<std::size_t>(fit.residuals.size())),
                              fit.tau, scale);
}

BruteForceResult brute_force_qr(const Matrix& X, const Vector& y, double tau) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (n > 14 || p > 3 || p < 1) throw ConfigError("brute_force_qr is limited to n <= 14 and 1 <= p <= 3");
    if (y.size() != n) throw ConfigError("brute_force_qr: X and y row counts differ");
    BruteForceResult best;
    best.objective = std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
    Matrix A(p, p);
    Vector rhs(p);

    // Lexicographic enumeration of p-subsets.
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    while (true) {
        for (Eigen::Index k = 0; k < p; ++k) {
            A.row(k) = X.row(idx[static_cast<std::size_t>(k)]);
            rhs(k) = y(idx[static_cast<std::size_t>(k)]);
        }
        Eigen::FullPivLU<Matrix> lu(A);
        if (lu.rank() == p) {
            const Vector b = lu.solve(rhs);
            const Vector r = y - X * b;
            double obj = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) obj += check_loss(tau, r(i));
            if (obj < best.objective) {
                best.objective = obj;
                best.coefficients = b;
            }
        }
        Eigen::Index k = p - 1;
        while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - p + k) --k;
        if (k < 0) break;
        ++idx[static_cast<std::size_t>(k)];
        for (Eigen::Index j = k + 1; j < p; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
    if (!std::isfinite(best.objective)) throw EstimationError("brute_force_qr: every p-subset is singular");
    return best;
}

BootstrapResult bootstrap_covariance(const Matrix& X, const Vector& y, double tau, std::size_t replicates,
                                     const RandomSource& rng, std::optional<std::span<const std::size_t>> clusters) {
    const Eigen::Index n = X.rows();
    std::vector<std::vector<Eigen::Index>> members;
    if (clusters) {
        if (clusters->size() != static_cast<std::size_t>(n)) throw ConfigError("bootstrap: cluster ids must match rows");
        const std::size_t G = *std::max_element(clusters->begin(), clusters->end()) + 1;
        members.resize(G);
        for (Eigen::Index i = 0; i < n; ++i) members[(*clusters)[static_cast<std::size_t>(i)]].push_back(i);
        std::erase_if(members, [](const auto& m) { return m.empty(); });
    }
    return bootstrap_replicates(replicates, rng.seed(), X.cols(), [&](std::uint64_t seed) -> Vector {
        RandomSource draw(seed);
        std::vector<Eigen::Index> rows;
        rows.reserve(static_cast<std::size_t>(n));
        if (clusters) {
            for (std::size_t k = 0; k < members.size(); ++k) {
                const auto& m = members[draw.index(members.size())];
                rows.insert(rows.end(), m.begin(), m.end());
            }
        } else {
            for (Eigen::Index k = 0; k < n; ++k) rows.push_back(static_cast<Eigen::Index>(draw.index(static_cast<std::size_t>(n))));
        }
        Matrix Xb(static_cast<Eigen::Index>(rows.size()), X.cols());
        Vector yb(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            Xb.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
            yb(static_cast<Eigen::Index>(k)) = y(rows[k]);
        }
        return fit_quantile(Xb, yb, tau).coefficients;
    });
}

}  // namespace capstruct
