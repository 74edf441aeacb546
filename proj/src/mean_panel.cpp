#include "capstruct/mean_panel.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>
#include <cmath>

namespace capstruct {

namespace {

struct FirmMeans {
    std::vector<Eigen::Index> counts;
    Vector y;
    Matrix X;
};

FirmMeans firm_means(const DesignMatrix& d) {
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    FirmMeans m;
    m.counts.assign(static_cast<std::size_t>(G), 0);
    m.y = Vector::Zero(G);
    m.X = Matrix::Zero(G, d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const auto g = static_cast<Eigen::Index>(d.firm_index[static_cast<std::size_t>(i)]);
        ++m.counts[static_cast<std::size_t>(g)];
        m.y(g) += d.y(i);
        m.X.row(g) += d.X.row(i);
    }
    for (Eigen::Index g = 0; g < G; ++g) {
        const double c = static_cast<double>(m.counts[static_cast<std::size_t>(g)]);
        m.y(g) /= c;
        m.X.row(g) /= c;
    }
    return m;
}

void require_rows(const DesignMatrix& d) {
    if (d.rows() == 0) throw EstimationError("design has no rows");
    if (d.y.size() != d.rows() || d.firm_index.size() != static_cast<std::size_t>(d.rows())) {
        throw EstimationError("design arrays are inconsistent");
    }
}

/// Names of columns that are linear combinations of earlier ones.
std::vector<std::string> dependent_columns(const Matrix& X, const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    std::vector<std::string> out;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) out.push_back(names[static_cast<std::size_t>(perm(k))]);
    std::sort(out.begin(), out.end());
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
}

Matrix symmetrize(const Matrix& A) { return 0.5 * (A + A.transpose()); }

/// Firm-clustered sandwich around (Z'Z)^-1 with the usual small-sample factor.
Matrix clustered_covariance(const Matrix& Z, const Vector& resid, const std::vector<std::size_t>& cluster,
                            std::size_t clusters, const Matrix& bread, Eigen::Index k) {
    Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(clusters), Z.cols());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        scores.row(static_cast<Eigen::Index>(cluster[static_cast<std::size_t>(i)])) += resid(i) * Z.row(i);
    }
    const Matrix meat = scores.transpose() * scores;
    const double G = static_cast<double>(clusters);
    const double n = static_cast<double>(Z.rows());
    const double factor = (G / std::max(G - 1.0, 1.0)) * ((n - 1.0) / std::max(n - static_cast<double>(k), 1.0));
    return symmetrize(factor * bread * meat * bread);
}

}  // namespace

std::string_view estimator_name(MeanEstimator kind) {
    switch (kind) {
        case MeanEstimator::pooled: return "pooled";
        case MeanEstimator::fixed_effects: return "fixed_effects";
        case MeanEstimator::random_effects: return "random_effects";
    }
    return "";
}

std::optional<Eigen::Index> MeanFit::index_of(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    }
    return std::nullopt;
}

Vector MeanFit::standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

MeanFit fit_pooled(const DesignMatrix& d, const MeanOptions& options) {
    require_rows(d);
    const Eigen::Index n = d.rows();
    const Eigen::Index p = d.cols();
    Matrix Z(n, p + 1);
    Z.col(0).setOnes();
    Z.rightCols(p) = d.X;
    std::vector<std::string> znames = {"const"};
    znames.insert(znames.end(), d.names.begin(), d.names.end());
    if (n <= p + 1) throw EstimationError("pooled regression is under-identified");
    const auto ls = solve_least_squares(Z, d.y);
    if (ls.rank_deficient) {
        throw EstimationError("pooled regression: collinear columns " + join(dependent_columns(Z, znames)));
    }
    const Vector resid = d.y - Z * ls.coefficients;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(n - p - 1);
    const Matrix bread = (Z.transpose() * Z).inverse();
    Matrix cov = options.covariance == CovarianceType::clustered
                     ? clustered_covariance(Z, resid, d.firm_index, d.firm_ids.size(), bread, p + 1)
                     : symmetrize(sigma2 * bread);

    MeanFit fit;
    fit.kind = MeanEstimator::pooled;
    fit.covariance_type = options.covariance;
    fit.names = d.names;
    fit.coefficients = ls.coefficients.tail(p);
    fit.covariance = cov.bottomRightCorner(p, p);
    fit.intercept = ls.coefficients(0);
    fit.intercept_se = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.residual_variance = sigma2;
    fit.n = n;
    fit.p = p;
    fit.firms = d.firm_ids.size();
    return fit;
}

MeanFit fit_fixed_effects(const DesignMatrix& d, const MeanOptions& options) {
    require_rows(d);
    const Eigen::Index n = d.rows();
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    const FirmMeans means = firm_means(d);

    Matrix Xw(n, d.cols());
    Vector yw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto g = static_cast<Eigen::Index>(d.firm_index[static_cast<std::size_t>(i)]);
        Xw.row(i) = d.X.row(i) - means.X.row(g);
        yw(i) = d.y(i) - means.y(g);
    }

    MeanFit fit;
    fit.kind = MeanEstimator::fixed_effects;
    fit.covariance_type = options.covariance;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
        const double scale = std::max(1.0, d.X.col(j).norm());
        if (Xw.col(j).norm() <= 1e-10 * scale) {
            const auto& name = d.names[static_cast<std::size_t>(j)];
            fit.dropped_columns.push_back(name);
            fit.warnings.push_back("column '" + name + "' has no within-firm variation and was dropped");
        } else {
            keep.push_back(j);
        }
    }
    const auto p = static_cast<Eigen::Index>(keep.size());
    if (p == 0) throw EstimationError("fixed effects: no regressor varies within firms");
    Matrix Xk(n, p);
    Matrix Xraw(n, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        Xk.col(k) = Xw.col(keep[static_cast<std::size_t>(k)]);
        Xraw.col(k) = d.X.col(keep[static_cast<std::size_t>(k)]);
        fit.names.push_back(d.names[static_cast<std::size_t>(keep[static_cast<std::size_t>(k)])]);
    }
    const Eigen::Index dof = n - p - G;
    if (dof <= 0) {
        throw EstimationError("fixed effects is under-identified: " + std::to_string(n) + " rows, " +
                              std::to_string(p) + " regressors, " + std::to_string(G) + " firms");
    }
    const auto ls = solve_least_squares(Xk, yw);
    if (ls.rank_deficient) {
        throw EstimationError("fixed effects: collinear columns " + join(dependent_columns(Xk, fit.names)));
    }
    const Vector& b = ls.coefficients;
    const Vector resid = yw - Xk * b;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(dof);
    const Matrix bread = (Xk.transpose() * Xk).inverse();
    if (options.covariance == CovarianceType::clustered) {
        fit.covariance = clustered_covariance(Xk, resid, d.firm_index, d.firm_ids.size(), bread, p);
    } else {
        fit.covariance = symmetrize(sigma2 * bread);
    }

    Vector alpha(G);
    for (Eigen::Index g = 0; g < G; ++g) {
        double xb = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) xb += means.X(g, keep[static_cast<std::size_t>(k)]) * b(k);
        alpha(g) = means.y(g) - xb;
    }
    fit.coefficients = b;
    fit.intercept = alpha.mean();
    fit.effects = alpha.array() - fit.intercept;
    fit.firm_ids = d.firm_ids;
    fit.residual_variance = sigma2;
    fit.n = n;
    fit.p = p;
    fit.firms = d.firm_ids.size();
    return fit;
}

MeanFit fit_random_effects(const DesignMatrix& d, const MeanOptions& options) {
    require_rows(d);
    const Eigen::Index n = d.rows();
    const Eigen::Index p = d.cols();
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    const FirmMeans means = firm_means(d);

    // Within regression for the idiosyncratic variance, on every column with
    // within variation.
    const MeanFit within = fit_fixed_effects(d);
    const double sigma2_e = within.residual_variance;
    if (!(sigma2_e > 0.0)) throw EstimationError("random effects: idiosyncratic variance estimate is not positive");

    MeanFit fit;
    fit.kind = MeanEstimator::random_effects;
    fit.covariance_type = options.covariance;
    fit.warnings = within.warnings;

    // Between regression on firm means.
    Matrix Zb(G, p + 1);
    Zb.col(0).setOnes();
    Zb.rightCols(p) = means.X;
    double sigma2_alpha = 0.0;
    const auto between = solve_least_squares(Zb, means.y);
    const Eigen::Index between_dof = G - between.rank;
    if (G >= Zb.cols() && between_dof > 0) {
        const double sigma2_b = (means.y - Zb * between.coefficients).squaredNorm() / static_cast<double>(between_dof);
        double inv_t = 0.0;
        for (auto c : means.counts) inv_t += 1.0 / static_cast<double>(c);
        inv_t /= static_cast<double>(G);
        sigma2_alpha = std::max(0.0, sigma2_b - sigma2_e * inv_t);
    } else {
        fit.warnings.push_back("between regression has no residual degrees of freedom; firm-effect variance set to 0");
    }

    std::vector<double> theta(static_cast<std::size_t>(G));
    for (Eigen::Index g = 0; g < G; ++g) {
        const double T = static_cast<double>(means.counts[static_cast<std::size_t>(g)]);
        theta[static_cast<std::size_t>(g)] = 1.0 - std::sqrt(sigma2_e / (sigma2_e + T * sigma2_alpha));
    }
    Matrix Z(n, p + 1);
    Vector ys(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto g = static_cast<Eigen::Index>(d.firm_index[static_cast<std::size_t>(i)]);
        const double th = theta[static_cast<std::size_t>(g)];
        Z(i, 0) = 1.0 - th;
        Z.row(i).tail(p) = d.X.row(i) - th * means.X.row(g);
        ys(i) = d.y(i) - th * means.y(g);
    }
    std::vector<std::string> znames = {"const"};
    znames.insert(znames.end(), d.names.begin(), d.names.end());
    const auto ls = solve_least_squares(Z, ys);
    if (ls.rank_deficient) {
        throw EstimationError("random effects: collinear columns " + join(dependent_columns(Z, znames)));
    }
    const Vector resid = ys - Z * ls.coefficients;
    const Matrix bread = (Z.transpose() * Z).inverse();
    const Matrix cov = options.covariance == CovarianceType::clustered
                           ? clustered_covariance(Z, resid, d.firm_index, d.firm_ids.size(), bread, p + 1)
                           : symmetrize(sigma2_e * bread);

    fit.names = d.names;
    fit.coefficients = ls.coefficients.tail(p);
    fit.covariance = cov.bottomRightCorner(p, p);
    fit.intercept = ls.coefficients(0);
    fit.intercept_se = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.residual_variance = sigma2_e;
    fit.sigma2_alpha = sigma2_alpha;
    fit.theta_min = *std::min_element(theta.begin(), theta.end());
    fit.theta_max = *std::max_element(theta.begin(), theta.end());
    fit.n = n;
    fit.p = p;
    fit.firms = d.firm_ids.size();
    return fit;
}

HausmanResult hausman_test(const MeanFit& fe, const MeanFit& re) {
    HausmanResult out;
    std::vector<Eigen::Index> fi, ri;
    for (std::size_t j = 0; j < fe.names.size(); ++j) {
        if (auto k = re.index_of(fe.names[j])) {
            out.names.push_back(fe.names[j]);
            fi.push_back(static_cast<Eigen::Index>(j));
            ri.push_back(*k);
        }
    }
    if (out.names.empty()) throw EstimationError("hausman test: the fits share no regressors");
    const auto k = static_cast<Eigen::Index>(out.names.size());
    Vector diff(k);
    Matrix vdiff(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        diff(a) = fe.coefficients(fi[static_cast<std::size_t>(a)]) - re.coefficients(ri[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < k; ++b) {
            vdiff(a, b) = fe.covariance(fi[static_cast<std::size_t>(a)], fi[static_cast<std::size_t>(b)]) -
                          re.covariance(ri[static_cast<std::size_t>(a)], ri[static_cast<std::size_t>(b)]);
        }
    }
    out.df = static_cast<int>(numerical_rank(vdiff));
    if (out.df == 0 || diff.isZero(0.0)) {
        out.statistic = 0.0;
        out.p_value = 1.0;
        return out;
    }
    out.statistic = std::max(0.0, static_cast<double>(diff.transpose() * pseudo_inverse(vdiff) * diff));
    out.p_value = chi_square_sf(out.statistic, out.df);
    return out;
}

WaldResult wald_test(std::span<const std::string> names, const Vector& coefficients, const Matrix& covariance,
                     std::span<const std::string> subset) {
    if (subset.empty()) throw ConfigError("wald test: empty coefficient subset");
    std::vector<Eigen::Index> idx;
    WaldResult out;
    for (const auto& s : subset) {
        const auto it = std::find(names.begin(), names.end(), s);
        if (it == names.end()) throw ConfigError("wald test: unknown coefficient '" + s + "'");
        idx.push_back(static_cast<Eigen::Index>(it - names.begin()));
        out.names.push_back(s);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Vector b(k);
    Matrix V(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        b(a) = coefficients(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index c = 0; c < k; ++c) V(a, c) = covariance(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    }
    out.df = static_cast<int>(numerical_rank(V));
    if (out.df == 0 || b.isZero(0.0)) {
        out.df = std::max(out.df, 1);
        out.statistic = 0.0;
        out.p_value = 1.0;
        return out;
    }
    const Matrix Vinv = out.df == k ? Matrix(V.ldlt().solve(Matrix::Identity(k, k))) : pseudo_inverse(V);
    out.statistic = std::max(0.0, static_cast<double>(b.transpose() * Vinv * b));
    out.p_value = chi_square_sf(out.statistic, out.df);
    return out;
}

WaldResult wald_test(const MeanFit& fit, std::span<const std::string> subset) {
    return wald_test(fit.names, fit.coefficients, fit.covariance, subset);
}

}  // namespace capstruct
