#include "capstruct/panel_quantreg.hpp"

#include "capstruct/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace capstruct {

namespace {

CheckLossProblem panel_problem(const DesignMatrix& d, double tau, double lambda) {
    const Eigen::Index n = d.rows();
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    const Eigen::Index extra = lambda > 0.0 ? G : 0;
    CheckLossProblem pr;
    pr.groups = G;
    pr.X = Matrix::Zero(n + extra, d.cols());
    pr.X.topRows(n) = d.X;
    pr.y = Vector::Zero(n + extra);
    pr.y.head(n) = d.y;
    pr.group.resize(static_cast<std::size_t>(n + extra));
    pr.group_coef = Vector::Ones(n + extra);
    pr.pos_weight = Vector::Constant(n + extra, tau);
    pr.neg_weight = Vector::Constant(n + extra, 1.0 - tau);
    for (Eigen::Index i = 0; i < n; ++i) pr.group[static_cast<std::size_t>(i)] = static_cast<long>(d.firm_index[static_cast<std::size_t>(i)]);
    // Penalty pseudo-rows: residual -lambda * alpha_g with unit weight on both signs.
    for (Eigen::Index g = 0; g < extra; ++g) {
        pr.group[static_cast<std::size_t>(n + g)] = static_cast<long>(g);
        pr.group_coef(n + g) = lambda;
        pr.pos_weight(n + g) = 1.0;
        pr.neg_weight(n + g) = 1.0;
    }
    return pr;
}

Matrix within_demeaned(const DesignMatrix& d) {
    const auto G = d.firm_ids.size();
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(G), d.cols());
    std::vector<double> counts(G, 0.0);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const auto g = d.firm_index[static_cast<std::size_t>(i)];
        sums.row(static_cast<Eigen::Index>(g)) += d.X.row(i);
        counts[g] += 1.0;
    }
    Matrix out(d.rows(), d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const auto g = d.firm_index[static_cast<std::size_t>(i)];
        out.row(i) = d.X.row(i) - sums.row(static_cast<Eigen::Index>(g)) / counts[g];
    }
    return out;
}

/// Resamples whole firms with replacement; repeated firms become distinct.
DesignMatrix resample_firms(const DesignMatrix& d, const std::vector<std::vector<std::size_t>>& members,
                            RandomSource& rng) {
    DesignMatrix out;
    out.dependent = d.dependent;
    out.names = d.names;
    out.roles = d.roles;
    std::vector<std::size_t> rows;
    std::vector<std::size_t> firm_of_row;
    for (std::size_t k = 0; k < members.size(); ++k) {
        const std::size_t g = rng.index(members.size());
        for (std::size_t r : members[g]) {
            rows.push_back(r);
            firm_of_row.push_back(k);
        }
        out.firm_ids.push_back(d.firm_ids[g] + "#" + std::to_string(k));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.y.resize(n);
    out.X.resize(n, d.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.y(i) = d.y(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
        out.X.row(i) = d.X.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
        out.years.push_back(d.years[rows[static_cast<std::size_t>(i)]]);
    }
    out.firm_index = std::move(firm_of_row);
    return out;
}

}  // namespace

std::optional<Eigen::Index> PanelQrFit::index_of(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    }
    return std::nullopt;
}

PanelQrFit fit_panel_quantile(const DesignMatrix& design, double tau, const PanelQrOptions& options) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
    if (!(options.lambda >= 0.0)) throw ConfigError("penalty weight lambda must be nonnegative");

    PanelQrFit fit;
    fit.tau = tau;
    fit.lambda = options.lambda;
    fit.names = design.names;

    // Firms with a single row cannot separate effect from residual.
    std::vector<std::size_t> counts(design.firm_ids.size(), 0);
    for (auto g : design.firm_index) ++counts[g];
    std::vector<std::size_t> keep_rows;
    for (std::size_t g = 0; g < counts.size(); ++g) {
        if (counts[g] < 2) {
            fit.dropped_firms.push_back(design.firm_ids[g]);
            fit.warnings.push_back("firm '" + design.firm_ids[g] + "' has a single row and was dropped");
        }
    }
    for (std::size_t i = 0; i < design.firm_index.size(); ++i) {
        if (counts[design.firm_index[i]] >= 2) keep_rows.push_back(i);
    }
    const DesignMatrix d = fit.dropped_firms.empty() ? design : design.select_rows(keep_rows);
    if (d.rows() == 0) throw EstimationError("panel quantile regression: no firm has two or more rows");

    if (const auto dep = dependent_columns(within_demeaned(d)); !dep.empty()) {
        std::string names;
        for (auto j : dep) names += (names.empty() ? "" : ", ") + d.names[static_cast<std::size_t>(j)];
        throw EstimationError("panel quantile regression: columns collinear with the firm effects: " + names);
    }

    const auto sol = solve_check_loss(panel_problem(d, tau, options.lambda), options.solver);
    fit.coefficients = sol.beta;
    fit.alphas = sol.alpha;
    fit.firm_ids = d.firm_ids;
    fit.objective = sol.objective;
    fit.iterations = sol.iterations;
    fit.gap = sol.gap;
    fit.n = d.rows();
    if (options.lambda == 0.0) {
        const double scale = d.y.cwiseAbs().maxCoeff();
        fit.certificate = certify_optimality(
            std::span<const double>(sol.residuals.data(), static_cast<std::size_t>(d.rows())), tau, scale);
    }

    if (options.bootstrap > 0) {
        std::vector<std::vector<std::size_t>> members(d.firm_ids.size());
        for (std::size_t i = 0; i < d.firm_index.size(); ++i) members[d.firm_index[i]].push_back(i);
        PanelQrOptions inner = options;
        inner.bootstrap = 0;
        const auto boot = bootstrap_replicates(options.bootstrap, options.seed, d.cols(), [&](std::uint64_t seed) {
            RandomSource rng(seed);
            const DesignMatrix sample = resample_firms(d, members, rng);
            return fit_panel_quantile(sample, tau, inner).coefficients;
        });
        fit.covariance = boot.covariance;
        fit.standard_errors = boot.standard_errors;
        fit.bootstrap_replicates = boot.replicates;
    }
    return fit;
}

std::vector<TauCell> fit_tau_grid(const DesignMatrix& design, std::span<const double> taus,
                                  const PanelQrOptions& options, const PanelQrFitter& fitter) {
    if (taus.empty()) throw ConfigError("tau grid is empty");
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (!(taus[k] > 0.0 && taus[k] < 1.0)) throw ConfigError("tau grid values must lie in (0, 1)");
        if (k > 0 && !(taus[k] > taus[k - 1])) throw ConfigError("tau grid must be strictly increasing");
    }
    std::vector<TauCell> cells(taus.size());
    parallel_for(taus.size(), [&](std::size_t k) {
        cells[k].tau = taus[k];
        PanelQrOptions local = options;
        local.seed = derive_seed(options.seed, k);
        try {
            cells[k].fit = fitter(design, taus[k], local);
        } catch (const std::exception& e) {
            cells[k].error = e.what();
        }
    });
    return cells;
}

std::vector<double> decile_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

double predict_conditional_quantile(const PanelQrFit& fit, std::string_view firm_id,
                                    std::span<const double> covariates) {
    const auto it = std::find(fit.firm_ids.begin(), fit.firm_ids.end(), firm_id);
    if (it == fit.firm_ids.end()) throw DataError("unknown firm '" + std::string(firm_id) + "' in panel quantile fit");
    if (covariates.size() != static_cast<std::size_t>(fit.coefficients.size())) {
        throw ConfigError("prediction needs one value per design column");
    }
    double value = fit.alphas(static_cast<Eigen::Index>(it - fit.firm_ids.begin()));
    for (std::size_t j = 0; j < covariates.size(); ++j) value += covariates[j] * fit.coefficients(static_cast<Eigen::Index>(j));
    return value;
}

double predict_at_design_mean(const PanelQrFit& fit, const DesignMatrix& design) {
    if (design.cols() != fit.coefficients.size()) throw ConfigError("prediction needs one value per design column");
    double total = 0.0;
    std::size_t used = 0;
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const auto& id = design.firm_ids[design.firm_index[static_cast<std::size_t>(i)]];
        const auto it = std::find(fit.firm_ids.begin(), fit.firm_ids.end(), id);
        if (it == fit.firm_ids.end()) continue;
        total += fit.alphas(static_cast<Eigen::Index>(it - fit.firm_ids.begin())) + design.X.row(i).dot(fit.coefficients);
        ++used;
    }
    if (used == 0) throw DataError("no design row belongs to a fitted firm");
    return total / static_cast<double>(used);
}

}  // namespace capstruct
