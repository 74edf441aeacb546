#include "capstruct/adjustment.hpp"

#include "capstruct/parallel.hpp"

#include <algorithm>
#include <sstream>

namespace capstruct {

namespace {

struct Layout {
    std::string lag, lag_c;
    std::vector<std::string> firm, macro;
};

Layout layout_of(const DesignMatrix& d) {
    Layout l;
    for (std::size_t j = 0; j < d.names.size(); ++j) {
        switch (d.roles[j]) {
            case ColumnRole::lag_dependent: l.lag = d.names[j]; break;
            case ColumnRole::lag_dependent_x_state: l.lag_c = d.names[j]; break;
            case ColumnRole::firm_factor: l.firm.push_back(d.names[j]); break;
            case ColumnRole::macro_factor: l.macro.push_back(d.names[j]); break;
            default: break;
        }
    }
    return l;
}

std::string interacted(const std::string& name) { return name + ":c"; }

}  // namespace

std::string_view engine_name(Engine e) { return e == Engine::mean_fe ? "mean_fe" : "panel_qr"; }
std::string_view state_name(State s) { return s == State::good ? "good" : "bad"; }

RegimeCoefficients fit_adjustment(const DesignMatrix& design, const EngineSpec& spec) {
    const auto c_col = design.column("c");
    const Layout layout = layout_of(design);
    if (!c_col || layout.lag.empty() || layout.lag_c.empty()) {
        throw ConfigError("fit_adjustment needs a design with the lagged ratio and state dummies");
    }
    const auto& c = design.X.col(*c_col);
    if (c.minCoeff() == c.maxCoeff()) throw EstimationError("state dummy has no variation");

    RegimeCoefficients rc;
    rc.source = spec.engine;
    rc.dependent = design.dependent;
    rc.firm_factors = layout.firm;
    rc.macro_factors = layout.macro;

    if (spec.engine == Engine::mean_fe) {
        MeanOptions opt;
        opt.covariance = spec.covariance;
        const MeanFit fit = fit_fixed_effects(design, opt);
        rc.names = fit.names;
        rc.coefficients = fit.coefficients;
        rc.covariance = fit.covariance;
        rc.a = fit.intercept;
        rc.warnings = fit.warnings;
    } else {
        PanelQrOptions opt;
        opt.lambda = spec.lambda;
        opt.bootstrap = spec.bootstrap;
        opt.seed = spec.seed;
        const PanelQrFit fit = fit_panel_quantile(design, spec.tau, opt);
        rc.tau = spec.tau;
        rc.lambda = spec.lambda;
        rc.names = fit.names;
        rc.coefficients = fit.coefficients;
        rc.covariance = fit.covariance;
        rc.a = fit.alphas.mean();
        rc.warnings = fit.warnings;
    }

    auto coef = [&](const std::string& name) {
        const auto it = std::find(rc.names.begin(), rc.names.end(), name);
        if (it == rc.names.end()) throw EstimationError("coefficient '" + name + "' was not estimated");
        return rc.coefficients(static_cast<Eigen::Index>(it - rc.names.begin()));
    };
    rc.a_c = coef("c");
    rc.delta = coef(layout.lag);
    rc.delta_c = coef(layout.lag_c);
    const auto K = static_cast<Eigen::Index>(layout.firm.size());
    const auto J = static_cast<Eigen::Index>(layout.macro.size());
    rc.beta.resize(K);
    rc.beta_c.resize(K);
    rc.gamma.resize(J);
    rc.gamma_c.resize(J);
    for (Eigen::Index k = 0; k < K; ++k) {
        rc.beta(k) = coef(layout.firm[static_cast<std::size_t>(k)]);
        rc.beta_c(k) = coef(interacted(layout.firm[static_cast<std::size_t>(k)]));
    }
    for (Eigen::Index j = 0; j < J; ++j) {
        rc.gamma(j) = coef(layout.macro[static_cast<std::size_t>(j)]);
        rc.gamma_c(j) = coef(interacted(layout.macro[static_cast<std::size_t>(j)]));
    }
    return rc;
}

SpeedEstimates adjustment_speeds(const RegimeCoefficients& rc) {
    return {1.0 - rc.delta, 1.0 - (rc.delta + rc.delta_c)};
}

TargetModelParams recover_targets(const RegimeCoefficients& rc, State state) {
    const SpeedEstimates speeds = adjustment_speeds(rc);
    TargetModelParams out;
    out.state = state;
    out.speed = state == State::good ? speeds.speed_good : speeds.speed_bad;
    if (!(out.speed > kMinInvertibleSpeed)) {
        std::ostringstream msg;
        msg << "adjustment speed too small to invert (" << state_name(state) << " state speed " << out.speed << ")";
        throw EstimationError(msg.str());
    }
    const bool bad = state == State::bad;
    out.a_star = (rc.a + (bad ? rc.a_c : 0.0)) / out.speed;
    out.firm_factors = rc.firm_factors;
    out.macro_factors = rc.macro_factors;
    out.beta_star = (bad ? Vector(rc.beta + rc.beta_c) : rc.beta) / out.speed;
    out.gamma_star = (bad ? Vector(rc.gamma + rc.gamma_c) : rc.gamma) / out.speed;
    return out;
}

StateDummyTests test_state_dummies(const RegimeCoefficients& rc) {
    if (rc.covariance.rows() != rc.coefficients.size() || rc.covariance.size() == 0) {
        throw EstimationError("state-dummy tests need a coefficient covariance");
    }
    std::string lag_c;
    for (const auto& n : rc.names) {
        if (n.rfind("lag_", 0) == 0 && n.size() > 2 && n.substr(n.size() - 2) == ":c") lag_c = n;
    }
    auto one = [&](const std::string& name) {
        const std::vector<std::string> s = {name};
        return wald_test(rc.names, rc.coefficients, rc.covariance, s);
    };
    StateDummyTests out;
    out.delta_c = one(lag_c);
    std::vector<std::string> firm_block, macro_block;
    for (const auto& f : rc.firm_factors) {
        out.beta_c.push_back(one(interacted(f)));
        firm_block.push_back(interacted(f));
    }
    for (const auto& m : rc.macro_factors) {
        out.gamma_c.push_back(one(interacted(m)));
        macro_block.push_back(interacted(m));
    }
    if (!firm_block.empty()) out.firm_block = wald_test(rc.names, rc.coefficients, rc.covariance, firm_block);
    if (!macro_block.empty()) out.macro_block = wald_test(rc.names, rc.coefficients, rc.covariance, macro_block);
    return out;
}

AdjustmentCell evaluate_cell(const DesignMatrix& design, const EngineSpec& spec) {
    AdjustmentCell cell;
    try {
        cell.coefficients = fit_adjustment(design, spec);
    } catch (const std::exception& e) {
        cell.error = e.what();
        return cell;
    }
    const auto& rc = *cell.coefficients;
    cell.speeds = adjustment_speeds(rc);
    for (State s : {State::good, State::bad}) {
        try {
            (s == State::good ? cell.target_good : cell.target_bad) = recover_targets(rc, s);
        } catch (const EstimationError& e) {
            cell.notes.push_back(e.what());
        }
    }
    if (rc.covariance.size() > 0) {
        cell.tests = test_state_dummies(rc);
    } else {
        cell.notes.push_back("no covariance available (bootstrap disabled); state-dummy tests skipped");
    }
    return cell;
}

AdjustmentReport build_adjustment_report(const DesignMatrix& design, LeverageForm form, const AdjustmentConfig& config) {
    AdjustmentReport report;
    report.leverage = form;
    report.rows = design.rows();
    report.firms = design.firm_ids.size();
    report.mean_years_per_firm =
        report.firms > 0 ? static_cast<double>(design.rows()) / static_cast<double>(report.firms) : 0.0;
    report.taus = config.taus;

    std::ostringstream nickell;
    nickell << "lagged dependent variable estimated with firm effects: coefficients carry an O(1/T) bias "
               "(average T = "
            << report.mean_years_per_firm << ")";
    report.advisories.push_back(nickell.str());
    if (!config.taus.empty()) {
        report.advisories.push_back(config.bootstrap > 0
                                        ? "quantile standard errors are firm-clustered bootstrap estimates"
                                        : "quantile standard errors not computed (bootstrap disabled)");
    }

    if (config.mean_engine) {
        EngineSpec spec;
        spec.engine = Engine::mean_fe;
        spec.covariance = config.covariance;
        report.mean = evaluate_cell(design, spec);
    }
    report.quantiles.resize(config.taus.size());
    parallel_for(config.taus.size(), [&](std::size_t k) {
        EngineSpec spec;
        spec.engine = Engine::panel_qr;
        spec.tau = config.taus[k];
        spec.lambda = config.lambda;
        spec.bootstrap = config.bootstrap;
        spec.seed = derive_seed(config.seed, k);
        report.quantiles[k] = evaluate_cell(design, spec);
    });
    return report;
}

}  // namespace capstruct
