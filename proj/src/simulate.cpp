#include "capstruct/simulate.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace capstruct {

namespace {

constexpr std::uint64_t kMacroStream = 0xA11CE;

/// Stationary AR(1) with unit variance.
class Ar1 {
public:
    Ar1(double phi, RandomSource& rng) : phi_(phi), rng_(rng), state_(rng.normal()) {}
    double next() {
        const double v = state_;
        state_ = phi_ * state_ + std::sqrt(1.0 - phi_ * phi_) * rng_.normal();
        return v;
    }

private:
    double phi_;
    RandomSource& rng_;
    double state_;
};

double draw_error(const DgpConfig& cfg, RandomSource& rng, double t_offset) {
    if (cfg.sigma_eps == 0.0) return 0.0;
    if (cfg.errors == ErrorDistribution::normal) return cfg.sigma_eps * rng.normal();
    return cfg.sigma_eps * (rng.student_t(3.0) - t_offset);
}

std::size_t factor_index(const std::string& name) {
    const auto v = variable_from_name(name);
    const auto it = v ? std::find(kFirmFactors.begin(), kFirmFactors.end(), *v) : kFirmFactors.end();
    if (it == kFirmFactors.end()) throw ConfigError("unknown firm factor '" + name + "' in beta_star");
    return static_cast<std::size_t>(it - kFirmFactors.begin());
}

double macro_value(const MacroFactors& m, Variable v) {
    switch (v) {
        case Variable::cred: return m.cred.value_or(0.0);
        case Variable::infl: return m.infl.value_or(0.0);
        default: return m.intr.value_or(0.0);
    }
}

}  // namespace

void DgpConfig::validate() const {
    if (firms < 2) throw ConfigError("dgp: need at least 2 firms");
    if (years < 3) throw ConfigError("dgp: need at least 3 years");
    if (!(speed > 0.0 && speed <= 1.0)) throw ConfigError("dgp: speed must lie in (0, 1]");
    const double bad = speed + bad_state_shift;
    if (!(bad > 0.0 && bad <= 1.0)) throw ConfigError("dgp: bad-state speed must lie in (0, 1]");
    if (sigma_alpha < 0.0 || sigma_eps < 0.0) throw ConfigError("dgp: standard deviations must be nonnegative");
    if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("dgp: rho must lie in [-1, 1]");
    if (!(persistence > -1.0 && persistence < 1.0)) throw ConfigError("dgp: persistence must lie in (-1, 1)");
    if (!(error_quantile > 0.0 && error_quantile < 1.0)) throw ConfigError("dgp: error_quantile must lie in (0, 1)");
    if (!(switch_probability >= 0.0 && switch_probability <= 1.0) ||
        !(recovery_probability >= 0.0 && recovery_probability <= 1.0)) {
        throw ConfigError("dgp: switching probabilities must lie in [0, 1]");
    }
    for (const auto& [name, value] : beta_star) factor_index(name);
    for (const auto& [name, value] : gamma_star) {
        const auto v = variable_from_name(name);
        if (!v || std::find(kMacroFactors.begin(), kMacroFactors.end(), *v) == kMacroFactors.end()) {
            throw ConfigError("unknown macro factor '" + name + "' in gamma_star");
        }
    }
}

SpeedEstimates true_speeds(const DgpConfig& cfg) { return {cfg.speed, cfg.speed + cfg.bad_state_shift}; }

DesignMatrix SimulatedPanel::design(LeverageForm form, const DesignOptions& options) const {
    return build_design(derive_rows(dataset), form, options);
}

SimulatedPanel simulate_panel(const DgpConfig& cfg) {
    cfg.validate();
    const RandomSource root(cfg.seed);
    const auto T = cfg.years;
    const double t_offset =
        cfg.errors == ErrorDistribution::heavy_tailed ? student_t_quantile(3.0, cfg.error_quantile) : 0.0;

    // Macro series and regimes.
    SimulatedPanel out;
    std::vector<MacroYearRecord> macro(T);
    {
        RandomSource rng = root.child(kMacroStream);
        const std::set<int> explicit_years(cfg.recession_years.begin(), cfg.recession_years.end());
        int state = 0;
        double credit = 100.0;
        for (std::size_t t = 0; t < T; ++t) {
            const int year = cfg.start_year + static_cast<int>(t);
            if (!explicit_years.empty()) {
                state = explicit_years.count(year) ? 1 : 0;
            } else if (t > 0) {
                const double u = rng.uniform();
                state = state == 0 ? (u < cfg.switch_probability ? 1 : 0) : (u < cfg.recovery_probability ? 0 : 1);
            }
            out.recession.push_back(state);
            auto& m = macro[t];
            m.year = year;
            m.set(MacroField::gdp_growth, state ? -0.5 - 2.0 * rng.uniform() : 0.5 + 3.0 * rng.uniform());
            credit *= 1.0 + 0.05 - 0.04 * state + 0.02 * rng.normal();
            m.set(MacroField::credit_supply, credit);
            m.set(MacroField::inflation, 2.5 + rng.normal());
            m.set(MacroField::lending_rate, 5.0 + 1.5 * rng.normal());
        }
    }
    const auto macro_factors = compute_macro_factors(macro);

    std::array<double, kFirmFactors.size()> beta{};
    for (const auto& [name, value] : cfg.beta_star) beta[factor_index(name)] = value;
    std::array<double, kMacroFactors.size()> gamma{};
    for (const auto& [name, value] : cfg.gamma_star) {
        const auto v = *variable_from_name(name);
        gamma[static_cast<std::size_t>(std::find(kMacroFactors.begin(), kMacroFactors.end(), v) - kMacroFactors.begin())] = value;
    }
    auto macro_term = [&](std::size_t t) {
        double s = 0.0;
        for (std::size_t j = 0; j < kMacroFactors.size(); ++j) s += gamma[j] * macro_value(macro_factors[t], kMacroFactors[j]);
        return s;
    };
    double macro_mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) macro_mean += macro_term(t);
    macro_mean /= static_cast<double>(T);

    std::vector<FirmYearRecord> records;
    records.reserve(cfg.firms * T);
    // Firm ids are zero-padded so lexical order equals generation order.
    const int width = static_cast<int>(std::to_string(cfg.firms).size());
    for (std::size_t i = 0; i < cfg.firms; ++i) {
        RandomSource rng = root.child(i);
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double effect = cfg.sigma_alpha * z1;
        const double m = cfg.rho * z1 + std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho)) * z2;
        out.firm_effects.push_back(effect);

        std::string id = std::to_string(i + 1);
        id = "F" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;

        Ar1 e_assets(cfg.persistence, rng), e_sales(cfg.persistence, rng), e_pr(cfg.persistence, rng),
            e_ndts(cfg.persistence, rng), e_cash(cfg.persistence, rng), e_as(cfg.persistence, rng),
            e_rec(cfg.persistence, rng), e_pay(cfg.persistence, rng), e_fin(cfg.persistence, rng);
        std::vector<FirmYearRecord> history(T);
        for (std::size_t t = 0; t < T; ++t) {
            auto& r = history[t];
            r.firm_id = id;
            r.year = cfg.start_year + static_cast<int>(t);
            const double assets = 1000.0 * std::exp(0.5 * m + 0.3 * e_assets.next());
            const double sales = assets * std::exp(-0.2 + 0.2 * m + 0.15 * e_sales.next());
            r.set(Field::total_assets, assets);
            r.set(Field::sales, sales);
            r.set(Field::ebit, (0.08 + 0.03 * m + 0.04 * e_pr.next()) * assets);
            r.set(Field::depreciation, (0.04 + 0.01 * m + 0.01 * e_ndts.next()) * assets);
            r.set(Field::cash, (0.10 + 0.03 * m + 0.03 * e_cash.next()) * assets);
            r.set(Field::tangible_assets, (0.30 + 0.08 * m + 0.08 * e_as.next()) * assets);
            r.set(Field::trade_receivables, (0.15 + 0.03 * e_rec.next()) * sales);
            r.set(Field::trade_payables, (0.10 + 0.02 * e_pay.next()) * sales);
            r.set(Field::financial_expenses, (0.02 + 0.005 * m + 0.005 * e_fin.next()) * sales);
        }

        // Target path; undefined lagged factors fall back to the firm's mean.
        const auto factors = compute_firm_factors(history);
        std::array<double, kFirmFactors.size()> mean{};
        std::array<double, kFirmFactors.size()> count{};
        for (const auto& f : factors) {
            for (std::size_t k = 0; k < f.values.size(); ++k) {
                if (f.values[k]) {
                    mean[k] += *f.values[k];
                    count[k] += 1.0;
                }
            }
        }
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = count[k] > 0.0 ? mean[k] / count[k] : 0.0;
        auto firm_term = [&](std::size_t t, bool stationary) {
            double s = 0.0;
            for (std::size_t k = 0; k < beta.size(); ++k) {
                const double x = stationary ? mean[k] : factors[t].values[k].value_or(mean[k]);
                s += beta[k] * x;
            }
            return s;
        };

        double dr = cfg.a_star + effect + firm_term(0, true) + macro_mean;
        for (std::size_t t = 0; t < T; ++t) {
            const double target =
                t == 0 ? dr : cfg.a_star + effect + firm_term(t - 1, false) + macro_term(t - 1);
            if (t > 0) {
                const double speed = out.recession[t] ? cfg.speed + cfg.bad_state_shift : cfg.speed;
                dr = dr + speed * (target - dr) + draw_error(cfg, rng, t_offset);
            }
            auto& r = history[t];
            const double assets = *r.get(Field::total_assets);
            r.set(Field::long_term_debt, cfg.ltdr_share * dr * assets);
            r.set(Field::short_term_debt, (1.0 - cfg.ltdr_share) * dr * assets);
            out.target.push_back(target);
            out.debt_ratio.push_back(dr);
            records.push_back(std::move(r));
        }
    }
    out.dataset = PanelDataset(std::move(records), std::move(macro));
    out.true_speeds = true_speeds(cfg);
    return out;
}

DesignMatrix simulate_location_shift(const LocationShiftConfig& cfg) {
    if (cfg.firms < 2 || cfg.years < 2) throw ConfigError("location-shift panel needs >= 2 firms and >= 2 years");
    const RandomSource root(cfg.seed);
    DesignMatrix d;
    d.dependent = "y";
    d.names = {"x"};
    d.roles = {ColumnRole::firm_factor};
    const auto n = static_cast<Eigen::Index>(cfg.firms * cfg.years);
    d.y.resize(n);
    d.X.resize(n, 1);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < cfg.firms; ++i) {
        RandomSource rng = root.child(i);
        const double alpha = cfg.sigma_alpha * rng.normal();
        d.firm_ids.push_back("F" + std::to_string(i + 1));
        for (std::size_t t = 0; t < cfg.years; ++t, ++row) {
            const double x = rng.normal(0.0, 1.0) + 0.5 * alpha;
            const double e = cfg.errors == ErrorDistribution::normal ? rng.normal() : rng.student_t(3.0);
            d.X(row, 0) = x;
            d.y(row) = alpha + cfg.beta * x + cfg.sigma_eps * e;
            d.firm_index.push_back(i);
            d.years.push_back(static_cast<int>(t + 1));
        }
    }
    return d;
}

}  // namespace capstruct
