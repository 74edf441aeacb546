#include "capstruct/features.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace capstruct {

namespace {

constexpr std::array<std::string_view, kVariableCount> kVariableNames = {
    "tdr", "ltdr", "stdr", "size", "gr", "pr", "ndts", "risk",
    "ntcs", "cashta", "finexp", "as", "cred", "infl", "intr",
};

Cell ratio(Cell num, Cell den) {
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
}

Cell positive_ratio(Cell num, Cell den) {
    if (!den || !(*den > 0.0)) return std::nullopt;
    return ratio(num, den);
}

std::size_t factor_slot(Variable v) {
    const auto it = std::find(kFirmFactors.begin(), kFirmFactors.end(), v);
    return static_cast<std::size_t>(it - kFirmFactors.begin());
}

}  // namespace

std::string_view variable_name(Variable v) { return kVariableNames[static_cast<std::size_t>(v)]; }

std::optional<Variable> variable_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kVariableCount; ++i) {
        if (kVariableNames[i] == name) return static_cast<Variable>(i);
    }
    return std::nullopt;
}

std::string_view leverage_name(LeverageForm form) {
    switch (form) {
        case LeverageForm::tdr: return "tdr";
        case LeverageForm::ltdr: return "ltdr";
        case LeverageForm::stdr: return "stdr";
    }
    return "";
}

LeverageForm parse_leverage(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "tdr") return LeverageForm::tdr;
    if (lower == "ltdr") return LeverageForm::ltdr;
    if (lower == "stdr") return LeverageForm::stdr;
    throw ConfigError("unknown leverage form '" + std::string(name) + "' (expected tdr, ltdr or stdr)");
}

Variable leverage_variable(LeverageForm form) {
    switch (form) {
        case LeverageForm::tdr: return Variable::tdr;
        case LeverageForm::ltdr: return Variable::ltdr;
        case LeverageForm::stdr: return Variable::stdr;
    }
    return Variable::tdr;
}

LeverageRatios compute_leverage_ratios(const FirmYearRecord& record) {
    const Cell assets = record.get(Field::total_assets);
    const Cell st = record.get(Field::short_term_debt);
    const Cell lt = record.get(Field::long_term_debt);
    if (!assets || !(*assets > 0.0) || !st || !lt) return {};
    LeverageRatios out;
    out.stdr = *st / *assets;
    out.ltdr = *lt / *assets;
    out.tdr = *out.stdr + *out.ltdr;
    return out;
}

std::vector<FirmFactors> compute_firm_factors(std::span<const FirmYearRecord> history) {
    std::vector<FirmFactors> out(history.size());
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& rec = history[i];
        auto& f = out[i];
        f.year = rec.year;
        const Cell sales = rec.get(Field::sales);
        const Cell assets = rec.get(Field::total_assets);

        if (sales && *sales > 0.0) f.values[factor_slot(Variable::size)] = std::log(*sales);
        if (i >= 1 && history[i - 1].year == rec.year - 1) {
            f.values[factor_slot(Variable::gr)] = [&]() -> Cell {
                const Cell prev = history[i - 1].get(Field::sales);
                if (!sales || !prev || *prev == 0.0) return std::nullopt;
                return (*sales - *prev) / *prev;
            }();
        }
        f.values[factor_slot(Variable::pr)] = positive_ratio(rec.get(Field::ebit), assets);
        f.values[factor_slot(Variable::ndts)] = positive_ratio(rec.get(Field::depreciation), assets);
        if (i >= 2 && history[i - 1].year == rec.year - 1 && history[i - 2].year == rec.year - 2) {
            const Cell e0 = history[i - 2].get(Field::ebit);
            const Cell e1 = history[i - 1].get(Field::ebit);
            const Cell e2 = rec.get(Field::ebit);
            if (e0 && e1 && e2) {
                const double mean = (*e0 + *e1 + *e2) / 3.0;
                const double ss = (*e0 - mean) * (*e0 - mean) + (*e1 - mean) * (*e1 - mean) + (*e2 - mean) * (*e2 - mean);
                f.values[factor_slot(Variable::risk)] = std::sqrt(ss / 2.0);
            }
        }
        const Cell rec_ = rec.get(Field::trade_receivables);
        const Cell pay = rec.get(Field::trade_payables);
        if (rec_ && pay) f.values[factor_slot(Variable::ntcs)] = ratio(*rec_ - *pay, sales);
        f.values[factor_slot(Variable::cashta)] = positive_ratio(rec.get(Field::cash), assets);
        f.values[factor_slot(Variable::finexp)] = ratio(rec.get(Field::financial_expenses), sales);
        f.values[factor_slot(Variable::as_ratio)] = positive_ratio(rec.get(Field::tangible_assets), assets);
    }
    return out;
}

int regime_indicator(Cell gdp_growth) {
    if (!gdp_growth) throw DataError("gdp growth is missing; the recession indicator must be defined every sample year");
    return *gdp_growth < 0.0 ? 1 : 0;
}

std::vector<MacroFactors> compute_macro_factors(std::span<const MacroYearRecord> series) {
    std::vector<MacroFactors> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& rec = series[i];
        auto& m = out[i];
        m.year = rec.year;
        if (i >= 1 && series[i - 1].year == rec.year - 1) {
            const Cell prev = series[i - 1].get(MacroField::credit_supply);
            const Cell cur = rec.get(MacroField::credit_supply);
            if (prev && cur && *prev != 0.0) m.cred = (*cur - *prev) / *prev;
        }
        m.infl = rec.get(MacroField::inflation);
        m.intr = rec.get(MacroField::lending_rate);
        if (const Cell g = rec.get(MacroField::gdp_growth)) m.c = regime_indicator(g);
    }
    return out;
}

void winsorize_firm_factors(std::vector<DerivedRow>& rows, double p) {
    if (!(p > 0.0 && p < 0.5)) throw ConfigError("winsorization percentile must lie in (0, 0.5)");
    for (Variable v : kFirmFactors) {
        std::vector<double> present;
        for (const auto& r : rows) {
            if (const Cell x = r.get(v)) present.push_back(*x);
        }
        if (present.empty()) continue;
        const double lo = empirical_quantile(present, p);
        const double hi = empirical_quantile(present, 1.0 - p);
        for (auto& r : rows) {
            if (const Cell x = r.get(v)) r.set(v, std::clamp(*x, lo, hi));
        }
    }
}

std::vector<DerivedRow> derive_rows(const PanelDataset& dataset, const FeatureOptions& options) {
    const auto macro = compute_macro_factors(dataset.macro());
    std::map<int, const MacroFactors*> macro_by_year;
    for (const auto& m : macro) macro_by_year[m.year] = &m;

    std::vector<DerivedRow> rows;
    rows.reserve(dataset.records().size());
    const auto& records = dataset.records();
    for (const auto& firm : dataset.firms()) {
        const std::span<const FirmYearRecord> history(records.data() + firm.begin, firm.end - firm.begin);
        const auto factors = compute_firm_factors(history);
        for (std::size_t i = 0; i < history.size(); ++i) {
            DerivedRow row;
            row.firm_id = firm.firm_id;
            row.year = history[i].year;
            const auto lev = compute_leverage_ratios(history[i]);
            row.set(Variable::tdr, lev.tdr);
            row.set(Variable::ltdr, lev.ltdr);
            row.set(Variable::stdr, lev.stdr);
            for (std::size_t k = 0; k < kFirmFactors.size(); ++k) row.set(kFirmFactors[k], factors[i].values[k]);
            if (auto it = macro_by_year.find(row.year); it != macro_by_year.end()) {
                row.set(Variable::cred, it->second->cred);
                row.set(Variable::infl, it->second->infl);
                row.set(Variable::intr, it->second->intr);
                row.c = it->second->c;
            }
            rows.push_back(std::move(row));
        }
    }
    if (options.winsorize) winsorize_firm_factors(rows, *options.winsorize);
    return rows;
}

std::optional<Eigen::Index> DesignMatrix::column(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    }
    return std::nullopt;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows) const {
    DesignMatrix out;
    out.dependent = dependent;
    out.names = names;
    out.roles = roles;
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    std::map<std::size_t, std::size_t> remap;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(rows[k]);
        out.y(static_cast<Eigen::Index>(k)) = y(r);
        out.X.row(static_cast<Eigen::Index>(k)) = X.row(r);
        const std::size_t g = firm_index[rows[k]];
        auto [it, inserted] = remap.try_emplace(g, out.firm_ids.size());
        if (inserted) out.firm_ids.push_back(firm_ids[g]);
        out.firm_index.push_back(it->second);
        out.years.push_back(years[rows[k]]);
    }
    return out;
}

DesignMatrix build_design(std::span<const DerivedRow> rows, LeverageForm form, const DesignOptions& options) {
    const Variable dep = leverage_variable(form);
    DesignMatrix d;
    d.dependent = std::string(variable_name(dep));

    auto add = [&](std::string name, ColumnRole role) {
        d.names.push_back(std::move(name));
        d.roles.push_back(role);
    };
    if (options.lagged_dependent) add("lag_" + d.dependent, ColumnRole::lag_dependent);
    for (Variable v : options.firm_factors) add(std::string(variable_name(v)), ColumnRole::firm_factor);
    for (Variable v : options.macro_factors) add(std::string(variable_name(v)), ColumnRole::macro_factor);
    if (options.state_dummies) {
        add("c", ColumnRole::state);
        if (options.lagged_dependent) add("lag_" + d.dependent + ":c", ColumnRole::lag_dependent_x_state);
        for (Variable v : options.firm_factors) add(std::string(variable_name(v)) + ":c", ColumnRole::firm_factor_x_state);
        for (Variable v : options.macro_factors) add(std::string(variable_name(v)) + ":c", ColumnRole::macro_factor_x_state);
    }
    const auto p = d.names.size();

    std::vector<double> ys;
    std::vector<double> cells;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& cur = rows[i];
        const auto& prev = rows[i - 1];
        if (prev.firm_id != cur.firm_id || prev.year != cur.year - 1) continue;
        const Cell y = cur.get(dep);
        if (!y) continue;
        std::vector<double> lagged;
        bool complete = true;
        if (options.lagged_dependent) {
            const Cell v = prev.get(dep);
            complete = complete && v.has_value();
            lagged.push_back(v.value_or(0.0));
        }
        for (Variable v : options.firm_factors) {
            const Cell x = prev.get(v);
            complete = complete && x.has_value();
            lagged.push_back(x.value_or(0.0));
        }
        for (Variable v : options.macro_factors) {
            const Cell x = prev.get(v);
            complete = complete && x.has_value();
            lagged.push_back(x.value_or(0.0));
        }
        if (!complete) continue;
        if (!cur.c) {
            throw DataError("gdp growth missing for year " + std::to_string(cur.year) +
                            "; the recession indicator must be defined every sample year");
        }
        const double c = static_cast<double>(*cur.c);
        ys.push_back(*y);
        cells.insert(cells.end(), lagged.begin(), lagged.end());
        if (options.state_dummies) {
            cells.push_back(c);
            for (double v : lagged) cells.push_back(v * c);
        }
        if (d.firm_ids.empty() || d.firm_ids.back() != cur.firm_id) d.firm_ids.push_back(cur.firm_id);
        d.firm_index.push_back(d.firm_ids.size() - 1);
        d.years.push_back(cur.year);
    }

    const auto n = ys.size();
    if (n < p + 2) {
        throw EstimationError("design is under-identified: " + std::to_string(n) + " usable rows for " +
                              std::to_string(p) + " columns (need at least " + std::to_string(p + 2) + ")");
    }
    d.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(n));
    d.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cells.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    return d;
}

DesignMatrix build_design(const PanelDataset& dataset, LeverageForm form, bool include_state_dummies,
                          const FeatureOptions& features) {
    const auto rows = derive_rows(dataset, features);
    DesignOptions options;
    options.state_dummies = include_state_dummies;
    return build_design(rows, form, options);
}

}  // namespace capstruct
