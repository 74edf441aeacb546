#pragma once

#include "capstruct/numerics.hpp"
#include "capstruct/panel_store.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capstruct {

/// Derived variables, in the order used by descriptive tables.
enum class Variable : std::size_t {
    tdr, ltdr, stdr,
    size, gr, pr, ndts, risk, ntcs, cashta, finexp, as_ratio,
    cred, infl, intr,
};
inline constexpr std::size_t kVariableCount = 15;
std::string_view variable_name(Variable v);
std::optional<Variable> variable_from_name(std::string_view name);

inline constexpr std::array<Variable, 9> kFirmFactors = {
    Variable::size, Variable::gr, Variable::pr, Variable::ndts, Variable::risk,
    Variable::ntcs, Variable::cashta, Variable::finexp, Variable::as_ratio};
inline constexpr std::array<Variable, 3> kMacroFactors = {Variable::cred, Variable::infl, Variable::intr};

enum class LeverageForm { tdr, ltdr, stdr };
std::string_view leverage_name(LeverageForm form);
LeverageForm parse_leverage(std::string_view name);
Variable leverage_variable(LeverageForm form);

struct LeverageRatios {
    Cell tdr, ltdr, stdr;
};

/// Debt over total assets. Ratios are missing unless assets > 0 and both
/// debt fields are present.
LeverageRatios compute_leverage_ratios(const FirmYearRecord& record);

struct FirmFactors {
    int year = 0;
    std::array<Cell, kFirmFactors.size()> values{};  // kFirmFactors order
};

/// Firm-specific factors for one firm's history (sorted by year). Growth
/// needs the previous calendar year; risk needs three consecutive years.
std::vector<FirmFactors> compute_firm_factors(std::span<const FirmYearRecord> history);

struct MacroFactors {
    int year = 0;
    Cell cred, infl, intr;
    std::optional<int> c;  // missing when gdp growth is missing
};

std::vector<MacroFactors> compute_macro_factors(std::span<const MacroYearRecord> series);

/// Recession indicator: 1 iff gdp growth is strictly negative.
int regime_indicator(Cell gdp_growth);

struct DerivedRow {
    std::string firm_id;
    int year = 0;
    std::array<Cell, kVariableCount> values{};
    std::optional<int> c;

    Cell get(Variable v) const { return values[static_cast<std::size_t>(v)]; }
    void set(Variable v, Cell x) { values[static_cast<std::size_t>(v)] = x; }
};

struct FeatureOptions {
    /// Symmetric winsorisation of the firm factors at percentile p (0 < p < 0.5).
    std::optional<double> winsorize;
};

/// All derived variables for every record of a merged dataset, ordered by
/// (firm_id, year).
std::vector<DerivedRow> derive_rows(const PanelDataset& dataset, const FeatureOptions& options = {});

/// Clamps each firm-factor column to its [p, 1-p] type-1 empirical quantiles.
void winsorize_firm_factors(std::vector<DerivedRow>& rows, double p);

enum class ColumnRole {
    lag_dependent,
    firm_factor,
    macro_factor,
    state,
    lag_dependent_x_state,
    firm_factor_x_state,
    macro_factor_x_state,
};

struct DesignOptions {
    bool state_dummies = true;
    bool lagged_dependent = true;
    std::vector<Variable> firm_factors{kFirmFactors.begin(), kFirmFactors.end()};
    std::vector<Variable> macro_factors{kMacroFactors.begin(), kMacroFactors.end()};
};

/// Regression design of the partial-adjustment model. Rows are grouped by
/// firm with years ascending; X holds every regressor except a constant.
struct DesignMatrix {
    std::string dependent;
    std::vector<std::string> firm_ids;    // distinct firms, in row order
    std::vector<std::size_t> firm_index;  // per row, into firm_ids
    std::vector<int> years;               // per row
    Vector y;
    Matrix X;
    std::vector<std::string> names;
    std::vector<ColumnRole> roles;

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }
    std::optional<Eigen::Index> column(std::string_view name) const;
    /// Copy restricted to the given rows (firm ids re-indexed).
    DesignMatrix select_rows(std::span<const std::size_t> rows) const;
};

DesignMatrix build_design(std::span<const DerivedRow> rows, LeverageForm form, const DesignOptions& options = {});
DesignMatrix build_design(const PanelDataset& dataset, LeverageForm form, bool include_state_dummies,
                          const FeatureOptions& features = {});

}  // namespace capstruct
