#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capstruct {

/// Balance-sheet inputs of a firm-year record, in panel.csv column order.
enum class Field : std::size_t {
    sales,
    total_assets,
    short_term_debt,
    long_term_debt,
    ebit,
    depreciation,
    cash,
    financial_expenses,
    trade_receivables,
    trade_payables,
    tangible_assets,
};
inline constexpr std::size_t kFieldCount = 11;
std::string_view field_name(Field f);

enum class MacroField : std::size_t { gdp_growth, lending_rate, inflation, credit_supply };
inline constexpr std::size_t kMacroFieldCount = 4;
std::string_view macro_field_name(MacroField f);

using Cell = std::optional<double>;

struct FirmYearRecord {
    std::string firm_id;
    int year = 0;
    std::array<Cell, kFieldCount> values{};

    Cell get(Field f) const { return values[static_cast<std::size_t>(f)]; }
    void set(Field f, Cell v) { values[static_cast<std::size_t>(f)] = v; }

    bool operator==(const FirmYearRecord&) const = default;
};

struct MacroYearRecord {
    int year = 0;
    std::array<Cell, kMacroFieldCount> values{};

    Cell get(MacroField f) const { return values[static_cast<std::size_t>(f)]; }
    void set(MacroField f, Cell v) { values[static_cast<std::size_t>(f)] = v; }

    bool operator==(const MacroYearRecord&) const = default;
};

/// Contiguous block of one firm's records inside PanelDataset::records.
struct FirmSpan {
    std::string firm_id;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const FirmSpan&) const = default;
};

/// Unbalanced firm-year panel plus the macro series. Records are sorted by
/// (firm_id, year); `firms` indexes each firm's block. Immutable once built.
class PanelDataset {
public:
    PanelDataset() = default;
    /// Sorts records, checks (firm_id, year) uniqueness and builds the firm index.
    PanelDataset(std::vector<FirmYearRecord> records, std::vector<MacroYearRecord> macro);

    const std::vector<FirmYearRecord>& records() const { return records_; }
    const std::vector<MacroYearRecord>& macro() const { return macro_; }
    const std::vector<FirmSpan>& firms() const { return firms_; }

    std::optional<int> first_macro_year() const;
    std::optional<int> last_macro_year() const;
    const MacroYearRecord* macro_for(int year) const;

    bool operator==(const PanelDataset&) const = default;

private:
    std::vector<FirmYearRecord> records_;
    std::vector<MacroYearRecord> macro_;
    std::vector<FirmSpan> firms_;
};

struct MergeDiagnostics {
    std::size_t input_rows = 0;
    std::size_t output_rows = 0;
    std::map<int, std::size_t> outside_macro_range_by_year;
    std::size_t nonpositive_assets = 0;
    std::size_t missing_assets = 0;

    std::size_t total_dropped() const;
};

struct MergeResult {
    PanelDataset dataset;
    MergeDiagnostics diagnostics;
};

/// Reads panel.csv. The returned dataset carries no macro series.
PanelDataset load_panel_csv(const std::filesystem::path& path);

/// Reads macro.csv; years are returned ascending and must be contiguous.
std::vector<MacroYearRecord> load_macro_csv(const std::filesystem::path& path);

/// Drops records outside the macro year range or with missing/nonpositive
/// total assets, then attaches the macro series.
MergeResult validate_and_merge(const PanelDataset& panel, const std::vector<MacroYearRecord>& macro);

void write_panel_csv(const PanelDataset& dataset, const std::filesystem::path& path);
void write_macro_csv(const std::vector<MacroYearRecord>& macro, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_exact(double value);

}  // namespace capstruct
