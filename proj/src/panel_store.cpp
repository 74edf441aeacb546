#include "capstruct/panel_store.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace capstruct {

namespace {

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "sales",      "total_assets",       "short_term_debt",   "long_term_debt",
    "ebit",       "depreciation",       "cash",              "financial_expenses",
    "trade_receivables", "trade_payables", "tangible_assets",
};

constexpr std::array<std::string_view, kMacroFieldCount> kMacroNames = {
    "gdp_growth", "lending_rate", "inflation", "credit_supply"};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else {
            cell.push_back(ch);
        }
    }
    out.push_back(std::move(cell));
    return out;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, cells)
};

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        table.rows.emplace_back(line_no, std::move(cells));
    }
    if (table.header.empty()) throw DataError(path.string() + ": missing header row");
    return table;
}

/// Maps each expected column name to its position in the file header.
std::vector<std::size_t> resolve_header(const std::vector<std::string>& header,
                                        const std::vector<std::string_view>& expected,
                                        const std::filesystem::path& path) {
    std::vector<std::size_t> pos(expected.size(), header.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!seen.insert(header[i]).second) {
            throw DataError(path.string() + ": duplicate header column '" + header[i] + "'");
        }
        auto it = std::find(expected.begin(), expected.end(), header[i]);
        if (it == expected.end()) throw DataError(path.string() + ": unknown header column '" + header[i] + "'");
        pos[static_cast<std::size_t>(it - expected.begin())] = i;
    }
    for (std::size_t k = 0; k < expected.size(); ++k) {
        if (pos[k] == header.size()) {
            throw DataError(path.string() + ": missing required header column '" + std::string(expected[k]) + "'");
        }
    }
    return pos;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

Cell parse_cell(const std::string& raw, std::size_t line_no, std::string_view column) {
    const std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(line_no) + ", column '" + std::string(column) +
                        "': non-numeric value '" + raw + "'");
    }
    return v;
}

int parse_year(const std::string& raw, std::size_t line_no) {
    const std::string s = trim(raw);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError("row " + std::to_string(line_no) + ", column 'year': invalid year '" + raw + "'");
    }
    return v;
}

void check_arity(const std::vector<std::string>& cells, std::size_t expected, std::size_t line_no,
                 const std::filesystem::path& path) {
    if (cells.size() != expected) {
        throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(expected));
    }
}

}  // namespace

std::string_view field_name(Field f) { return kFieldNames[static_cast<std::size_t>(f)]; }
std::string_view macro_field_name(MacroField f) { return kMacroNames[static_cast<std::size_t>(f)]; }

std::string format_exact(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    (void)ec;
    return std::string(buf.data(), ptr);
}

PanelDataset::PanelDataset(std::vector<FirmYearRecord> records, std::vector<MacroYearRecord> macro)
    : records_(std::move(records)), macro_(std::move(macro)) {
    std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.firm_id, a.year) < std::tie(b.firm_id, b.year);
    });
    for (std::size_t i = 1; i < records_.size(); ++i) {
        if (records_[i].firm_id == records_[i - 1].firm_id && records_[i].year == records_[i - 1].year) {
            throw DataError("duplicate (firm_id, year) key: \"" + records_[i].firm_id + "\"," +
                            std::to_string(records_[i].year));
        }
    }
    std::sort(macro_.begin(), macro_.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    for (std::size_t i = 0; i < records_.size();) {
        std::size_t j = i;
        while (j < records_.size() && records_[j].firm_id == records_[i].firm_id) ++j;
        firms_.push_back({records_[i].firm_id, i, j});
        i = j;
    }
}

std::optional<int> PanelDataset::first_macro_year() const {
    if (macro_.empty()) return std::nullopt;
    return macro_.front().year;
}

std::optional<int> PanelDataset::last_macro_year() const {
    if (macro_.empty()) return std::nullopt;
    return macro_.back().year;
}

const MacroYearRecord* PanelDataset::macro_for(int year) const {
    if (macro_.empty()) return nullptr;
    const auto offset = static_cast<long>(year) - macro_.front().year;
    if (offset < 0 || offset >= static_cast<long>(macro_.size())) return nullptr;
    return &macro_[static_cast<std::size_t>(offset)];
}

std::size_t MergeDiagnostics::total_dropped() const {
    std::size_t total = nonpositive_assets + missing_assets;
    for (const auto& [year, count] : outside_macro_range_by_year) total += count;
    return total;
}

PanelDataset load_panel_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    std::vector<std::string_view> expected = {"firm_id", "year"};
    expected.insert(expected.end(), kFieldNames.begin(), kFieldNames.end());
    const auto pos = resolve_header(table.header, expected, path);

    std::vector<FirmYearRecord> records;
    records.reserve(table.rows.size());
    for (const auto& [line_no, cells] : table.rows) {
        check_arity(cells, table.header.size(), line_no, path);
        FirmYearRecord rec;
        rec.firm_id = cells[pos[0]];
        if (rec.firm_id.empty()) throw DataError("row " + std::to_string(line_no) + ": empty firm_id");
        rec.year = parse_year(cells[pos[1]], line_no);
        for (std::size_t k = 0; k < kFieldCount; ++k) {
            rec.values[k] = parse_cell(cells[pos[k + 2]], line_no, kFieldNames[k]);
        }
        records.push_back(std::move(rec));
    }
    return PanelDataset(std::move(records), {});
}

std::vector<MacroYearRecord> load_macro_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    std::vector<std::string_view> expected = {"year"};
    expected.insert(expected.end(), kMacroNames.begin(), kMacroNames.end());
    const auto pos = resolve_header(table.header, expected, path);

    std::vector<MacroYearRecord> series;
    for (const auto& [line_no, cells] : table.rows) {
        check_arity(cells, table.header.size(), line_no, path);
        MacroYearRecord rec;
        rec.year = parse_year(cells[pos[0]], line_no);
        for (std::size_t k = 0; k < kMacroFieldCount; ++k) {
            rec.values[k] = parse_cell(cells[pos[k + 1]], line_no, kMacroNames[k]);
        }
        series.push_back(rec);
    }
    std::sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (series[i].year == series[i - 1].year) {
            throw DataError(path.string() + ": duplicate year " + std::to_string(series[i].year));
        }
    }
    std::string missing;
    for (std::size_t i = 1; i < series.size(); ++i) {
        for (int y = series[i - 1].year + 1; y < series[i].year; ++y) {
            missing += (missing.empty() ? "" : ",") + std::to_string(y);
        }
    }
    if (!missing.empty()) throw DataError(path.string() + ": gap in macro year range, missing years " + missing);
    return series;
}

MergeResult validate_and_merge(const PanelDataset& panel, const std::vector<MacroYearRecord>& macro) {
    if (macro.empty()) throw DataError("macro series is empty");
    std::vector<MacroYearRecord> series = macro;
    std::sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (series[i].year != series[i - 1].year + 1) throw DataError("macro series is not contiguous");
    }
    const int lo = series.front().year;
    const int hi = series.back().year;

    MergeDiagnostics diag;
    diag.input_rows = panel.records().size();
    std::vector<FirmYearRecord> kept;
    kept.reserve(panel.records().size());
    for (const auto& rec : panel.records()) {
        if (rec.year < lo || rec.year > hi) {
            ++diag.outside_macro_range_by_year[rec.year];
            continue;
        }
        const Cell assets = rec.get(Field::total_assets);
        if (!assets) {
            ++diag.missing_assets;
            continue;
        }
        if (!(*assets > 0.0)) {
            ++diag.nonpositive_assets;
            continue;
        }
        kept.push_back(rec);
    }
    if (kept.empty()) throw DataError("dataset is empty after validation (all rows dropped)");
    diag.output_rows = kept.size();
    return {PanelDataset(std::move(kept), std::move(series)), diag};
}

void write_panel_csv(const PanelDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "firm_id,year";
    for (auto name : kFieldNames) out << ',' << name;
    out << '\n';
    for (const auto& rec : dataset.records()) {
        out << quote_if_needed(rec.firm_id) << ',' << rec.year;
        for (const auto& v : rec.values) {
            out << ',';
            if (v) out << format_exact(*v);
        }
        out << '\n';
    }
}

void write_macro_csv(const std::vector<MacroYearRecord>& macro, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "year";
    for (auto name : kMacroNames) out << ',' << name;
    out << '\n';
    for (const auto& rec : macro) {
        out << rec.year;
        for (const auto& v : rec.values) {
            out << ',';
            if (v) out << format_exact(*v);
        }
        out << '\n';
    }
}

}  // namespace capstruct
