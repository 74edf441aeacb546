#include "capstruct/descriptives.hpp"

#include "capstruct/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace capstruct {

namespace {

std::vector<std::string> all_variable_names() {
    std::vector<std::string> out;
    for (std::size_t v = 0; v < kVariableCount; ++v) out.emplace_back(variable_name(static_cast<Variable>(v)));
    return out;
}

}  // namespace

YearMeansTable yearly_means(std::span<const DerivedRow> rows) {
    if (rows.empty()) throw DataError("yearly_means: no rows");
    struct Acc {
        std::array<double, kVariableCount> sum{};
        std::array<std::size_t, kVariableCount> count{};
        std::size_t firms = 0;
    };
    // Sums are accumulated in a fixed (firm_id) order so the result does not
    // depend on input row order.
    std::map<int, std::map<std::string, const DerivedRow*>> by_year;
    for (const auto& r : rows) by_year[r.year][r.firm_id] = &r;

    YearMeansTable t;
    t.variables = all_variable_names();
    for (const auto& [year, firms] : by_year) {
        Acc acc;
        for (const auto& [id, row] : firms) {
            ++acc.firms;
            for (std::size_t v = 0; v < kVariableCount; ++v) {
                if (const Cell x = row->values[v]) {
                    acc.sum[v] += *x;
                    ++acc.count[v];
                }
            }
        }
        t.years.push_back(year);
        t.firms.push_back(acc.firms);
        std::vector<Cell> means(kVariableCount);
        std::vector<std::size_t> counts(kVariableCount);
        for (std::size_t v = 0; v < kVariableCount; ++v) {
            counts[v] = acc.count[v];
            if (acc.count[v] > 0) means[v] = acc.sum[v] / static_cast<double>(acc.count[v]);
        }
        t.means.push_back(std::move(means));
        t.counts.push_back(std::move(counts));
    }
    return t;
}

CorrelationTable pairwise_correlation(const std::vector<std::string>& names,
                                      const std::vector<std::vector<Cell>>& columns) {
    const std::size_t k = columns.size();
    CorrelationTable t;
    t.variables = names;
    t.r.assign(k, std::vector<Cell>(k));
    t.counts.assign(k, std::vector<std::size_t>(k, 0));
    const std::size_t n = k > 0 ? columns[0].size() : 0;
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
            // Single pass with running co-moments.
            double mean_a = 0.0, mean_b = 0.0, m2a = 0.0, m2b = 0.0, cab = 0.0;
            std::size_t m = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const Cell xa = columns[a][i];
                const Cell xb = columns[b][i];
                if (!xa || !xb) continue;
                ++m;
                const double da = *xa - mean_a;
                const double db = *xb - mean_b;
                mean_a += da / static_cast<double>(m);
                mean_b += db / static_cast<double>(m);
                m2a += da * (*xa - mean_a);
                m2b += db * (*xb - mean_b);
                cab += da * (*xb - mean_b);
            }
            t.counts[a][b] = t.counts[b][a] = m;
            if (m < 3 || !(m2a > 0.0) || !(m2b > 0.0)) continue;
            double r = a == b ? 1.0 : cab / std::sqrt(m2a * m2b);
            r = std::clamp(r, -1.0, 1.0);
            t.r[a][b] = t.r[b][a] = r;
        }
    }
    return t;
}

CorrelationTable correlation_matrix(std::span<const DerivedRow> rows) {
    if (rows.size() < 2) throw DataError("correlation_matrix: need at least 2 rows");
    std::vector<std::vector<Cell>> columns(kVariableCount, std::vector<Cell>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t v = 0; v < kVariableCount; ++v) columns[v][i] = rows[i].values[v];
    }
    return pairwise_correlation(all_variable_names(), columns);
}

}  // namespace capstruct
