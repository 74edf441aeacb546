#pragma once

#include "capstruct/features.hpp"

#include <span>
#include <string>
#include <vector>

namespace capstruct {

/// Per-year means of the derived variables over the firms present that year.
struct YearMeansTable {
    std::vector<std::string> variables;
    std::vector<int> years;
    std::vector<std::vector<Cell>> means;          // [year][variable]
    std::vector<std::vector<std::size_t>> counts;  // [year][variable]
    std::vector<std::size_t> firms;                // records per year
};

YearMeansTable yearly_means(std::span<const DerivedRow> rows);

/// Pearson correlations on pairwise-complete observations. Pairs with fewer
/// than 3 complete rows or zero variance are missing.
struct CorrelationTable {
    std::vector<std::string> variables;
    std::vector<std::vector<Cell>> r;
    std::vector<std::vector<std::size_t>> counts;
};

CorrelationTable correlation_matrix(std::span<const DerivedRow> rows);

/// Same computation on arbitrary columns of equal length.
CorrelationTable pairwise_correlation(const std::vector<std::string>& names,
                                      const std::vector<std::vector<Cell>>& columns);

}  // namespace capstruct
