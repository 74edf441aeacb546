#pragma once

#include "capstruct/features.hpp"
#include "capstruct/quantreg.hpp"
#include "capstruct/random.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

namespace test_support {

using namespace capstruct;

/// fit_quantile plus a check that the optimality certificate holds.
inline QrFit certified_fit(const Matrix& X, const Vector& y, double tau) {
    QrFit fit = fit_quantile(X, y, tau);
    CHECK(fit.certificate.pass);
    CHECK(certify_optimality(fit, y).pass);
    return fit;
}

inline Matrix random_matrix(RandomSource& rng, Eigen::Index n, Eigen::Index p) {
    Matrix m(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = rng.normal();
    return m;
}

inline Vector random_vector(RandomSource& rng, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

/// Hand-built design: k regressors named x0.., firm index per row.
inline DesignMatrix make_design(const std::vector<std::size_t>& firm_of_row, const Matrix& X, const Vector& y) {
    DesignMatrix d;
    d.dependent = "y";
    std::size_t firms = 0;
    for (auto f : firm_of_row) firms = std::max(firms, f + 1);
    for (std::size_t f = 0; f < firms; ++f) d.firm_ids.push_back("f" + std::to_string(f));
    d.firm_index = firm_of_row;
    for (std::size_t i = 0; i < firm_of_row.size(); ++i) d.years.push_back(2000 + static_cast<int>(i));
    d.X = X;
    d.y = y;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        d.names.push_back("x" + std::to_string(j));
        d.roles.push_back(ColumnRole::firm_factor);
    }
    return d;
}

/// Random balanced panel with `firms` x `years` rows and p regressors.
inline DesignMatrix random_panel(RandomSource& rng, std::size_t firms, std::size_t years, Eigen::Index p) {
    std::vector<std::size_t> idx;
    for (std::size_t f = 0; f < firms; ++f)
        for (std::size_t t = 0; t < years; ++t) idx.push_back(f);
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix X = random_matrix(rng, n, p);
    Vector y(n);
    std::vector<double> alpha(firms);
    for (auto& a : alpha) a = rng.normal(0.0, 2.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = alpha[idx[static_cast<std::size_t>(i)]] + rng.normal();
        for (Eigen::Index j = 0; j < p; ++j) y(i) += 0.5 * (j + 1) * X(i, j);
    }
    return make_design(idx, X, y);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("capstruct_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace test_support
