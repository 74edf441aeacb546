#include "capstruct/errors.hpp"
#include "capstruct/mean_panel.hpp"
#include "capstruct/random.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace capstruct;
using test_support::make_design;
using test_support::random_panel;

namespace {

struct Lsdv {
    Vector slopes;
    Vector firm_intercepts;
    Matrix covariance;  // slopes block
};

// Dummy-variable least squares: y on [X, D] with one dummy per firm.
Lsdv dummy_regression(const DesignMatrix& d) {
    const Eigen::Index n = d.rows(), p = d.cols();
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    Matrix Z = Matrix::Zero(n, p + G);
    Z.leftCols(p) = d.X;
    for (Eigen::Index i = 0; i < n; ++i) Z(i, p + static_cast<Eigen::Index>(d.firm_index[i])) = 1.0;
    const Matrix ZtZ = Z.transpose() * Z;
    const Vector coef = ZtZ.ldlt().solve(Z.transpose() * d.y);
    const Vector resid = d.y - Z * coef;
    const double s2 = resid.squaredNorm() / static_cast<double>(n - p - G);
    const Matrix inv = ZtZ.inverse();
    return {coef.head(p), coef.tail(G), s2 * inv.topLeftCorner(p, p)};
}

MeanFit manual_fit(std::vector<std::string> names, Vector b, Matrix v) {
    MeanFit f;
    f.names = std::move(names);
    f.coefficients = std::move(b);
    f.covariance = std::move(v);
    return f;
}

}  // namespace

TEST_CASE("fixed effects exact line per firm") {
    Matrix X(4, 1);
    X << 0, 1, 0, 1;
    Vector y(4);
    y << 0, 2, 10, 12;
    Matrix X6(6, 1);
    X6 << 0, 1, 2, 0, 1, 2;
    Vector y6(6);
    y6 << 0, 2, 4, 10, 12, 14;
    const MeanFit fit = fit_fixed_effects(make_design({0, 0, 0, 1, 1, 1}, X6, y6));
    CHECK(fit.coefficients(0) == doctest::Approx(2.0));
    CHECK(fit.intercept == doctest::Approx(5.0));
    CHECK(fit.effects(0) == doctest::Approx(-5.0));
    CHECK(fit.effects(1) == doctest::Approx(5.0));
    CHECK(fit.effects(1) - fit.effects(0) == doctest::Approx(10.0));
    CHECK(std::abs(fit.effects.sum()) < 1e-12);
    const MeanFit two = fit_fixed_effects(make_design({0, 0, 1, 1}, X, y));
    CHECK(two.coefficients(0) == doctest::Approx(2.0));
    CHECK(two.effects(1) - two.effects(0) == doctest::Approx(10.0));
    // one row per firm leaves no residual degrees of freedom
    CHECK_THROWS_AS(fit_fixed_effects(make_design({0, 1}, X.topRows(2), y.topRows(2))), EstimationError);
}

TEST_CASE("fixed effects equals dummy-variable least squares") {
    RandomSource rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t firms = 2 + rng.index(9);
        const std::size_t years = 3 + rng.index(6);
        const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.index(3));
        DesignMatrix d = random_panel(rng, firms, years, p);
        // drop some rows to make the panel unbalanced (keep >= 2 per firm)
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < static_cast<std::size_t>(d.rows()); ++i) {
            const bool first_two = i % years < 2;
            if (first_two || rng.uniform() > 0.25) keep.push_back(i);
        }
        d = d.select_rows(keep);
        if (d.rows() - p - static_cast<Eigen::Index>(d.firm_ids.size()) <= 0) continue;
        const MeanFit fe = fit_fixed_effects(d);
        const Lsdv oracle = dummy_regression(d);
        for (Eigen::Index j = 0; j < p; ++j) CHECK(std::abs(fe.coefficients(j) - oracle.slopes(j)) < 1e-8);
        for (Eigen::Index g = 0; g < oracle.firm_intercepts.size(); ++g) {
            CHECK(std::abs(fe.intercept + fe.effects(g) - oracle.firm_intercepts(g)) < 1e-8);
        }
        CHECK((fe.covariance - oracle.covariance).norm() < 1e-8);
        CHECK((fe.covariance - fe.covariance.transpose()).norm() < 1e-10);
    }
}

TEST_CASE("fixed effects is invariant to firm-specific shifts of y") {
    RandomSource rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        DesignMatrix d = random_panel(rng, 6, 5, 2);
        const MeanFit a = fit_fixed_effects(d);
        std::vector<double> shift(d.firm_ids.size());
        for (auto& s : shift) s = rng.normal(0, 10);
        for (Eigen::Index i = 0; i < d.rows(); ++i) d.y(i) += shift[d.firm_index[i]];
        const MeanFit b = fit_fixed_effects(d);
        CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("fixed effects drops time-invariant columns with a warning") {
    RandomSource rng(4);
    DesignMatrix d = random_panel(rng, 5, 6, 2);
    d.X.conservativeResize(Eigen::NoChange, 3);
    for (Eigen::Index i = 0; i < d.rows(); ++i) d.X(i, 2) = static_cast<double>(d.firm_index[i]);
    d.names.push_back("firm_level");
    d.roles.push_back(ColumnRole::firm_factor);
    const MeanFit fit = fit_fixed_effects(d);
    CHECK(fit.p == 2);
    REQUIRE(fit.dropped_columns.size() == 1);
    CHECK(fit.dropped_columns[0] == "firm_level");
    REQUIRE(fit.warnings.size() == 1);
    CHECK(fit.warnings[0].find("firm_level") != std::string::npos);
    CHECK_FALSE(fit.index_of("firm_level"));
}

TEST_CASE("clustered covariance matches the sandwich formula") {
    RandomSource rng(12);
    const DesignMatrix d = random_panel(rng, 8, 6, 2);
    MeanOptions opt;
    opt.covariance = CovarianceType::clustered;
    const MeanFit fit = fit_fixed_effects(d, opt);
    // oracle on the demeaned data
    const Eigen::Index n = d.rows();
    const auto G = static_cast<Eigen::Index>(d.firm_ids.size());
    Matrix Xm = d.X;
    Vector ym = d.y;
    for (Eigen::Index g = 0; g < G; ++g) {
        Eigen::RowVectorXd xs = Eigen::RowVectorXd::Zero(2);
        double ys = 0, cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (static_cast<Eigen::Index>(d.firm_index[i]) == g) xs += d.X.row(i), ys += d.y(i), cnt += 1;
        for (Eigen::Index i = 0; i < n; ++i)
            if (static_cast<Eigen::Index>(d.firm_index[i]) == g) Xm.row(i) -= xs / cnt, ym(i) -= ys / cnt;
    }
    const Matrix bread = (Xm.transpose() * Xm).inverse();
    const Vector e = ym - Xm * fit.coefficients;
    Matrix meat = Matrix::Zero(2, 2);
    for (Eigen::Index g = 0; g < G; ++g) {
        Vector s = Vector::Zero(2);
        for (Eigen::Index i = 0; i < n; ++i)
            if (static_cast<Eigen::Index>(d.firm_index[i]) == g) s += Xm.row(i).transpose() * e(i);
        meat += s * s.transpose();
    }
    const double c = static_cast<double>(G) / (G - 1) * static_cast<double>(n - 1) / static_cast<double>(n - 2);
    const Matrix expect = c * bread * meat * bread;
    CHECK((fit.covariance - expect).norm() < 1e-10 * std::max(1.0, expect.norm()));
}

TEST_CASE("random effects with no effect variance equals pooled") {
    RandomSource rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        DesignMatrix d = random_panel(rng, 10, 5, 2);
        // errors with zero firm means: the between regression fits exactly, sigma_alpha^2 floors at 0
        std::vector<double> mean_e(d.firm_ids.size(), 0.0), cnt(d.firm_ids.size(), 0.0);
        Vector e(d.rows());
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            e(i) = rng.normal();
            mean_e[d.firm_index[i]] += e(i);
            cnt[d.firm_index[i]] += 1;
        }
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            const auto g = d.firm_index[i];
            d.y(i) = 1.0 + 0.5 * d.X(i, 0) - 0.25 * d.X(i, 1) + e(i) - mean_e[g] / cnt[g];
        }
        const MeanFit re = fit_random_effects(d);
        const MeanFit pooled = fit_pooled(d);
        CHECK(re.sigma2_alpha == 0.0);
        CHECK(re.theta_max == 0.0);
        CHECK((re.coefficients - pooled.coefficients).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(std::abs(re.intercept - pooled.intercept) < 1e-8);
    }
}

TEST_CASE("random effects recovers the slope with exogenous effects") {
    RandomSource rng(77);
    const std::size_t N = 100, T = 5;
    std::vector<std::size_t> idx;
    Matrix X(N * T, 1);
    Vector y(N * T);
    for (std::size_t i = 0; i < N; ++i) {
        const double a = rng.normal(0, 3);
        for (std::size_t t = 0; t < T; ++t) {
            const auto r = static_cast<Eigen::Index>(i * T + t);
            idx.push_back(i);
            X(r, 0) = rng.normal();
            y(r) = a + 0.7 * X(r, 0) + rng.normal();
        }
    }
    const MeanFit re = fit_random_effects(make_design(idx, X, y));
    CHECK(std::abs(re.coefficients(0) - 0.7) < 0.05);
    CHECK(re.theta_min > 0.5);
    CHECK(re.theta_max < 1.0);
}

TEST_CASE("hausman test") {
    SUBCASE("identical fits") {
        RandomSource rng(2);
        const MeanFit fe = fit_fixed_effects(random_panel(rng, 8, 5, 3));
        const HausmanResult h = hausman_test(fe, fe);
        CHECK(h.statistic == 0.0);
        CHECK(h.p_value == 1.0);
        CHECK(h.df == 0);
    }
    SUBCASE("scalar oracle") {
        Matrix vfe(1, 1), vre(1, 1);
        vfe << 0.03;
        vre << 0.02;
        Vector bfe(1), bre(1);
        bfe << 0.4;
        bre << 0.3;
        const HausmanResult h = hausman_test(manual_fit({"x"}, bfe, vfe), manual_fit({"x"}, bre, vre));
        CHECK(h.statistic == doctest::Approx(1.0));
        CHECK(h.df == 1);
        CHECK(std::abs(h.p_value - 0.317311) < 5e-7);
    }
    SUBCASE("common subset only, pseudo-inverse on indefinite difference") {
        Vector bfe(2), bre(3);
        bfe << 1.0, 2.0;
        bre << 9.0, 0.5, 1.5;
        Matrix vfe = Matrix::Identity(2, 2);
        Matrix vre = Matrix::Identity(3, 3) * 2.0;
        const HausmanResult h = hausman_test(manual_fit({"a", "b"}, bfe, vfe), manual_fit({"const_only", "a", "b"}, bre, vre));
        CHECK(h.names == std::vector<std::string>{"a", "b"});
        CHECK(h.df == 2);
        CHECK(h.statistic >= 0.0);
        CHECK(h.p_value <= 1.0);
        CHECK_THROWS_AS(hausman_test(manual_fit({"a"}, bfe.head(1), vfe.topLeftCorner(1, 1)),
                                     manual_fit({"z"}, bfe.head(1), vfe.topLeftCorner(1, 1))),
                        EstimationError);
    }
}

TEST_CASE("wald test") {
    Vector b(3);
    b << 2.0, 0.0, -1.0;
    Matrix V = Matrix::Identity(3, 3);
    V(0, 2) = V(2, 0) = 0.3;
    const std::vector<std::string> names{"a", "b", "c"};
    const WaldResult w = wald_test(names, b, V, std::vector<std::string>{"a"});
    CHECK(w.statistic == doctest::Approx(4.0));
    CHECK(w.df == 1);
    CHECK(std::abs(w.p_value - 0.045500) < 5e-7);

    const WaldResult zero = wald_test(names, b, V, std::vector<std::string>{"b"});
    CHECK(zero.statistic == 0.0);
    CHECK(zero.p_value == 1.0);

    const WaldResult ac = wald_test(names, b, V, std::vector<std::string>{"a", "c"});
    const WaldResult ca = wald_test(names, b, V, std::vector<std::string>{"c", "a"});
    CHECK(ac.statistic == doctest::Approx(ca.statistic).epsilon(1e-14));
    CHECK(ac.df == 2);
    Eigen::Matrix2d Vs;
    Vs << 1, 0.3, 0.3, 1;
    Eigen::Vector2d bs(2.0, -1.0);
    CHECK(ac.statistic == doctest::Approx(bs.dot(Vs.inverse() * bs)));

    // singular block: rank-adjusted df
    Matrix S = Matrix::Ones(2, 2);
    Vector bb(2);
    bb << 1.0, 1.0;
    const WaldResult sing = wald_test(std::vector<std::string>{"u", "v"}, bb, S, std::vector<std::string>{"u", "v"});
    CHECK(sing.df == 1);
    CHECK(sing.statistic == doctest::Approx(1.0));  // b' pinv(J) b = 4 / 4

    CHECK_THROWS_AS(wald_test(names, b, V, std::vector<std::string>{"nope"}), ConfigError);
    CHECK_THROWS_AS(wald_test(names, b, V, std::vector<std::string>{}), ConfigError);
}

TEST_CASE("wald test has nominal size under a true null") {
    // y = a_i + x + 0 * (x * c) + e; test the interaction coefficient on FE fits.
    int rejections = 0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        RandomSource rng(derive_seed(2024, static_cast<std::uint64_t>(r)));
        const std::size_t N = 40, T = 8;
        std::vector<std::size_t> idx;
        Matrix X(N * T, 2);
        Vector y(N * T);
        for (std::size_t i = 0; i < N; ++i) {
            const double a = rng.normal();
            for (std::size_t t = 0; t < T; ++t) {
                const auto row = static_cast<Eigen::Index>(i * T + t);
                idx.push_back(i);
                const double c = (t % 3 == 0) ? 1.0 : 0.0;
                X(row, 0) = rng.normal();
                X(row, 1) = X(row, 0) * c;
                y(row) = a + X(row, 0) + rng.normal();
            }
        }
        DesignMatrix d = make_design(idx, X, y);
        const MeanFit fit = fit_fixed_effects(d);
        if (wald_test(fit, std::vector<std::string>{"x1"}).p_value < 0.05) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / reps;
    MESSAGE("rejection rate " << rate);
    CHECK(rate >= 0.01);
    CHECK(rate <= 0.10);
}
