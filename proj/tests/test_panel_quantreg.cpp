#include "capstruct/errors.hpp"
#include "capstruct/panel_quantreg.hpp"
#include "capstruct/simulate.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace capstruct;
using test_support::make_design;

namespace {

// firm 0: y = x; firm 1: y = 10 + x
DesignMatrix two_firm_shift() {
    Matrix X(8, 1);
    Vector y(8);
    std::vector<std::size_t> idx;
    for (int i = 0; i < 8; ++i) {
        const std::size_t f = i < 4 ? 0 : 1;
        idx.push_back(f);
        X(i, 0) = (i % 4) * 1.5 - 1.0;
        y(i) = (f == 1 ? 10.0 : 0.0) + X(i, 0);
    }
    return make_design(idx, X, y);
}

double panel_objective(const PanelQrFit& fit, const DesignMatrix& d) {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        obj += check_loss(fit.tau, d.y(i) - fit.alphas(static_cast<Eigen::Index>(d.firm_index[i])) -
                                       d.X.row(i).dot(fit.coefficients));
    }
    return obj + fit.lambda * fit.alphas.cwiseAbs().sum();
}

void check_certified(const PanelQrFit& fit) {
    REQUIRE(fit.certificate.has_value());
    CHECK(fit.certificate->pass);
}

}  // namespace

TEST_CASE("noiseless location shift") {
    const DesignMatrix d = two_firm_shift();
    const PanelQrFit fit = fit_panel_quantile(d, 0.5);
    check_certified(fit);
    CHECK(fit.coefficients(0) == doctest::Approx(1.0));
    CHECK(fit.alphas(0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(fit.alphas(1) == doctest::Approx(10.0));
    CHECK(std::abs(fit.objective) < 1e-8);

    const double xs[] = {1.0};
    CHECK(predict_conditional_quantile(fit, "f1", xs) == doctest::Approx(11.0));
    const double zero[] = {0.0};
    CHECK(predict_conditional_quantile(fit, "f0", zero) == doctest::Approx(fit.alphas(0)));
    CHECK_THROWS_AS(predict_conditional_quantile(fit, "nobody", xs), DataError);
    CHECK_THROWS_AS(predict_conditional_quantile(fit, "f0", std::span<const double>()), ConfigError);
}

TEST_CASE("penalty shrinks effects and raises the objective") {
    const DesignMatrix d = two_firm_shift();
    const PanelQrFit free = fit_panel_quantile(d, 0.5);
    PanelQrOptions big;
    big.lambda = 1e6;
    const PanelQrFit shrunk = fit_panel_quantile(d, 0.5, big);
    CHECK(shrunk.alphas.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(shrunk.objective > free.objective);
    CHECK_FALSE(shrunk.certificate.has_value());
    CHECK(std::abs(panel_objective(shrunk, d) - shrunk.objective) < 1e-8 * std::max(1.0, shrunk.objective));
}

TEST_CASE("objective is nonincreasing as lambda decreases") {
    LocationShiftConfig cfg;
    cfg.firms = 15;
    cfg.years = 6;
    cfg.seed = 4;
    const DesignMatrix d = simulate_location_shift(cfg);
    double prev = -1.0;
    for (double lambda : {0.0, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0}) {
        PanelQrOptions opt;
        opt.lambda = lambda;
        const PanelQrFit fit = fit_panel_quantile(d, 0.4, opt);
        if (lambda == 0.0) check_certified(fit);
        CHECK(std::abs(panel_objective(fit, d) - fit.objective) < 1e-8 * std::max(1.0, fit.objective));
        CHECK(fit.objective >= prev - 1e-8);
        prev = fit.objective;
    }
}

TEST_CASE("one firm equals cross-sectional QR with an intercept") {
    RandomSource rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 30;
        Matrix X = test_support::random_matrix(rng, n, 2);
        Vector y = 1.0 + X.col(0).array() * 0.5 + rng.normal();
        for (Eigen::Index i = 0; i < n; ++i) y(i) += rng.student_t(3);
        const DesignMatrix d = make_design(std::vector<std::size_t>(n, 0), X, y);
        const double tau = 0.1 + 0.8 * rng.uniform();
        const PanelQrFit panel = fit_panel_quantile(d, tau);
        check_certified(panel);
        Matrix Z(n, 3);
        Z.col(0).setOnes();
        Z.rightCols(2) = X;
        const QrFit cross = test_support::certified_fit(Z, y, tau);
        CHECK(std::abs(panel.objective - cross.objective) < 1e-7);
    }
}

TEST_CASE("shifting one firm moves only its effect") {
    RandomSource rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        LocationShiftConfig cfg;
        cfg.firms = 8;
        cfg.years = 7;
        cfg.seed = 100 + static_cast<std::uint64_t>(trial);
        DesignMatrix d = simulate_location_shift(cfg);
        const double tau = 0.2 + 0.6 * rng.uniform();
        const PanelQrFit base = fit_panel_quantile(d, tau);
        const std::size_t target = rng.index(d.firm_ids.size());
        const double k = rng.normal(0, 5);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            if (d.firm_index[i] == target) d.y(i) += k;
        const PanelQrFit moved = fit_panel_quantile(d, tau);
        check_certified(moved);
        CHECK(std::abs(moved.objective - base.objective) < 1e-7 * std::max(1.0, base.objective));
        // coefficients compared only where the optimum is unique (continuous data)
        CHECK((moved.coefficients - base.coefficients).cwiseAbs().maxCoeff() < 1e-6);
        for (Eigen::Index g = 0; g < base.alphas.size(); ++g) {
            const double expect = base.alphas(g) + (static_cast<std::size_t>(g) == target ? k : 0.0);
            CHECK(std::abs(moved.alphas(g) - expect) < 1e-6);
        }
    }
}

TEST_CASE("single-row firms are dropped with a warning") {
    LocationShiftConfig cfg;
    cfg.firms = 6;
    cfg.years = 5;
    DesignMatrix d = simulate_location_shift(cfg);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < static_cast<std::size_t>(d.rows()); ++i)
        if (d.firm_index[i] != 2 || i % 5 == 0) keep.push_back(i);
    d = d.select_rows(keep);
    const PanelQrFit fit = fit_panel_quantile(d, 0.5);
    REQUIRE(fit.dropped_firms.size() == 1);
    CHECK(fit.dropped_firms[0] == d.firm_ids[2]);
    CHECK(fit.warnings.front().find(d.firm_ids[2]) != std::string::npos);
    CHECK(fit.alphas.size() == 5);
}

TEST_CASE("collinear columns are rejected by name") {
    LocationShiftConfig cfg;
    cfg.firms = 6;
    cfg.years = 5;
    DesignMatrix d = simulate_location_shift(cfg);
    d.X.conservativeResize(Eigen::NoChange, 2);
    for (Eigen::Index i = 0; i < d.rows(); ++i) d.X(i, 1) = static_cast<double>(d.firm_index[i]);
    d.names.push_back("firm_level");
    d.roles.push_back(ColumnRole::firm_factor);
    try {
        fit_panel_quantile(d, 0.5);
        FAIL("expected collinearity error");
    } catch (const EstimationError& e) {
        CHECK(std::string(e.what()).find("firm_level") != std::string::npos);
    }
}

TEST_CASE("tau grid") {
    LocationShiftConfig cfg;
    cfg.seed = 3;
    const DesignMatrix d = simulate_location_shift(cfg);

    SUBCASE("singleton grid equals a direct fit") {
        const std::vector<double> taus{0.5};
        const auto grid = fit_tau_grid(d, taus);
        REQUIRE(grid.size() == 1);
        REQUIRE(grid[0].fit);
        const PanelQrFit direct = fit_panel_quantile(d, 0.5);
        CHECK(grid[0].fit->coefficients == direct.coefficients);
        CHECK(grid[0].fit->objective == direct.objective);
    }
    SUBCASE("location-shift slopes are flat and predictions do not cross") {
        const auto taus = decile_grid();
        REQUIRE(taus.size() == 9);
        const auto grid = fit_tau_grid(d, taus);
        double lo = 1e9, hi = -1e9;
        double prev = -1e300;
        for (const auto& cell : grid) {
            REQUIRE(cell.fit);
            check_certified(*cell.fit);
            const double b = cell.fit->coefficients(0);
            lo = std::min(lo, b);
            hi = std::max(hi, b);
            const double q = predict_at_design_mean(*cell.fit, d);
            CHECK(q >= prev - 1e-6);
            prev = q;
        }
        CHECK(hi - lo < 0.15);
    }
    SUBCASE("a failing tau does not abort the grid") {
        const std::vector<double> taus{0.25, 0.5, 0.75};
        const PanelQrFitter flaky = [](const DesignMatrix& m, double tau, const PanelQrOptions& o) {
            if (tau == 0.5) throw EstimationError("injected collinear design");
            return fit_panel_quantile(m, tau, o);
        };
        const auto grid = fit_tau_grid(d, taus, {}, flaky);
        REQUIRE(grid.size() == 3);
        CHECK(grid[0].fit.has_value());
        CHECK_FALSE(grid[1].fit.has_value());
        CHECK(grid[1].error.find("injected") != std::string::npos);
        CHECK(grid[2].fit.has_value());
        CHECK(grid[2].tau == 0.75);
    }
    SUBCASE("invalid grids") {
        CHECK_THROWS_AS(fit_tau_grid(d, std::vector<double>{0.5, 0.4}), ConfigError);
        CHECK_THROWS_AS(fit_tau_grid(d, std::vector<double>{0.0, 0.4}), ConfigError);
        CHECK_THROWS_AS(fit_tau_grid(d, std::vector<double>{0.5, 0.5}), ConfigError);
    }
}

TEST_CASE("panel bootstrap is deterministic") {
    LocationShiftConfig cfg;
    cfg.firms = 20;
    cfg.years = 6;
    const DesignMatrix d = simulate_location_shift(cfg);
    PanelQrOptions opt;
    opt.bootstrap = 30;
    opt.seed = 77;
    const PanelQrFit a = fit_panel_quantile(d, 0.5, opt);
    const PanelQrFit b = fit_panel_quantile(d, 0.5, opt);
    REQUIRE(a.standard_errors.size() == 1);
    CHECK(a.standard_errors(0) > 0.0);
    CHECK(a.standard_errors(0) == b.standard_errors(0));
    CHECK(a.bootstrap_replicates == 30);
    opt.seed = 78;
    CHECK(fit_panel_quantile(d, 0.5, opt).standard_errors(0) != a.standard_errors(0));
}
