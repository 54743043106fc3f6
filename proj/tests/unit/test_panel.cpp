#include <doctest.h>

#include "dyncausal/error.hpp"
#include "dyncausal/panel.hpp"

using namespace dyncausal;

namespace {

/// d units, n times, time-constant treatment, optional covariates.
PanelDataset make_panel(std::size_t n, const std::vector<double>& treated, std::vector<double> x_pre = {},
                        std::vector<double> z = {}, std::vector<int> g = {}) {
    PanelDataset p;
    const auto d = static_cast<Eigen::Index>(treated.size());
    for (Eigen::Index i = 0; i < d; ++i) p.units.push_back("u" + std::to_string(i + 1));
    for (std::size_t t = 0; t < n; ++t) p.times.push_back(static_cast<double>(t + 1));
    p.outcome = Matrix::Zero(static_cast<Eigen::Index>(n), d);
    p.treatment.resize(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < d; ++i) p.treatment.col(i).setConstant(treated[static_cast<std::size_t>(i)]);
    if (!x_pre.empty()) p.x_pre = Eigen::Map<Vector>(x_pre.data(), d);
    if (!z.empty()) {
        Matrix zm(static_cast<Eigen::Index>(n), d);
        for (Eigen::Index i = 0; i < d; ++i) zm.col(i).setConstant(z[static_cast<std::size_t>(i)]);
        p.z.push_back(zm);
    }
    if (!g.empty()) {
        p.g = Matrix::Zero(d, 1);
        for (Eigen::Index i = 0; i < d; ++i) p.g(i, 0) = g[static_cast<std::size_t>(i)];
        p.g_levels = {"0", "1"};
    }
    return p;
}

}  // namespace

TEST_CASE("shared design rows") {
    const auto data = make_panel(1, {1.0, 0.0}, {0.5, 0.5}, {0.2, 0.2}, {1, 1});
    const auto formula = ModelFormula::parse("y ~ z + x_pre*T + T:g");
    const Matrix f = build_design(data, formula, 0);
    Matrix expected(2, 6);
    expected << 1, 0.5, 0.2, 1, 0.5, 1,  //
        1, 0.5, 0.2, 0, 0, 0;
    CHECK(f == expected);

    SUBCASE("counterfactual flips the treatment columns") {
        const Matrix fc = build_counterfactual_design(data, formula, 0);
        Matrix flipped(2, 6);
        flipped << 1, 0.5, 0.2, 0, 0, 0,  //
            1, 0.5, 0.2, 1, 0.5, 1;
        CHECK(fc == flipped);
        const PanelDataset twice = [&] {
            PanelDataset c = data;
            c.treatment.row(0) = flip_treatment(flip_treatment(data.treatment.row(0).transpose())).transpose();
            return c;
        }();
        CHECK(build_design(twice, formula, 0) == f);
    }
}

TEST_CASE("two-unit intercept and treatment design") {
    const auto data = make_panel(1, {1.0, 0.0});
    Matrix expected(2, 2);
    expected << 1, 1, 1, 0;
    CHECK(build_design(data, ModelFormula::parse("y ~ T"), 0) == expected);
}

TEST_CASE("all-control panel flips to the all-treated design") {
    auto all_control = make_panel(1, {0.0, 0.0}, {0.3, 0.6});
    auto all_treated = make_panel(1, {1.0, 1.0}, {0.3, 0.6});
    const auto formula = ModelFormula::parse("y ~ x_pre*T");
    CHECK(build_counterfactual_design(all_control, formula, 0) == build_design(all_treated, formula, 0));
}

TEST_CASE("unit-specific design") {
    // row 0 is the untreated pre-period the layout needs
    auto data = make_panel(2, {1.0, 0.0}, {1.0, 2.0}, {3.0, 4.0}, {0, 1});
    data.treatment.row(0).setZero();
    auto formula = ModelFormula::parse("y ~ 0 + x_pre + z + x_pre*T + T:g");
    formula.unit_specific = true;
    Matrix expected(2, 7);
    expected << 1, 0, 3, 0, 1, 1, 0,  //
        0, 2, 0, 4, 0, 0, 0;
    CHECK(build_unit_specific_design(data, formula, 1) == expected);

    SUBCASE("no treatment leaves the treatment block zero") {
        data.treatment.setZero();
        const Matrix f = build_unit_specific_design(data, formula, 1);
        CHECK(f.rightCols(3).isZero());
    }
    SUBCASE("single treated unit without interactions") {
        auto one = make_panel(2, {1.0}, {1.0}, {3.0});
        one.treatment(0, 0) = 0.0;
        auto simple = ModelFormula::parse("y ~ 0 + x_pre + z + T");
        simple.unit_specific = true;
        CHECK(build_unit_specific_design(one, simple, 1).cols() == 3);
    }
}

TEST_CASE("dose treatments have no counterfactual flip") {
    Vector dose(2);
    dose << 0.5, 1.0;
    CHECK_THROWS_AS(flip_treatment(dose), InputError);
}

TEST_CASE("identifiability diagnostics") {
    const auto formula = ModelFormula::parse("y ~ T");
    CHECK(validate_identifiability(make_panel(3, {1.0, 1.0}), formula).code == "no_control_units");
    CHECK(validate_identifiability(make_panel(3, {0.0, 0.0}), formula).code == "no_treated_units");
    CHECK(validate_identifiability(make_panel(3, {1.0, 0.0}), formula).ok);

    auto varying = make_panel(3, {0.0, 0.0});
    varying.treatment(2, 1) = 1.0;
    const auto dg = validate_identifiability(varying, formula);
    CHECK(dg.code == "time_varying_treatment");
    CHECK(dg.message.find("u2") != std::string::npos);

    auto us = formula;
    us.unit_specific = true;
    CHECK(validate_identifiability(varying, us).ok);
    auto no_pre = make_panel(2, {1.0, 0.0});
    no_pre.treatment(0, 1) = 1.0;
    no_pre.treatment(0, 0) = 1.0;
    no_pre.treatment(1, 1) = 1.0;
    CHECK(validate_identifiability(no_pre, us).code == "no_pre_period");

    CHECK(validate_identifiability(make_panel(3, {1.0, 0.0}), ModelFormula::parse("y ~ x_pre*T")).code == "missing_covariate");
}

TEST_CASE("model assembly") {
    const auto data = make_panel(4, {1.0, 0.0, 1.0, 0.0}, {0.1, 0.4, 0.7, 0.9}, {0.2, 0.1, 0.3, 0.5}, {0, 0, 1, 1});
    SUBCASE("full shared formula") {
        const auto pm = assemble_model(data, ModelFormula::parse("y ~ z + x_pre*T + T:g"));
        CHECK(pm.model.state_dim() == 6);
        Matrix g = Matrix::Identity(6, 6);
        g(3, 3) = g(4, 4) = g(5, 5) = 0.9;
        CHECK(pm.model.transition(0) == g);
        // sigma2, 6 state variances, 3 AR coefficients
        CHECK(pm.spec.size() == 10);
        CHECK(pm.spec.params[0].name == "sigma2");
        CHECK(pm.spec.params[7].name == "c_T");
    }
    SUBCASE("random-walk effect is the two-state dynamic regression") {
        auto f = ModelFormula::parse("y ~ T");
        f.treatment_dynamics = TreatmentDynamics::RandomWalk;
        const auto pm = assemble_model(data, f);
        CHECK(pm.model.state_dim() == 2);
        CHECK(pm.model.transition(0) == Matrix::Identity(2, 2));
    }
    SUBCASE("unit-specific state count") {
        auto small = make_panel(3, {1.0, 0.0, 0.0}, {0.1, 0.2, 0.3}, {1.0, 2.0, 3.0}, {0, 1, 1});
        small.treatment(0, 0) = 0.0;
        auto f = ModelFormula::parse("y ~ 0 + x_pre + z + x_pre*T + T:g");
        f.unit_specific = true;
        const auto pm = assemble_model(small, f);
        CHECK(pm.model.state_dim() == 9);
    }
}

TEST_CASE("formula parsing") {
    const auto f = ModelFormula::parse("y ~ z + x_pre*T + T:g");
    CHECK(f.intercept);
    CHECK(f.x_pre);
    CHECK(f.z);
    CHECK(f.treatment);
    CHECK(f.treatment_x_pre);
    CHECK(f.treatment_g);
    CHECK_THROWS_AS(ModelFormula::parse("y ~ w"), InputError);
    CHECK_FALSE(ModelFormula::parse("y ~ 0 + T").intercept);
}

TEST_CASE("missing covariate values are rejected") {
    auto data = make_panel(2, {1.0, 0.0}, {0.1, 0.2}, {0.5, 0.5});
    data.z[0](1, 0) = std::nan("");
    CHECK_THROWS_AS(build_design(data, ModelFormula::parse("y ~ z + T"), 1), InputError);
}
