#include <cmath>

#include <doctest.h>

#include "dyncausal/benchmark.hpp"
#include "dyncausal/error.hpp"
#include "dyncausal/simulate.hpp"

using namespace dyncausal;

namespace {

std::pair<int, int> treated_by_group(const Vector& t) {
    const auto half = t.size() / 2;
    return {static_cast<int>(t.head(half).sum()), static_cast<int>(t.tail(half).sum())};
}

}  // namespace

TEST_CASE("assignment mechanisms") {
    SimConfig c;
    c.d = 20;
    c.assignment = 1;
    CHECK(treated_by_group(assign(c)) == std::pair{5, 5});
    c.assignment = 2;
    CHECK(treated_by_group(assign(c)) == std::pair{1, 9});
    c.assignment = 3;
    CHECK(treated_by_group(assign(c)) == std::pair{9, 1});
    for (int a = 1; a <= 3; ++a) {
        c.assignment = a;
        CHECK(assign(c).sum() == 10.0);
    }
    c.d = 7;
    CHECK_THROWS_AS(assign(c), InputError);
}

TEST_CASE("generation is reproducible and consistent") {
    SimConfig c;
    c.n = 30;
    c.horizon = 5;
    c.pre_period = 4;
    c.seed = 12;
    const auto a = generate(c);
    const auto b = generate(c);
    CHECK(a.data.outcome == b.data.outcome);
    CHECK(a.truth.ate == b.truth.ate);
    c.seed = 13;
    CHECK(generate(c).data.outcome != a.data.outcome);

    CHECK(a.data.n() == 34);
    CHECK(a.truth.effect_times.size() == 35);
    CHECK(a.truth.effect_times.front() == 1.0);
    CHECK(a.truth.future.times.size() == 5);
    for (Eigen::Index r = 0; r < a.data.outcome.rows(); ++r)
        for (Eigen::Index i = 0; i < a.data.outcome.cols(); ++i) {
            const double expected = a.data.treatment(r, i) == 1.0 ? a.truth.x1(r, i) : a.truth.x0(r, i);
            CHECK(a.data.outcome(r, i) == expected);
            if (r < 4) CHECK(a.data.treatment(r, i) == 0.0);
        }
    // shared-noise potential outcomes: SATE equals ATE in model 1
    for (std::size_t k = 0; k < a.truth.sate.size(); ++k) CHECK(a.truth.sate[k] == doctest::Approx(a.truth.ate[k]));
}

TEST_CASE("multiplicative model without noise") {
    SimConfig c;
    c.model_id = 2;
    c.n = 10;
    c.horizon = 0;
    c.noise_scale = 0.0;
    const auto s = generate(c);
    for (std::size_t k = 0; k < 10; ++k) {
        const double factor = 1.5 + 0.5 * std::pow(0.9, static_cast<double>(k + 1));
        const auto r = static_cast<Eigen::Index>(k);
        CHECK(s.truth.x1(r, 0) == doctest::Approx(factor * s.truth.x0(r, 0)));
    }
}

TEST_CASE("truth series lookup") {
    SimConfig c;
    c.n = 5;
    c.horizon = 0;
    const auto s = generate(c);
    CHECK(&s.truth.series("ATE") == &s.truth.ate);
    CHECK(&s.truth.series("CATE[x_pre=0.5]") == &s.truth.cate);
    CHECK(&s.truth.series("MCATE[g=1]") == &s.truth.mcate_g1);
    CHECK_THROWS(s.truth.series("nonsense"));
}

TEST_CASE("scoring") {
    const std::vector<double> times{1, 2};
    const std::vector<double> truth{0.0, 0.0};
    EffectSeries est;
    est.points = {{1, 1.0, 0.75, 1.25, Period::Past, 0}, {2, -1.0, -1.25, -0.75, Period::Past, 0}};
    auto s = score(times, truth, est, Period::Past);
    CHECK(s.mse == doctest::Approx(1.0));
    CHECK(s.coverage == doctest::Approx(0.0));
    CHECK(s.width == doctest::Approx(0.5));
    CHECK(s.bias == doctest::Approx(0.0));
    CHECK(s.n == 2);

    est.points = {{1, 0.0, -1.0, 1.0, Period::Past, 0}, {2, 0.0, -1.0, 1.0, Period::Past, 0}};
    s = score(times, truth, est, Period::Past);
    CHECK(s.mse == 0.0);
    CHECK(s.coverage == 1.0);
    CHECK(s.width == doctest::Approx(2.0));

    SUBCASE("unknown times are rejected") {
        est.points.push_back({9, 0.0, 0.0, 0.0, Period::Past, 0});
        CHECK_THROWS(score(times, truth, est, Period::Past));
    }
    SUBCASE("other periods are ignored") {
        est.points[0].period = Period::Future;
        CHECK(score(times, truth, est, Period::Past).n == 1);
    }
}

TEST_CASE("single-replication benchmark") {
    BenchmarkConfig cfg;
    cfg.sim.n = 40;
    cfg.sim.horizon = 5;
    cfg.sim.seed = 3;
    cfg.replications = 1;
    cfg.methods = {Method::CausalTransfer, Method::BayesianImputation};
    EffectRequest ate;
    ate.estimand = Estimand::ATE;
    cfg.estimands = {ate};
    cfg.B = 200;
    cfg.n_starts = 1;
    cfg.threads = 1;
    const auto report = run_benchmark(cfg);
    const auto& ct = report.cell(Method::CausalTransfer, "ATE", Period::Past);
    CHECK(ct.replications == 1);
    CHECK(ct.per_replication.size() == 1);
    CHECK(ct.mse == doctest::Approx(ct.per_replication[0].mse));
    CHECK(report.cell(Method::CausalTransfer, "ATE", Period::Future).per_replication[0].n == 5);
    CHECK_THROWS(report.cell(Method::BayesianImputation, "ATE", Period::Future));
    CHECK(report.to_csv().find("causal-transfer") != std::string::npos);
}
