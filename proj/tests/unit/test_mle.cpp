#include <cmath>
#include <random>

#include <doctest.h>

#include "dyncausal/error.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/mle.hpp"
#include "dyncausal/random.hpp"

using namespace dyncausal;

namespace {

ParameterSpec local_level_spec() {
    ParameterSpec spec;
    spec.params = {{"V", ParameterRole::ObsVariance, ParameterTransform::Log, 0.5},
                   {"W", ParameterRole::StateVariance, ParameterTransform::Log, 0.05}};
    spec.build = [](std::span<const double> p) {
        return make_model(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, p[0]),
                          Matrix::Constant(1, 1, p[1]), Vector::Zero(1), Matrix::Constant(1, 1, kDiffusePriorScale));
    };
    return spec;
}

Matrix simulate_local_level(std::size_t n, double v, double w, std::uint64_t seed) {
    Rng rng = make_rng({seed});
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix x(static_cast<Eigen::Index>(n), 1);
    double level = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        level += std::sqrt(w) * z(rng);
        x(static_cast<Eigen::Index>(t), 0) = level + std::sqrt(v) * z(rng);
    }
    return x;
}

}  // namespace

TEST_CASE("Nelder-Mead minimizes a quadratic") {
    auto f = [](std::span<const double> x) { return (x[0] - 1.0) * (x[0] - 1.0) + 2.0 * (x[1] + 0.5) * (x[1] + 0.5); };
    const std::vector<double> steps{0.5, 0.5};
    const auto r = nelder_mead(f, {0.0, 0.0}, steps, 1e-12, 5000);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-4));
}

TEST_CASE("log transform round trip") {
    const auto spec = local_level_spec();
    const std::vector<double> natural{0.37, 1e-3};
    const auto back = spec.to_natural(spec.to_working(natural));
    CHECK(std::abs(back[0] - natural[0]) <= 1e-12 * natural[0]);
    CHECK(std::abs(back[1] - natural[1]) <= 1e-12 * natural[1]);
}

TEST_CASE("zero free parameters evaluate the fixed model") {
    ParameterSpec spec;
    spec.build = [](std::span<const double>) {
        return make_model(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
                          Matrix::Constant(1, 1, 0.0), Vector::Zero(1), Matrix::Constant(1, 1, 1.0));
    };
    const Matrix x = Matrix::Constant(1, 1, 2.0);
    const auto fit = fit_mle(spec, x);
    CHECK(fit.psi_hat.empty());
    CHECK(fit.loglik == doctest::Approx(log_likelihood(spec.build({}), x)));
}

TEST_CASE("local level fit beats the generating parameters") {
    const auto spec = local_level_spec();
    const Matrix x = simulate_local_level(400, 1.0, 0.01, 11);
    MleOptions opt;
    opt.n_starts = 3;
    const auto fit = fit_mle(spec, x, opt);
    const std::vector<double> truth{1.0, 0.01};
    CHECK(fit.loglik >= log_likelihood(spec.build(truth), x) - 1e-6);
    CHECK(fit.natural[0] == doctest::Approx(1.0).epsilon(0.3));
    CHECK(fit.starts.size() == 3);

    SUBCASE("profile check accepts the optimum") {
        const auto check = profile_check(spec, x, fit.psi_hat, 20, 3);
        CHECK(check.ok);
        CHECK(check.probes.size() == 20);
    }
    SUBCASE("profile check rejects a poor value") {
        const std::vector<double> poor = spec.to_working(std::vector<double>{5.0, 1.0});
        CHECK_FALSE(profile_check(spec, x, poor, 20, 3).ok);
    }
    SUBCASE("no probes is a vacuous pass") {
        const auto check = profile_check(spec, x, fit.psi_hat, 0);
        CHECK(check.ok);
        CHECK(check.probes.empty());
    }
}

TEST_CASE("fit is reproducible for a fixed seed") {
    const auto spec = local_level_spec();
    const Matrix x = simulate_local_level(200, 0.5, 0.05, 5);
    MleOptions opt;
    opt.n_starts = 2;
    opt.seed = 9;
    const auto a = fit_mle(spec, x, opt);
    const auto b = fit_mle(spec, x, opt);
    CHECK(a.psi_hat == b.psi_hat);
    CHECK(a.loglik == b.loglik);
}

TEST_CASE("every failing start raises an estimation error") {
    ParameterSpec spec;
    spec.params = {{"V", ParameterRole::ObsVariance, ParameterTransform::Log, 1.0}};
    spec.build = [](std::span<const double>) -> StateSpaceModel { throw InferenceError("broken", 0); };
    CHECK_THROWS_AS(fit_mle(spec, Matrix::Zero(3, 1)), EstimationError);
}
