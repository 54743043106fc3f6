#include <cmath>
#include <random>

#include <doctest.h>

#include "../common/oracle.hpp"
#include "dyncausal/error.hpp"
#include "dyncausal/kalman.hpp"
#include "dyncausal/robust_filter.hpp"

using namespace dyncausal;

namespace {

StateSpaceModel local_level(double v, double w) {
    return make_model(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, v),
                      Matrix::Constant(1, 1, w), Vector::Zero(1), Matrix::Constant(1, 1, 10.0));
}

}  // namespace

TEST_CASE("squared loss reproduces the Kalman filter") {
    Rng rng = make_rng({77});
    RobustConfig cfg;
    cfg.loss = RobustLoss::Squared;
    for (int rep = 0; rep < 30; ++rep) {
        const auto inst = oracle::random_instance(rng, 12, 4, 4);
        const auto k = filter(inst.model, inst.observations);
        const auto r = robust_filter(inst.model, inst.observations, cfg);
        for (std::size_t t = 0; t < k.size(); ++t) {
            CHECK(oracle::rel_err(r.filtered.filtered_mean[t], k.filtered_mean[t]) < 1e-8);
            CHECK(oracle::rel_err(r.filtered.filtered_cov[t], k.filtered_cov[t]) < 1e-8);
        }
    }
}

TEST_CASE("Huber inside the quadratic zone matches the standard filter") {
    const auto model = local_level(1.0, 0.01);
    const Matrix x = Matrix::Constant(25, 1, 0.0);
    const auto k = filter(model, x);
    const auto r = robust_filter(model, x);
    for (std::size_t t = 0; t < k.size(); ++t)
        CHECK(std::abs(r.filtered.filtered_mean[t][0] - k.filtered_mean[t][0]) < 1e-6);
}

TEST_CASE("a single gross outlier is downweighted") {
    const auto model = local_level(1.0, 0.05);
    Rng rng = make_rng({5});
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix clean(40, 1);
    double level = 0.0;
    for (Eigen::Index t = 0; t < 40; ++t) {
        level += std::sqrt(0.05) * z(rng);
        clean(t, 0) = level + z(rng);
    }
    Matrix dirty = clean;
    dirty(20, 0) += 50.0;
    const auto ref = filter(model, clean);
    const auto std_f = filter(model, dirty);
    const auto rob = robust_filter(model, dirty);
    const double robust_shift = std::abs(rob.filtered.filtered_mean[20][0] - ref.filtered_mean[20][0]);
    const double standard_shift = std::abs(std_f.filtered_mean[20][0] - ref.filtered_mean[20][0]);
    CHECK(robust_shift < standard_shift);
    CHECK(rob.downweighted[20] >= 1);
    for (std::size_t t = 0; t < rob.monotone.size(); ++t) CHECK(rob.monotone[t]);
}

TEST_CASE("Huber objective") {
    Vector r(3);
    r << 0.5, -2.0, 1.0;
    // 0.125 + (2 * 1 - 0.5) + 0.5
    CHECK(huber_objective(r, 1.0) == doctest::Approx(0.125 + 1.5 + 0.5));
}

TEST_CASE("robust config validation") {
    RobustConfig cfg;
    cfg.k = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg.k = 1.0;
    cfg.max_irls_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}
