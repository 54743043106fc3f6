#include "dyncausal/robust_filter.hpp"

#include <cmath>
#include <numbers>

#include "dyncausal/error.hpp"

namespace dyncausal {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double objective(const Vector& r, const RobustConfig& config) {
    if (config.loss == RobustLoss::Squared) return 0.5 * r.squaredNorm();
    return huber_objective(r, config.k);
}

Vector irls_weights(const Vector& r, const RobustConfig& config) {
    Vector w = Vector::Ones(r.size());
    if (config.loss == RobustLoss::Huber)
        for (Eigen::Index j = 0; j < r.size(); ++j) {
            const double a = std::abs(r[j]);
            if (a > config.k) w[j] = config.k / a;
        }
    return w;
}

}  // namespace

void RobustConfig::validate() const {
    if (!(k > 0)) throw InputError("Huber constant k must be positive");
    if (max_irls_iters < 1) throw InputError("max_irls_iters must be at least 1");
    if (!(irls_tol >= 0)) throw InputError("irls_tol must be non-negative");
}

double huber_objective(const Vector& residuals, double k) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < residuals.size(); ++j) {
        const double a = std::abs(residuals[j]);
        total += a <= k ? 0.5 * a * a : k * a - 0.5 * k * k;
    }
    return total;
}

RobustFilterResult robust_filter(const StateSpaceModel& model, const Matrix& observations, const RobustConfig& config) {
    config.validate();
    const auto n = static_cast<std::size_t>(observations.rows());
    model.validate(n);
    const auto d = static_cast<Eigen::Index>(model.obs_dim());
    const auto m = static_cast<Eigen::Index>(model.state_dim());
    if (observations.cols() != d) throw InputError("observations do not match the observation dimension");
    const Matrix v = model.effective_obs_cov();

    RobustFilterResult out;
    FilterResult& fr = out.filtered;
    Vector mean = model.prior_mean;
    Matrix cov = model.prior_cov;
    double total = 0.0;

    for (std::size_t t = 0; t < n; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const Matrix& g = model.transition(t);
        Vector a = g * mean;
        if (model.state_offset.size() != 0) a += model.state_offset;
        Matrix r = g * cov * g.transpose() + model.state_cov;
        symmetrize(r);
        const Matrix& f_full = model.design(t);

        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < d; ++i)
            if (!std::isnan(observations(ti, i))) idx.push_back(i);
        const auto k = static_cast<Eigen::Index>(idx.size());

        bool converged = true, monotone = true;
        std::size_t iters = 0, down = 0;
        double term = 0.0;
        if (k == 0) {
            mean = a;
            cov = r;
        } else {
            Matrix f(k, m), vk(k, k);
            Vector x(k);
            for (Eigen::Index j = 0; j < k; ++j) {
                f.row(j) = f_full.row(idx[static_cast<std::size_t>(j)]);
                x[j] = observations(ti, idx[static_cast<std::size_t>(j)]);
                for (Eigen::Index l = 0; l < k; ++l) vk(j, l) = v(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(l)]);
            }
            // Whitening of blockdiag(R_t, V): premultiply each block by L^{-1}.
            auto lr = robust_cholesky(r);
            auto lv = robust_cholesky(vk);
            if (!lr || !lv) throw InferenceError("stacked covariance blockdiag(R_t, V) is singular", t);
            const Matrix lr_l = lr->matrixL();
            const Matrix lv_l = lv->matrixL();
            Matrix design(m + k, m);
            design.topRows(m) = lr_l.triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
            design.bottomRows(k) = lv_l.triangularView<Eigen::Lower>().solve(f);
            Vector y(m + k);
            y.head(m) = lr_l.triangularView<Eigen::Lower>().solve(a);
            y.tail(k) = lv_l.triangularView<Eigen::Lower>().solve(x);

            auto solve = [&](const Vector& w, Matrix* info_out) {
                Matrix info = design.transpose() * w.asDiagonal() * design;
                symmetrize(info);
                auto llt = robust_cholesky(info);
                if (!llt) throw InferenceError("weighted normal equations are singular", t);
                if (info_out) *info_out = llt->solve(Matrix::Identity(m, m));
                return Vector(llt->solve(design.transpose() * (w.asDiagonal() * y)));
            };

            Vector weights = Vector::Ones(m + k);
            Matrix c_ls;
            Vector theta = solve(weights, &c_ls);  // squared-loss solution = Kalman update
            Vector resid = y - design * theta;
            double obj = objective(resid, config);
            if (config.loss == RobustLoss::Huber) {
                converged = false;
                for (iters = 1; iters <= config.max_irls_iters; ++iters) {
                    weights = irls_weights(resid, config);
                    const Vector next = solve(weights, nullptr);
                    const Vector next_resid = y - design * next;
                    const double next_obj = objective(next_resid, config);
                    if (next_obj > obj * (1.0 + 1e-12) + 1e-300) monotone = false;
                    const double change = std::abs(obj - next_obj);
                    theta = next;
                    resid = next_resid;
                    const double prev = obj;
                    obj = next_obj;
                    if (change <= config.irls_tol * std::max(std::abs(prev), 1e-300)) {
                        converged = true;
                        break;
                    }
                }
                if (iters > config.max_irls_iters) iters = config.max_irls_iters;
                weights = irls_weights(resid, config);
            }
            for (Eigen::Index j = 0; j < weights.size(); ++j)
                if (weights[j] < 1.0) ++down;
            mean = theta;
            if (config.robust_covariance && config.loss == RobustLoss::Huber)
                solve(weights, &cov);
            else
                cov = c_ls;
            symmetrize(cov);

            // Predictive log density at the prior prediction, as in the standard filter.
            Matrix q = f * r * f.transpose() + vk;
            symmetrize(q);
            auto lq = robust_cholesky(q);
            if (!lq) throw InferenceError("forecast covariance Q_t is singular", t);
            const Vector e = x - f * a;
            term = -0.5 * (static_cast<double>(k) * kLog2Pi + log_det(*lq) + e.dot(lq->solve(e)));
        }
        total += term;

        fr.predicted_mean.push_back(a);
        fr.predicted_cov.push_back(r);
        Vector fm = f_full * a;
        Matrix q = f_full * r * f_full.transpose() + v;
        symmetrize(q);
        fr.forecast_error.push_back(observations.row(ti).transpose() - fm);
        fr.forecast_mean.push_back(std::move(fm));
        fr.forecast_cov.push_back(std::move(q));
        fr.filtered_mean.push_back(mean);
        fr.filtered_cov.push_back(cov);
        fr.loglik_terms.push_back(term);
        out.not_converged.push_back(!converged);
        out.monotone.push_back(monotone);
        out.iterations.push_back(iters);
        out.downweighted.push_back(down);
    }
    fr.loglik = total;
    return out;
}

}  // namespace dyncausal
