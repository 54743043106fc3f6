#include "dyncausal/kalman.hpp"

#include <cmath>
#include <numbers>

#include "dyncausal/error.hpp"

namespace dyncausal {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool is_diagonal(const Matrix& a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j && a(i, j) != 0.0) return false;
    return true;
}

/// Shared forward pass. `Store` decides whether per-step quantities are
/// kept; the arithmetic is the same either way so that the likelihood
/// from `filter` and `log_likelihood` agree bit for bit.
class ForwardPass {
public:
    ForwardPass(const StateSpaceModel& model, const Matrix& observations)
        : model_(model), obs_(observations), v_eff_(model.effective_obs_cov()) {
        const auto n = static_cast<std::size_t>(observations.rows());
        model.validate(n);
        if (observations.cols() != static_cast<Eigen::Index>(model.obs_dim()))
            throw InputError("observations have " + std::to_string(observations.cols()) +
                             " columns, model expects " + std::to_string(model.obs_dim()));
        diagonal_v_ = is_diagonal(v_eff_);
        if (diagonal_v_) {
            v_diag_ = v_eff_.diagonal();
            diagonal_v_ = (v_diag_.array() > 0).all();
        }
    }

    template <bool Store>
    double run(FilterResult* out, bool store_gain) {
        const std::size_t n = static_cast<std::size_t>(obs_.rows());
        const Eigen::Index d = static_cast<Eigen::Index>(model_.obs_dim());
        const Eigen::Index m = static_cast<Eigen::Index>(model_.state_dim());
        const bool has_offset = model_.state_offset.size() != 0;

        if constexpr (Store) {
            out->predicted_mean.reserve(n);
            out->predicted_cov.reserve(n);
            out->forecast_mean.reserve(n);
            out->forecast_cov.reserve(n);
            out->filtered_mean.reserve(n);
            out->filtered_cov.reserve(n);
            out->forecast_error.reserve(n);
            out->loglik_terms.reserve(n);
            if (store_gain) out->gain.reserve(n);
        }

        Vector mean = model_.prior_mean;
        Matrix cov = model_.prior_cov;
        Vector a(m);
        Matrix r(m, m);
        std::vector<Eigen::Index> idx;
        idx.reserve(static_cast<std::size_t>(d));
        double total = 0.0;

        for (std::size_t t = 0; t < n; ++t) {
            const Matrix& g = model_.transition(t);
            a.noalias() = g * mean;
            if (has_offset) a += model_.state_offset;
            r.noalias() = g * cov * g.transpose();
            r += model_.state_cov;
            symmetrize(r);

            const Matrix& f_full = model_.design(t);
            idx.clear();
            for (Eigen::Index i = 0; i < d; ++i)
                if (!std::isnan(obs_(static_cast<Eigen::Index>(t), i))) idx.push_back(i);
            const auto k = static_cast<Eigen::Index>(idx.size());

            Matrix gain;
            double term = 0.0;
            if (k == 0) {
                mean = a;
                cov = r;
                if (Store && store_gain) gain = Matrix::Zero(m, d);
            } else {
                Matrix f_obs(k, m);
                Vector e(k);
                for (Eigen::Index j = 0; j < k; ++j) {
                    f_obs.row(j) = f_full.row(idx[j]);
                    e[j] = obs_(static_cast<Eigen::Index>(t), idx[j]);
                }
                e.noalias() -= f_obs * a;

                bool done = false;
                double log_det_q = 0.0, quad = 0.0;
                Matrix gain_obs;
                if (diagonal_v_ && k > m) {
                    // Information form: C = (R^-1 + F' V^-1 F)^-1, cheaper when d > m.
                    Eigen::LLT<Matrix> r_llt(r);
                    if (r_llt.info() == Eigen::Success) {
                        Vector dinv(k);
                        double log_det_v = 0.0;
                        for (Eigen::Index j = 0; j < k; ++j) {
                            dinv[j] = 1.0 / v_diag_[idx[j]];
                            log_det_v += std::log(v_diag_[idx[j]]);
                        }
                        Matrix precision = r_llt.solve(Matrix::Identity(m, m));
                        const Matrix scaled = dinv.asDiagonal() * f_obs;
                        precision.noalias() += f_obs.transpose() * scaled;
                        symmetrize(precision);
                        Eigen::LLT<Matrix> p_llt(precision);
                        if (p_llt.info() == Eigen::Success) {
                            cov = p_llt.solve(Matrix::Identity(m, m));
                            symmetrize(cov);
                            const Vector de = dinv.cwiseProduct(e);
                            const Vector u = f_obs.transpose() * de;
                            mean = a + cov * u;
                            log_det_q = log_det_v + log_det(r_llt) + log_det(p_llt);
                            quad = e.dot(de) - u.dot(cov * u);
                            if (Store && store_gain) gain_obs = cov * scaled.transpose();
                            done = true;
                        }
                    }
                }
                if (!done) {
                    Matrix q(k, k);
                    const Matrix fr = f_obs * r;
                    q.noalias() = fr * f_obs.transpose();
                    for (Eigen::Index i = 0; i < k; ++i)
                        for (Eigen::Index j = 0; j < k; ++j) q(i, j) += v_eff_(idx[i], idx[j]);
                    symmetrize(q);
                    auto llt = robust_cholesky(q);
                    if (!llt) throw InferenceError("forecast covariance Q_t is singular", t);
                    const Matrix q_inv_fr = llt->solve(fr);  // Q^-1 F R
                    mean = a;
                    mean.noalias() += q_inv_fr.transpose() * e;
                    cov = r;
                    cov.noalias() -= fr.transpose() * q_inv_fr;
                    symmetrize(cov);
                    log_det_q = log_det(*llt);
                    quad = e.dot(llt->solve(e));
                    if (Store && store_gain) gain_obs = q_inv_fr.transpose();
                }
                term = -0.5 * (static_cast<double>(k) * kLog2Pi + log_det_q + quad);
                if (Store && store_gain) {
                    gain = Matrix::Zero(m, d);
                    for (Eigen::Index j = 0; j < k; ++j) gain.col(idx[j]) = gain_obs.col(j);
                }
            }
            if (!std::isfinite(term)) throw InferenceError("non-finite log-likelihood term", t);
            total += term;

            if constexpr (Store) {
                out->predicted_mean.push_back(a);
                out->predicted_cov.push_back(r);
                Vector f = f_full * a;
                Matrix q = f_full * r * f_full.transpose() + v_eff_;
                symmetrize(q);
                Vector err = obs_.row(static_cast<Eigen::Index>(t)).transpose() - f;
                out->forecast_mean.push_back(std::move(f));
                out->forecast_cov.push_back(std::move(q));
                out->forecast_error.push_back(std::move(err));
                out->filtered_mean.push_back(mean);
                out->filtered_cov.push_back(cov);
                out->loglik_terms.push_back(term);
                if (store_gain) out->gain.push_back(std::move(gain));
            }
        }
        if constexpr (Store) out->loglik = total;
        return total;
    }

private:
    const StateSpaceModel& model_;
    const Matrix& obs_;
    Matrix v_eff_;
    Vector v_diag_;
    bool diagonal_v_ = false;
};

}  // namespace

FilterResult filter(const StateSpaceModel& model, const Matrix& observations, const FilterOptions& options) {
    ForwardPass pass(model, observations);
    FilterResult result;
    pass.run<true>(&result, options.store_gain);
    return result;
}

double log_likelihood(const StateSpaceModel& model, const Matrix& observations) {
    ForwardPass pass(model, observations);
    return pass.run<false>(nullptr, false);
}

SmootherResult smooth(const StateSpaceModel& model, const FilterResult& filtered) {
    const std::size_t n = filtered.size();
    SmootherResult out;
    if (n == 0) return out;
    out.mean.resize(n);
    out.cov.resize(n);
    out.mean[n - 1] = filtered.filtered_mean[n - 1];
    out.cov[n - 1] = filtered.filtered_cov[n - 1];
    for (std::size_t t = n - 1; t-- > 0;) {
        const Matrix& g = model.transition(t + 1);
        const Matrix& r_next = filtered.predicted_cov[t + 1];
        auto llt = robust_cholesky(r_next);
        if (!llt) throw InferenceError("predicted covariance R_t is singular in the smoother", t + 1);
        const Matrix& c = filtered.filtered_cov[t];
        const Matrix j = llt->solve(g * c).transpose();  // C G' R^-1
        out.mean[t] = filtered.filtered_mean[t] + j * (out.mean[t + 1] - filtered.predicted_mean[t + 1]);
        Matrix s = c - j * (r_next - out.cov[t + 1]) * j.transpose();
        symmetrize(s);
        out.cov[t] = std::move(s);
    }
    return out;
}

std::vector<ForecastStep> forecast(const StateSpaceModel& model, const Vector& last_mean, const Matrix& last_cov,
                                   std::size_t horizon, const ForecastInputs& inputs) {
    if (horizon == 0) throw InputError("forecast horizon must be at least 1");
    const auto m = static_cast<Eigen::Index>(model.state_dim());
    const auto d = static_cast<Eigen::Index>(model.obs_dim());
    if (last_mean.size() != m || last_cov.rows() != m || last_cov.cols() != m)
        throw InputError("last filtered state does not match the state dimension");
    if (inputs.designs.size() < horizon) throw InputError("need one future design per forecast step");
    const bool with_cf = !inputs.cf_designs.empty();
    if (with_cf && inputs.cf_designs.size() < horizon)
        throw InputError("need one counterfactual design per forecast step");
    if (!inputs.transitions.empty() && inputs.transitions.size() < horizon)
        throw InputError("need one transition per forecast step");
    if (inputs.transitions.empty() && model.transitions.size() != 1)
        throw InputError("time-varying model needs explicit future transitions");

    const Matrix v = model.effective_obs_cov();
    std::vector<ForecastStep> steps;
    steps.reserve(horizon);
    Vector mean = last_mean;
    Matrix cov = last_cov;
    for (std::size_t h = 0; h < horizon; ++h) {
        const Matrix& g = inputs.transitions.empty() ? model.transitions.front() : inputs.transitions[h];
        if (g.rows() != m || g.cols() != m) throw InputError("future transition must be m x m");
        mean = g * mean;
        if (model.state_offset.size() != 0) mean += model.state_offset;
        cov = g * cov * g.transpose() + model.state_cov;
        symmetrize(cov);

        ForecastStep step;
        step.state_mean = mean;
        step.state_cov = cov;
        const Matrix& f = inputs.designs[h];
        if (f.rows() != d || f.cols() != m) throw InputError("future design must be d x m");
        step.obs_mean = f * mean;
        step.obs_cov = f * cov * f.transpose() + v;
        symmetrize(step.obs_cov);
        if (with_cf) {
            const Matrix& fc = inputs.cf_designs[h];
            if (fc.rows() != d || fc.cols() != m) throw InputError("future counterfactual design must be d x m");
            step.cf_obs_mean = fc * mean;
            step.cf_obs_cov = fc * cov * fc.transpose() + v;
            symmetrize(step.cf_obs_cov);
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

}  // namespace dyncausal
