#include "dyncausal/state_space.hpp"

#include <cmath>
#include <string>

#include "dyncausal/error.hpp"

namespace dyncausal {

bool is_symmetric_psd(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) return false;
    if (a.size() == 0) return true;
    if (!a.allFinite()) return false;
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    const double trace = std::abs(a.trace());
    const double floor = rel_tol * (trace > 0 ? trace : 1.0);
    return eig.eigenvalues().minCoeff() >= -floor;
}

std::optional<Eigen::LLT<Matrix>> robust_cholesky(const Matrix& a) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) return llt;
    const double jitter = 1e-9 * a.diagonal().mean();
    if (!(jitter > 0) || !std::isfinite(jitter)) return std::nullopt;
    Matrix bumped = a;
    bumped.diagonal().array() += jitter;
    llt.compute(bumped);
    if (llt.info() == Eigen::Success) return llt;
    return std::nullopt;
}

Matrix covariance_factor(const Matrix& a) {
    if (a.size() == 0) return a;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()));
    Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

double log_det(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

const Matrix& StateSpaceModel::design(std::size_t t) const {
    if (!designs || designs->empty()) throw InputError("state-space model has no design matrices");
    return designs->size() == 1 ? designs->front() : (*designs)[t];
}

const Matrix& StateSpaceModel::transition(std::size_t t) const {
    if (transitions.empty()) throw InputError("state-space model has no transition matrices");
    return transitions.size() == 1 ? transitions.front() : transitions[t];
}

Matrix StateSpaceModel::effective_obs_cov() const {
    if (obs_weights.size() == 0) return obs_cov;
    const Vector scale = obs_weights.cwiseInverse().cwiseSqrt();
    return scale.asDiagonal() * obs_cov * scale.asDiagonal();
}

void StateSpaceModel::validate(std::size_t n) const {
    const auto d = obs_cov.rows();
    const auto m = state_cov.rows();
    if (obs_cov.cols() != d) throw InputError("V must be square");
    if (state_cov.cols() != m) throw InputError("W must be square");
    if (prior_mean.size() != m) throw InputError("m0 length " + std::to_string(prior_mean.size()) +
                                                 " does not match state dimension " + std::to_string(m));
    if (prior_cov.rows() != m || prior_cov.cols() != m) throw InputError("C0 must be m x m");
    if (state_offset.size() != 0 && state_offset.size() != m)
        throw InputError("state offset length does not match state dimension");
    if (!designs || designs->empty()) throw InputError("missing design matrices");
    if (designs->size() != 1 && designs->size() < n)
        throw InputError("need " + std::to_string(n) + " design matrices, got " + std::to_string(designs->size()));
    for (std::size_t t = 0; t < designs->size(); ++t) {
        const auto& f = (*designs)[t];
        if (f.rows() != d || f.cols() != m)
            throw InputError("design " + std::to_string(t) + " is " + std::to_string(f.rows()) + "x" +
                             std::to_string(f.cols()) + ", expected " + std::to_string(d) + "x" + std::to_string(m));
    }
    if (transitions.empty()) throw InputError("missing transition matrices");
    if (transitions.size() != 1 && transitions.size() < n)
        throw InputError("need " + std::to_string(n) + " transition matrices");
    for (const auto& g : transitions)
        if (g.rows() != m || g.cols() != m) throw InputError("transition matrix must be m x m");
    if (!is_symmetric_psd(obs_cov)) throw InputError("V is not symmetric PSD");
    if (!is_symmetric_psd(state_cov)) throw InputError("W is not symmetric PSD");
    if (!is_symmetric_psd(prior_cov)) throw InputError("C0 is not symmetric PSD");
    if (obs_weights.size() != 0) {
        if (obs_weights.size() != d) throw InputError("observation weights must have one entry per row");
        if (!(obs_weights.array() > 0).all() || !obs_weights.allFinite())
            throw InputError("observation weights must be strictly positive");
    }
}

StateSpaceModel make_model(Matrix design, Matrix transition, Matrix obs_cov, Matrix state_cov,
                           Vector prior_mean, Matrix prior_cov) {
    StateSpaceModel model;
    model.designs = share({std::move(design)});
    model.transitions = {std::move(transition)};
    model.obs_cov = std::move(obs_cov);
    model.state_cov = std::move(state_cov);
    model.prior_mean = std::move(prior_mean);
    model.prior_cov = std::move(prior_cov);
    return model;
}

SharedMatrices share(MatrixSequence matrices) {
    return std::make_shared<const MatrixSequence>(std::move(matrices));
}

}  // namespace dyncausal
