#include "oam/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace oam {

namespace {
constexpr int kRefactorEvery = 512;
constexpr double kRankCutoff = 1e-9;

int svd_rank(const MatrixXd& rows) {
    if (rows.rows() == 0) return 0;
    Eigen::JacobiSVD<MatrixXd> svd(rows);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > kRankCutoff) ++rank;
    return rank;
}
}  // namespace

LeastSquaresState::LeastSquaresState(int d, double ridge)
    : d_(d), ridge_(ridge) {
    if (d < 1) throw std::invalid_argument("dimension must be positive");
    if (ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
    gram_ = ridge * MatrixXd::Identity(d, d);
    response_ = VectorXd::Zero(d);
    theta_hat_ = VectorXd::Zero(d);
    if (ridge > 0.0) {
        gram_inv_ = (1.0 / ridge) * MatrixXd::Identity(d, d);
        log_det_ = d * std::log(ridge);
        invertible_ = true;
        provisional_ = false;
    }
}

void LeastSquaresState::refactor() {
    Eigen::LLT<MatrixXd> llt(gram_);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("Gram refactorisation failed");
    gram_inv_ = llt.solve(MatrixXd::Identity(d_, d_));
    log_det_ = 0.0;
    for (int i = 0; i < d_; ++i)
        log_det_ += 2.0 * std::log(llt.matrixL()(i, i));
    theta_hat_ = gram_inv_ * response_;
    absorbs_since_refactor_ = 0;
}

void LeastSquaresState::absorb(const VectorXd& x, double y) {
    if (x.size() != d_) throw std::invalid_argument("absorb: wrong dimension");
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(x);
    gram_ = gram_.selfadjointView<Eigen::Lower>();
    response_ += y * x;
    ++rounds_absorbed_;

    if (!invertible_) {
        // Still singular (ridge 0, early rounds): full eigencheck each time.
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram_);
        if (es.eigenvalues().minCoeff() > kRankCutoff) {
            invertible_ = true;
            provisional_ = false;
            refactor();
        } else {
            // Minimum-norm provisional estimate from the pseudo-inverse.
            theta_hat_ = VectorXd::Zero(d_);
            for (int i = 0; i < d_; ++i) {
                const double ev = es.eigenvalues()[i];
                if (ev > kRankCutoff) {
                    const VectorXd v = es.eigenvectors().col(i);
                    theta_hat_ += v * (v.dot(response_) / ev);
                }
            }
        }
        return;
    }

    // Rank-one inverse and log-det update.
    const VectorXd v = gram_inv_ * x;
    const double denom = 1.0 + x.dot(v);
    gram_inv_ -= (v * v.transpose()) / denom;
    log_det_ += std::log(denom);
    theta_hat_ = gram_inv_ * response_;

    if (++absorbs_since_refactor_ >= kRefactorEvery) refactor();
}

double LeastSquaresState::weighted_norm_sq(const VectorXd& x) const {
    if (!invertible_)
        throw std::runtime_error("weighted_norm_sq: Gram matrix is singular");
    if (x.size() != d_)
        throw std::invalid_argument("weighted_norm_sq: wrong dimension");
    return std::max(0.0, x.dot(gram_inv_ * x));
}

const MatrixXd& LeastSquaresState::gram_inverse() const {
    if (!invertible_)
        throw std::runtime_error("gram_inverse: Gram matrix is singular");
    return gram_inv_;
}

double LeastSquaresState::log_det() const {
    if (!invertible_)
        throw std::runtime_error("log_det: Gram matrix is singular");
    return log_det_;
}

GapEstimate estimate_gaps(const LeastSquaresState& state,
                          const BanditInstance& inst, double gap_floor) {
    GapEstimate est;
    est.gaps.resize(inst.contexts.size());
    est.optimal_index.resize(inst.contexts.size());
    double min_pos = std::numeric_limits<double>::infinity();

    for (size_t m = 0; m < inst.contexts.size(); ++m) {
        const auto& arms = inst.contexts[m].arms;
        std::vector<double> vals(arms.size());
        int best = 0;
        for (size_t i = 0; i < arms.size(); ++i) {
            vals[i] = arms[i].dot(state.theta_hat());
            if (vals[i] > vals[best]) best = static_cast<int>(i);
        }
        est.optimal_index[m] = best;
        est.gaps[m].resize(arms.size());
        for (size_t i = 0; i < arms.size(); ++i) {
            const double g = vals[best] - vals[i];
            est.gaps[m][i] = g;
            if (g > 0.0 && g < min_pos) min_pos = g;
        }
    }
    est.delta_min = std::isfinite(min_pos) ? std::max(min_pos, gap_floor)
                                           : gap_floor;
    return est;
}

std::optional<int> spanning_action(const ActionSet& set,
                                   const std::vector<VectorXd>& absorbed) {
    if (set.arms.empty()) return std::nullopt;
    const int d = static_cast<int>(set.arms[0].size());
    MatrixXd base(static_cast<long>(absorbed.size()), d);
    for (size_t i = 0; i < absorbed.size(); ++i)
        base.row(static_cast<long>(i)) = absorbed[i].transpose();
    const int base_rank = svd_rank(base);

    for (size_t i = 0; i < set.arms.size(); ++i) {
        MatrixXd extended(base.rows() + 1, d);
        extended.topRows(base.rows()) = base;
        extended.row(base.rows()) = set.arms[i].transpose();
        if (svd_rank(extended) > base_rank) return static_cast<int>(i);
    }
    return std::nullopt;
}

}  // namespace oam
