#pragma once

#include "oam/instance.hpp"

#include <optional>

namespace oam {

// Online least squares over reward observations. The Gram inverse is
// maintained by rank-one updates; a full refactorisation every 512 absorbs
// bounds drift. With ridge 0 the state starts singular and theta_hat is the
// minimum-norm solution until the absorbed directions span R^d.
class LeastSquaresState {
public:
    LeastSquaresState() = default;
    LeastSquaresState(int d, double ridge);

    void absorb(const VectorXd& x, double y);

    // x^T G^{-1} x. Throws if the Gram matrix is still singular.
    double weighted_norm_sq(const VectorXd& x) const;

    const MatrixXd& gram() const { return gram_; }
    const MatrixXd& gram_inverse() const;
    const VectorXd& theta_hat() const { return theta_hat_; }
    long rounds_absorbed() const { return rounds_absorbed_; }
    // log det of the Gram matrix; defined once invertible.
    double log_det() const;
    bool invertible() const { return invertible_; }
    // True while theta_hat is a minimum-norm stopgap from a singular Gram.
    bool provisional() const { return provisional_; }
    int dim() const { return d_; }

private:
    void refactor();

    int d_ = 0;
    double ridge_ = 0.0;
    MatrixXd gram_;
    MatrixXd gram_inv_;
    VectorXd response_;
    VectorXd theta_hat_;
    long rounds_absorbed_ = 0;
    double log_det_ = 0.0;
    bool invertible_ = false;
    bool provisional_ = true;
    int absorbs_since_refactor_ = 0;
};

// Estimated gaps for every (context, local arm) under theta_hat, plus the
// floored minimum positive gap used as the exploration budget scale.
struct GapEstimate {
    std::vector<std::vector<double>> gaps;   // [context][local]
    std::vector<int> optimal_index;          // lowest-index argmax per context
    double delta_min = 0.0;                  // min strictly positive gap, floored
};

GapEstimate estimate_gaps(const LeastSquaresState& state,
                          const BanditInstance& inst,
                          double gap_floor = 1e-6);

// Lowest-index arm extending the span of the absorbed directions; nullopt
// when no arm increases rank. Rank is judged with singular-value cutoff 1e-9.
std::optional<int> spanning_action(const ActionSet& set,
                                   const std::vector<VectorXd>& absorbed);

}  // namespace oam
