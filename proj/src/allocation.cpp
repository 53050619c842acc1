#include "oam/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oam {

namespace {

constexpr double kMuStart = 1.0;
constexpr double kMuFloor = 1e-8;
constexpr int kOuterBudget = 200;
constexpr int kInnerBudget = 100;
constexpr double kCertSlack = 1e-6;   // relative slack accepted as feasible
constexpr double kInf = std::numeric_limits<double>::infinity();

// Workspace for the barrier subproblem over the constrained weights only.
// Free (zero-gap) arms are folded into a fixed base matrix at the cap.
struct BarrierProblem {
    int d = 0;
    MatrixXd base;                 // cap-weighted outer products of free arms
    MatrixXd arms_con;             // rows: constrained arms
    VectorXd gaps_con;
    VectorXd budgets;              // gap^2 / threshold per constrained arm
    double cap = 0.0;

    int kc() const { return static_cast<int>(arms_con.rows()); }

    // H(w) = base + sum w_i a_i a_i^T. Returns false when not positive
    // definite (line search treats that as an infinite barrier).
    bool factor(const VectorXd& w, Eigen::LLT<MatrixXd>& llt) const {
        MatrixXd H = base;
        for (int i = 0; i < kc(); ++i)
            H.selfadjointView<Eigen::Lower>().rankUpdate(arms_con.row(i).transpose(),
                                                         w[i]);
        H = H.selfadjointView<Eigen::Lower>();
        llt.compute(H);
        return llt.info() == Eigen::Success;
    }

    // Constraint values c_j = a_j^T H^{-1} a_j for all constrained arms.
    bool values(const VectorXd& w, VectorXd& c) const {
        Eigen::LLT<MatrixXd> llt;
        if (!factor(w, llt)) return false;
        const MatrixXd V = llt.solve(arms_con.transpose());   // d x kc
        c = (arms_con * V).diagonal();
        return true;
    }

    double barrier(const VectorXd& w, double mu) const {
        if ((w.array() <= 0.0).any()) return kInf;
        VectorXd c;
        if (!values(w, c)) return kInf;
        double phi = w.dot(gaps_con);
        for (int j = 0; j < kc(); ++j) {
            const double slack = budgets[j] - c[j];
            if (slack <= 0.0) return kInf;
            phi -= mu * std::log(slack);
        }
        phi -= mu * w.array().log().sum();
        return phi;
    }

    // phi, gradient, and the diagonal of the barrier Hessian. The diagonal
    // preconditioner is what keeps the step usable when coordinates sit at
    // wildly different scales along the central path.
    double barrier_grad(const VectorXd& w, double mu, VectorXd& grad,
                        VectorXd& hdiag) const {
        Eigen::LLT<MatrixXd> llt;
        if (!factor(w, llt)) return kInf;
        const MatrixXd V = llt.solve(arms_con.transpose());   // d x kc
        const MatrixXd W = arms_con * V;                      // W(j,i) = a_j^T H^-1 a_i
        double phi = w.dot(gaps_con);
        grad = gaps_con;
        hdiag = VectorXd::Zero(kc());
        for (int j = 0; j < kc(); ++j) {
            const double slack = budgets[j] - W(j, j);
            if (slack <= 0.0) return kInf;
            phi -= mu * std::log(slack);
            // d(slack_j)/dw_i = +(a_j^T H^-1 a_i)^2
            for (int i = 0; i < kc(); ++i) {
                const double wji_sq = W(j, i) * W(j, i);
                grad[i] -= mu * wji_sq / slack;
                hdiag[i] += mu * (2.0 * wji_sq * W(i, i) / slack +
                                  wji_sq * wji_sq / (slack * slack));
            }
        }
        phi -= mu * w.array().log().sum();
        grad.array() -= mu / w.array();
        hdiag.array() += mu / w.array().square();
        return phi;
    }

    // Relative violation of the true constraints: max_j c_j / budget_j - 1.
    double violation(const VectorXd& w) const {
        if (kc() == 0) return -1.0;
        VectorXd c;
        if (!values(w, c)) return kInf;
        double v = -kInf;
        for (int j = 0; j < kc(); ++j) v = std::max(v, c[j] / budgets[j] - 1.0);
        return v;
    }
};

// Doubles weights (capped) until every constraint has at least `margin`
// relative slack; weight growth only relaxes the constraints.
bool scale_to_feasible(const BarrierProblem& bp, VectorXd& w, double margin) {
    for (int pass = 0; pass < 64; ++pass) {
        const double v = bp.violation(w);
        if (v <= -margin) return true;
        if ((w.array() >= bp.cap).all()) return bp.violation(w) <= kCertSlack;
        w = (2.0 * w).cwiseMin(bp.cap);
    }
    return bp.violation(w) <= kCertSlack;
}

}  // namespace

double exploration_threshold(double n, double delta, int d, double c) {
    if (!(n > 1.0)) throw std::invalid_argument("exploration_threshold: n must exceed 1");
    if (!(delta > 0.0) || delta > 1.0)
        throw std::invalid_argument("exploration_threshold: delta must lie in (0, 1]");
    if (d < 1) throw std::invalid_argument("exploration_threshold: d must be positive");
    const double ln_n = std::log(n);
    return 2.0 * (1.0 + 1.0 / ln_n) * std::log(1.0 / delta) +
           c * d * std::log(d * ln_n);
}

double constraint_value(const VectorXd& weights,
                        const std::vector<VectorXd>& arms, const VectorXd& x) {
    if (static_cast<size_t>(weights.size()) != arms.size())
        throw std::invalid_argument("constraint_value: weights/arms size mismatch");
    const int d = static_cast<int>(x.size());
    MatrixXd H = MatrixXd::Zero(d, d);
    for (size_t i = 0; i < arms.size(); ++i)
        H.selfadjointView<Eigen::Lower>().rankUpdate(arms[i], weights[static_cast<long>(i)]);
    H = H.selfadjointView<Eigen::Lower>();
    Eigen::LLT<MatrixXd> llt(H);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("constraint_value: design matrix is singular");
    return x.dot(llt.solve(x));
}

VectorXd constraint_gradient(const VectorXd& weights,
                             const std::vector<VectorXd>& arms,
                             const VectorXd& x) {
    if (static_cast<size_t>(weights.size()) != arms.size())
        throw std::invalid_argument("constraint_gradient: weights/arms size mismatch");
    const int d = static_cast<int>(x.size());
    MatrixXd H = MatrixXd::Zero(d, d);
    for (size_t i = 0; i < arms.size(); ++i)
        H.selfadjointView<Eigen::Lower>().rankUpdate(arms[i], weights[static_cast<long>(i)]);
    H = H.selfadjointView<Eigen::Lower>();
    Eigen::LLT<MatrixXd> llt(H);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("constraint_gradient: design matrix is singular");
    const VectorXd Hx = llt.solve(x);
    VectorXd g(weights.size());
    for (size_t i = 0; i < arms.size(); ++i) {
        const double inner = Hx.dot(arms[i]);
        g[static_cast<long>(i)] = -inner * inner;
    }
    return g;
}

double default_cap(double threshold, const VectorXd& gaps) {
    double min_pos = kInf;
    for (long i = 0; i < gaps.size(); ++i)
        if (gaps[i] > 0.0) min_pos = std::min(min_pos, gaps[i]);
    if (!std::isfinite(min_pos)) return 1e6;
    return threshold / (min_pos * min_pos) * 1e3;
}

VectorXd flatten_gaps(const ArmRegistry& registry,
                      const std::vector<std::vector<double>>& per_context_gaps) {
    VectorXd flat = VectorXd::Constant(registry.size(), kInf);
    for (size_t m = 0; m < registry.index_of.size(); ++m)
        for (size_t i = 0; i < registry.index_of[m].size(); ++i) {
            const int r = registry.index_of[m][i];
            flat[r] = std::min(flat[r], per_context_gaps[m][i]);
        }
    for (long r = 0; r < flat.size(); ++r)
        if (!std::isfinite(flat[r]))
            throw std::logic_error("flatten_gaps: registry arm never referenced");
    return flat;
}

AllocationSolution solve_allocation(const AllocationProblem& problem,
                                    const VectorXd* warm_start) {
    const int k = static_cast<int>(problem.arms.size());
    if (k == 0) throw std::invalid_argument("solve_allocation: no arms");
    if (problem.gaps.size() != k)
        throw std::invalid_argument("solve_allocation: gaps/arms size mismatch");
    if ((problem.gaps.array() < 0.0).any())
        throw std::invalid_argument("solve_allocation: gaps must be nonnegative");
    if (!(problem.threshold > 0.0))
        throw std::invalid_argument("solve_allocation: threshold must be positive");
    const int d = static_cast<int>(problem.arms[0].size());
    for (const auto& a : problem.arms)
        if (a.size() != d)
            throw std::invalid_argument("solve_allocation: inconsistent arm dimension");

    const double cap =
        problem.cap > 0.0 ? problem.cap : default_cap(problem.threshold, problem.gaps);

    // The program is only well posed when the arms can make H invertible.
    {
        MatrixXd stacked(k, d);
        for (int i = 0; i < k; ++i) stacked.row(i) = problem.arms[i].transpose();
        Eigen::JacobiSVD<MatrixXd> svd(stacked);
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > 1e-12) ++rank;
        if (rank < d)
            throw std::invalid_argument("solve_allocation: arms do not span R^d");
    }

    BarrierProblem bp;
    bp.d = d;
    bp.cap = cap;
    bp.base = MatrixXd::Zero(d, d);
    std::vector<int> con_index;
    for (int i = 0; i < k; ++i) {
        if (problem.gaps[i] > 0.0) {
            con_index.push_back(i);
        } else {
            bp.base.selfadjointView<Eigen::Lower>().rankUpdate(problem.arms[i], cap);
        }
    }
    bp.base = bp.base.selfadjointView<Eigen::Lower>();
    const int kc = static_cast<int>(con_index.size());
    bp.arms_con.resize(kc, d);
    bp.gaps_con.resize(kc);
    bp.budgets.resize(kc);
    for (int i = 0; i < kc; ++i) {
        bp.arms_con.row(i) = problem.arms[con_index[i]].transpose();
        bp.gaps_con[i] = problem.gaps[con_index[i]];
        bp.budgets[i] =
            bp.gaps_con[i] * bp.gaps_con[i] / problem.threshold;
    }

    AllocationSolution sol;
    sol.weights = VectorXd::Constant(k, cap);
    sol.saturated.assign(k, 1);

    if (kc == 0) {
        // Nothing to optimise: all arms free, full caps, objective zero.
        sol.objective = 0.0;
        sol.max_constraint_violation = -1.0;
        sol.converged = true;
        return sol;
    }

    // Start from the warm start when usable, otherwise from the per-arm
    // diagonal heuristic threshold / gap^2; then grow into strict interior.
    VectorXd w(kc);
    bool warmed = false;
    if (warm_start && warm_start->size() == k) {
        for (int i = 0; i < kc; ++i)
            w[i] = std::clamp((*warm_start)[con_index[i]], 1e-8, cap);
        warmed = true;
    }
    if (!warmed)
        for (int i = 0; i < kc; ++i)
            w[i] = std::min(problem.threshold / (bp.gaps_con[i] * bp.gaps_con[i]), cap);
    scale_to_feasible(bp, w, 0.05);

    VectorXd best;
    double best_obj = kInf;
    auto consider = [&](const VectorXd& cand) {
        if (bp.violation(cand) <= kCertSlack) {
            const double obj = cand.dot(bp.gaps_con);
            if (obj < best_obj) {
                best_obj = obj;
                best = cand;
            }
        }
    };
    consider(w);

    int outer = 0;
    for (double mu = kMuStart; mu >= kMuFloor && outer < kOuterBudget;
         mu *= 0.5, ++outer) {
        for (int inner = 0; inner < kInnerBudget; ++inner) {
            VectorXd grad, hdiag;
            const double phi = bp.barrier_grad(w, mu, grad, hdiag);
            if (!std::isfinite(phi)) break;   // barrier domain lost; rescale below

            // Projected preconditioned gradient step with Armijo
            // backtracking. The diagonal metric makes a unit step the
            // coordinate-wise Newton step; projection enforces the cap and
            // the barrier rejects nonpositive trial points.
            const VectorXd dir = grad.cwiseQuotient(hdiag);
            bool accepted = false;
            double alpha = 1.0;
            for (int bt = 0; bt < 60; ++bt) {
                VectorXd trial = (w - alpha * dir).cwiseMax(0.0).cwiseMin(cap);
                const VectorXd step = trial - w;
                const double decrease = grad.dot(step);   // <= 0 after projection
                if (step.squaredNorm() <= 1e-28 * (1.0 + w.squaredNorm())) {
                    accepted = false;
                    break;
                }
                const double phi_trial = bp.barrier(trial, mu);
                if (phi_trial <= phi + 1e-4 * decrease) {
                    w = trial;
                    ++sol.iterations;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
        }
        consider(w);
        if (best_obj < kInf) sol.objective_history.push_back(best_obj);
    }

    VectorXd final_w = best_obj < kInf ? best : w;
    // Last-resort repair if even the best iterate drifted infeasible.
    if (bp.violation(final_w) > kCertSlack) scale_to_feasible(bp, final_w, 0.0);

    for (int i = 0; i < kc; ++i) {
        sol.weights[con_index[i]] = final_w[i];
        sol.saturated[con_index[i]] = final_w[i] >= cap ? 1 : 0;
    }
    sol.objective = final_w.dot(bp.gaps_con);
    sol.max_constraint_violation = bp.violation(final_w);
    sol.converged = sol.max_constraint_violation <= kCertSlack;
    return sol;
}

double lower_bound_constant(const BanditInstance& inst,
                            AllocationSolution* detail) {
    const ArmRegistry registry = build_registry(inst);
    std::vector<std::vector<double>> gaps(inst.contexts.size());
    for (size_t m = 0; m < inst.contexts.size(); ++m) {
        const auto& arms = inst.contexts[m].arms;
        gaps[m].resize(arms.size());
        for (size_t i = 0; i < arms.size(); ++i)
            gaps[m][i] =
                instantaneous_regret(inst, static_cast<int>(m), arms[i]);
    }
    AllocationProblem p;
    p.arms = registry.unique_arms;
    p.gaps = flatten_gaps(registry, gaps);
    p.threshold = 2.0;
    AllocationSolution sol = solve_allocation(p);
    if (detail) *detail = sol;
    return sol.objective;
}

}  // namespace oam
