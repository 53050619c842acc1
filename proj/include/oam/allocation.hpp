#pragma once

#include "oam/instance.hpp"

namespace oam {

// Confidence-width threshold f used both by the exploit test and as the
// right-hand side of the allocation constraints:
//   f(n, delta) = 2 (1 + 1/ln n) ln(1/delta) + c d ln(d ln n).
// Accepts any real n > 1 so closed-form checks at non-integer n stay exact;
// delta = 1 zeroes the first term.
double exploration_threshold(double n, double delta, int d, double c);

// x^T H(w)^{-1} x with H(w) = sum_i w_i arm_i arm_i^T.
// Throws when H is singular; homogeneous of degree -1 in w.
double constraint_value(const VectorXd& weights,
                        const std::vector<VectorXd>& arms, const VectorXd& x);

// Gradient of constraint_value in the weights: entry i is -(x^T H^{-1} arm_i)^2,
// so every entry is nonpositive (adding weight anywhere never hurts).
VectorXd constraint_gradient(const VectorXd& weights,
                             const std::vector<VectorXd>& arms,
                             const VectorXd& x);

// Minimise sum_i w_i gap_i subject to, for every arm with gap_i > 0,
//   arm_i^T H(w)^{-1} arm_i <= gap_i^2 / threshold,   0 <= w <= cap.
// Zero-gap arms cost nothing and only help feasibility; they are pinned at
// the cap, which stands in for the unbounded weight the exact program allows.
struct AllocationProblem {
    std::vector<VectorXd> arms;
    VectorXd gaps;          // nonnegative, one per arm
    double threshold = 2.0;
    double cap = 0.0;       // <= 0 selects default_cap(threshold, gaps)
};

struct AllocationSolution {
    VectorXd weights;
    double objective = 0.0;
    // max over constrained arms of value * threshold / gap^2 - 1 (negative
    // means slack); -1 when there are no constrained arms.
    double max_constraint_violation = -1.0;
    int iterations = 0;     // accepted descent steps across all barrier passes
    bool converged = false;
    std::vector<char> saturated;
    // Best feasible objective seen after each barrier pass; nonincreasing.
    std::vector<double> objective_history;
};

double default_cap(double threshold, const VectorXd& gaps);

AllocationSolution solve_allocation(const AllocationProblem& problem,
                                    const VectorXd* warm_start = nullptr);

// Registry-level gap vector: minimum over every (context, local) slot that
// maps to the registry arm. An arm optimal anywhere gets gap zero.
VectorXd flatten_gaps(const ArmRegistry& registry,
                      const std::vector<std::vector<double>>& per_context_gaps);

// Asymptotic regret-rate constant of the instance: the allocation program at
// threshold 2 with the true gaps. Zero (up to solver residue) when the
// optimal arms already span every direction the suboptimal arms need.
double lower_bound_constant(const BanditInstance& inst,
                            AllocationSolution* detail = nullptr);

}  // namespace oam
