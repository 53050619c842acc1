#pragma once

#include "oam/allocation.hpp"
#include "oam/estimator.hpp"
#include "oam/instance.hpp"

#include <memory>
#include <string>

namespace oam {

// Forced-exploration schedule: min(1, 1/ln(ln(max(t, 16)))).
double epsilon_schedule(long t);

// Lowest-index maximiser of <x, theta>.
int greedy_index(const VectorXd& theta, const std::vector<VectorXd>& arms);

// Lowest-index maximiser of <x, theta_hat> + sqrt(beta) ||x||_{G^-1}.
int optimistic_index(const LeastSquaresState& ls,
                     const std::vector<VectorXd>& arms, double beta);

struct Decision {
    int local_arm = 0;
    Phase phase = Phase::None;
};

struct PolicyParams {
    double c = 2.0;            // multiplier in the confidence threshold
    double zeta = 0.1;         // lazy re-solve trigger: det growth >= 1 + zeta
    double ridge = 1e-6;       // baseline ridge; the allocation policy uses 0
    double gap_floor = 1e-6;
    double cap_scale = 1e3;    // cap = threshold / delta_min^2 * cap_scale
    double ts_scale = 1.0;     // posterior width for sampling policies
    bool audit = false;        // record per-round invariant violations
};

// A policy selects a local arm for the observed context and then absorbs the
// reward. observe() must be called exactly once after each select(); it also
// increments the episode registry's pull count for the played arm.
class Policy {
public:
    Policy(const BanditInstance& inst, ArmRegistry& registry);
    virtual ~Policy() = default;

    Decision select(int context_id, long t);
    void observe(const VectorXd& arm, double reward);

    virtual std::string name() const = 0;

protected:
    virtual Decision do_select(int context_id, const ActionSet& set, long t) = 0;
    virtual void do_observe(const VectorXd& arm, double reward) = 0;

    const BanditInstance& inst_;
    ArmRegistry& registry_;

private:
    int pending_context_ = -1;
    int pending_local_ = -1;
};

// Greedy ridge regression: always the estimated-best arm.
class GreedyPolicy : public Policy {
public:
    GreedyPolicy(const BanditInstance& inst, ArmRegistry& registry,
                 const PolicyParams& params);
    std::string name() const override { return "greedy"; }

protected:
    Decision do_select(int context_id, const ActionSet& set, long t) override;
    void do_observe(const VectorXd& arm, double reward) override;

    LeastSquaresState ls_;
};

// Optimism with width sqrt(beta_t) * ||x||_{G^-1}, beta_t = f(t, 1/t^2).
class LinUcbPolicy : public Policy {
public:
    LinUcbPolicy(const BanditInstance& inst, ArmRegistry& registry,
                 const PolicyParams& params);
    std::string name() const override { return "linucb"; }
    double beta(long t) const;

protected:
    Decision do_select(int context_id, const ActionSet& set, long t) override;
    void do_observe(const VectorXd& arm, double reward) override;

private:
    LeastSquaresState ls_;
    double c_;
};

// Posterior sampling: theta_tilde ~ N(theta_hat, v^2 G^{-1}). Theory mode
// inflates v by 3 sqrt(d ln n); heuristic mode uses the raw scale.
class LinTsPolicy : public Policy {
public:
    LinTsPolicy(const BanditInstance& inst, ArmRegistry& registry,
                std::mt19937_64& rng, long horizon, bool theory_mode,
                const PolicyParams& params);
    std::string name() const override {
        return theory_mode_ ? "lints-theory" : "lints-heuristic";
    }
    double scale() const { return v_; }

protected:
    Decision do_select(int context_id, const ActionSet& set, long t) override;
    void do_observe(const VectorXd& arm, double reward) override;

private:
    LeastSquaresState ls_;
    std::mt19937_64& rng_;
    bool theory_mode_;
    double v_;
};

// Gap-driven allocation tracking.
//
// Round flow after the spanning initialisation:
//   1. lazily refresh the allocation weights when log det G grew by more
//      than ln(1 + zeta) since the last solve;
//   2. exploit greedily when every arm's squared uncertainty fits under
//      max(delta_min^2, gap_x^2) / f_n;
//   3. otherwise explore: if every arm in the set already met its quota
//      min(T_x, f_n / delta_min^2), fall back to an optimistic pull with
//      width f(n, 1/s^2); else play the least-sampled arm (forced) when its
//      count lags eps_t * s, and the most quota-deficient arm otherwise.
class OamPolicy : public Policy {
public:
    OamPolicy(const BanditInstance& inst, ArmRegistry& registry, long horizon,
              const PolicyParams& params);
    std::string name() const override { return "oam"; }

    double f_horizon() const { return f_n_; }
    long exploration_rounds() const { return s_; }
    bool has_solution() const { return has_solution_; }
    const AllocationSolution& cached_solution() const { return cached_; }
    const std::vector<std::string>& audit_violations() const {
        return audit_violations_;
    }

    // Pure decision helpers, exposed for direct verification.
    static bool quotas_met(const std::vector<long>& counts,
                           const std::vector<double>& quotas);
    // Returns (index into counts, forced?). Ties resolve to the lowest index.
    static std::pair<int, bool> pick_exploration_arm(
        const std::vector<long>& counts, const std::vector<double>& quotas,
        long s_prev, double eps);

protected:
    Decision do_select(int context_id, const ActionSet& set, long t) override;
    void do_observe(const VectorXd& arm, double reward) override;

private:
    void refresh_allocation();
    double quota(int registry_arm) const;
    void audit_fail(long t, const std::string& what);

    PolicyParams params_;
    long horizon_;
    double f_n_;
    LeastSquaresState ls_;
    GapEstimate gaps_;
    std::vector<VectorXd> init_arms_;

    AllocationSolution cached_;
    bool has_solution_ = false;
    double log_det_at_solve_ = 0.0;
    long s_ = 0;

    std::vector<std::string> audit_violations_;
};

// Names: oam, linucb, greedy, lints-theory, lints-heuristic.
std::unique_ptr<Policy> make_policy(const std::string& name,
                                    const BanditInstance& inst,
                                    ArmRegistry& registry,
                                    std::mt19937_64& rng, long horizon,
                                    const PolicyParams& params);

}  // namespace oam
