#include "oam/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace oam {

double epsilon_schedule(long t) {
    const double tt = std::max(static_cast<double>(t), 16.0);
    return std::min(1.0, 1.0 / std::log(std::log(tt)));
}

int greedy_index(const VectorXd& theta, const std::vector<VectorXd>& arms) {
    int best = 0;
    double best_val = arms[0].dot(theta);
    for (size_t i = 1; i < arms.size(); ++i) {
        const double v = arms[i].dot(theta);
        if (v > best_val) {
            best_val = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

int optimistic_index(const LeastSquaresState& ls,
                     const std::vector<VectorXd>& arms, double beta) {
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < arms.size(); ++i) {
        const double v = arms[i].dot(ls.theta_hat()) +
                         std::sqrt(beta * ls.weighted_norm_sq(arms[i]));
        if (v > best_val) {
            best_val = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

Policy::Policy(const BanditInstance& inst, ArmRegistry& registry)
    : inst_(inst), registry_(registry) {}

Decision Policy::select(int context_id, long t) {
    if (pending_local_ >= 0)
        throw std::logic_error("select called again before observe");
    const ActionSet& set = inst_.contexts.at(context_id);
    Decision dec = do_select(context_id, set, t);
    pending_context_ = context_id;
    pending_local_ = dec.local_arm;
    return dec;
}

void Policy::observe(const VectorXd& arm, double reward) {
    if (pending_local_ < 0)
        throw std::logic_error("observe without a preceding select");
    const int reg = registry_.index_of[pending_context_][pending_local_];
    ++registry_.pull_counts[reg];
    pending_context_ = -1;
    pending_local_ = -1;
    do_observe(arm, reward);
}

// ---------------------------------------------------------------------------
// Baselines

GreedyPolicy::GreedyPolicy(const BanditInstance& inst, ArmRegistry& registry,
                           const PolicyParams& params)
    : Policy(inst, registry), ls_(inst.d, params.ridge) {}

Decision GreedyPolicy::do_select(int, const ActionSet& set, long) {
    return {greedy_index(ls_.theta_hat(), set.arms), Phase::None};
}

void GreedyPolicy::do_observe(const VectorXd& arm, double reward) {
    ls_.absorb(arm, reward);
}

LinUcbPolicy::LinUcbPolicy(const BanditInstance& inst, ArmRegistry& registry,
                           const PolicyParams& params)
    : Policy(inst, registry), ls_(inst.d, params.ridge), c_(params.c) {}

double LinUcbPolicy::beta(long t) const {
    // f(t, 1/t^2); clamped below t = 3 where the threshold is undefined.
    const double tt = std::max(static_cast<double>(t), 3.0);
    return exploration_threshold(tt, 1.0 / (tt * tt), inst_.d, c_);
}

Decision LinUcbPolicy::do_select(int, const ActionSet& set, long t) {
    return {optimistic_index(ls_, set.arms, beta(t)), Phase::None};
}

void LinUcbPolicy::do_observe(const VectorXd& arm, double reward) {
    ls_.absorb(arm, reward);
}

LinTsPolicy::LinTsPolicy(const BanditInstance& inst, ArmRegistry& registry,
                         std::mt19937_64& rng, long horizon, bool theory_mode,
                         const PolicyParams& params)
    : Policy(inst, registry),
      ls_(inst.d, params.ridge),
      rng_(rng),
      theory_mode_(theory_mode) {
    const double n = std::max(static_cast<double>(horizon), 3.0);
    v_ = theory_mode ? params.ts_scale * 3.0 * std::sqrt(inst.d * std::log(n))
                     : params.ts_scale;
}

Decision LinTsPolicy::do_select(int, const ActionSet& set, long) {
    VectorXd theta = ls_.theta_hat();
    if (v_ > 0.0) {
        Eigen::LLT<MatrixXd> llt(ls_.gram_inverse());
        VectorXd z(inst_.d);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < inst_.d; ++i) z[i] = gauss(rng_);
        const VectorXd scaled = llt.matrixL() * z;
        theta += v_ * scaled;
    }
    return {greedy_index(theta, set.arms), Phase::None};
}

void LinTsPolicy::do_observe(const VectorXd& arm, double reward) {
    ls_.absorb(arm, reward);
}

// ---------------------------------------------------------------------------
// Allocation-tracking policy

OamPolicy::OamPolicy(const BanditInstance& inst, ArmRegistry& registry,
                     long horizon, const PolicyParams& params)
    : Policy(inst, registry),
      params_(params),
      horizon_(horizon),
      ls_(inst.d, 0.0) {
    if (horizon < 3) throw std::invalid_argument("horizon must be at least 3");
    f_n_ = exploration_threshold(static_cast<double>(horizon),
                                 1.0 / static_cast<double>(horizon), inst.d,
                                 params.c);
}

bool OamPolicy::quotas_met(const std::vector<long>& counts,
                           const std::vector<double>& quotas) {
    for (size_t i = 0; i < counts.size(); ++i)
        if (static_cast<double>(counts[i]) < quotas[i]) return false;
    return true;
}

std::pair<int, bool> OamPolicy::pick_exploration_arm(
    const std::vector<long>& counts, const std::vector<double>& quotas,
    long s_prev, double eps) {
    int b1 = 0, b2 = 0;
    double best_ratio = std::numeric_limits<double>::infinity();
    long best_count = std::numeric_limits<long>::max();
    for (size_t i = 0; i < counts.size(); ++i) {
        const double ratio =
            static_cast<double>(counts[i]) / std::max(quotas[i], 1e-12);
        if (ratio < best_ratio) {
            best_ratio = ratio;
            b1 = static_cast<int>(i);
        }
        if (counts[i] < best_count) {
            best_count = counts[i];
            b2 = static_cast<int>(i);
        }
    }
    if (static_cast<double>(best_count) <= eps * static_cast<double>(s_prev))
        return {b2, true};
    return {b1, false};
}

double OamPolicy::quota(int registry_arm) const {
    const double dmin2 = gaps_.delta_min * gaps_.delta_min;
    const double count_bound = f_n_ / dmin2;
    const double T = has_solution_ ? cached_.weights[registry_arm] : count_bound;
    return std::min(T, count_bound);
}

void OamPolicy::refresh_allocation() {
    const bool stale =
        !has_solution_ ||
        ls_.log_det() - log_det_at_solve_ >= std::log1p(params_.zeta);
    if (!stale) return;

    AllocationProblem p;
    p.arms = registry_.unique_arms;
    p.gaps = flatten_gaps(registry_, gaps_.gaps);
    p.threshold = f_n_;
    const double dmin2 = gaps_.delta_min * gaps_.delta_min;
    p.cap = f_n_ / dmin2 * params_.cap_scale;

    const VectorXd* warm = has_solution_ ? &cached_.weights : nullptr;
    AllocationSolution sol = solve_allocation(p, warm);
    // A failed solve keeps the previous weights alive; the marker still
    // advances so the retry waits for fresh information.
    if (sol.converged || !has_solution_) {
        cached_ = std::move(sol);
        has_solution_ = true;
    }
    log_det_at_solve_ = ls_.log_det();
}

void OamPolicy::audit_fail(long t, const std::string& what) {
    if (audit_violations_.size() < 200) {
        std::ostringstream os;
        os << "round " << t << ": " << what;
        audit_violations_.push_back(os.str());
    }
}

Decision OamPolicy::do_select(int context_id, const ActionSet& set, long t) {
    const int d = inst_.d;

    // Spanning initialisation. Normally exactly d rounds; if a context's set
    // cannot extend the span the phase stretches until the Gram inverts.
    if (ls_.rounds_absorbed() < d || !ls_.invertible()) {
        const int pick = spanning_action(set, init_arms_).value_or(0);
        init_arms_.push_back(set.arms[pick]);
        return {pick, Phase::Init};
    }

    if (gaps_.gaps.empty())
        gaps_ = estimate_gaps(ls_, inst_, params_.gap_floor);

    refresh_allocation();

    // Exploit when every arm's uncertainty fits under its gap budget.
    const double dmin2 = gaps_.delta_min * gaps_.delta_min;
    bool exploit = true;
    for (size_t i = 0; i < set.arms.size(); ++i) {
        const double g = gaps_.gaps[context_id][i];
        const double budget = std::max(dmin2, g * g) / f_n_;
        if (ls_.weighted_norm_sq(set.arms[i]) > budget) {
            exploit = false;
            break;
        }
    }
    if (exploit) {
        const int pick = greedy_index(ls_.theta_hat(), set.arms);
        if (params_.audit) {
            for (size_t i = 0; i < set.arms.size(); ++i) {
                const double g = gaps_.gaps[context_id][i];
                if (ls_.weighted_norm_sq(set.arms[i]) >
                    std::max(dmin2, g * g) / f_n_)
                    audit_fail(t, "exploit criterion does not re-verify");
            }
        }
        return {pick, Phase::Exploit};
    }

    // Exploration round.
    const long s_prev = s_;
    s_ += 1;

    std::vector<long> counts(set.arms.size());
    std::vector<double> quotas(set.arms.size());
    for (size_t i = 0; i < set.arms.size(); ++i) {
        const int reg = registry_.index_of[context_id][i];
        counts[i] = registry_.pull_counts[reg];
        quotas[i] = quota(reg);
    }

    Decision dec;
    if (quotas_met(counts, quotas)) {
        // Everything at quota yet still uncertain: optimistic fallback whose
        // width tightens with the exploration count.
        const double beta = exploration_threshold(
            static_cast<double>(horizon_),
            1.0 / (static_cast<double>(s_) * static_cast<double>(s_)), d,
            params_.c);
        dec = {optimistic_index(ls_, set.arms, beta), Phase::ExploreWasted};
    } else {
        const auto [pick, forced] =
            pick_exploration_arm(counts, quotas, s_prev, epsilon_schedule(t));
        dec = {pick, forced ? Phase::ExploreForced : Phase::ExploreTracked};
        if (params_.audit && !forced &&
            static_cast<double>(counts[pick]) >= quotas[pick])
            audit_fail(t, "tracked arm already at quota");
    }

    if (params_.audit) {
        // Forced-exploration floor over the whole registry, counts entering
        // the round.
        long min_count = std::numeric_limits<long>::max();
        for (long c : registry_.pull_counts) min_count = std::min(min_count, c);
        const double floor = epsilon_schedule(t) * static_cast<double>(s_) /
                                 (2.0 * registry_.size()) -
                             1.0;
        if (static_cast<double>(min_count) < floor) {
            std::ostringstream os;
            os << "forced floor: min count " << min_count << " below "
               << floor << " at s=" << s_;
            audit_fail(t, os.str());
        }
    }
    return dec;
}

void OamPolicy::do_observe(const VectorXd& arm, double reward) {
    ls_.absorb(arm, reward);
    gaps_ = estimate_gaps(ls_, inst_, params_.gap_floor);
}

std::unique_ptr<Policy> make_policy(const std::string& name,
                                    const BanditInstance& inst,
                                    ArmRegistry& registry,
                                    std::mt19937_64& rng, long horizon,
                                    const PolicyParams& params) {
    if (name == "oam")
        return std::make_unique<OamPolicy>(inst, registry, horizon, params);
    if (name == "linucb")
        return std::make_unique<LinUcbPolicy>(inst, registry, params);
    if (name == "greedy")
        return std::make_unique<GreedyPolicy>(inst, registry, params);
    if (name == "lints-theory")
        return std::make_unique<LinTsPolicy>(inst, registry, rng, horizon, true,
                                             params);
    if (name == "lints-heuristic")
        return std::make_unique<LinTsPolicy>(inst, registry, rng, horizon,
                                             false, params);
    throw std::invalid_argument("unknown policy name: " + name);
}

}  // namespace oam
