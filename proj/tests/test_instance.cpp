#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oam/harness.hpp"
#include "oam/instance.hpp"

#include <cmath>
#include <set>

using namespace oam;

namespace {

VectorXd v2(double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
}

VectorXd v3(double a, double b, double c) {
    VectorXd v(3);
    v << a, b, c;
    return v;
}

BanditInstance planar(std::vector<VectorXd> arms) {
    BanditInstance inst;
    inst.d = 2;
    inst.theta = v2(1.0, 0.0);
    ActionSet s;
    s.context_id = 0;
    s.arms = std::move(arms);
    inst.contexts = {s};
    inst.context_probs = VectorXd::Ones(1);
    return inst;
}

BanditInstance scenario(const std::string& name) {
    ScenarioSpec spec;
    spec.name = name;
    return builtin_scenario(name, spec);
}

}  // namespace

TEST_CASE("validator accepts the canonical planar basis") {
    const auto rep = validate_instance(planar({v2(1, 0), v2(0, 1)}));
    CHECK(rep.ok);
    CHECK(rep.errors.empty());
}

TEST_CASE("validator rejects a rank-deficient oversized arm on both counts") {
    const auto rep = validate_instance(planar({v2(1, 0), v2(2, 0)}));
    REQUIRE_FALSE(rep.ok);
    bool norm_err = false, span_err = false;
    for (const auto& e : rep.errors) {
        if (e.find("norm") != std::string::npos) norm_err = true;
        if (e.find("span") != std::string::npos) span_err = true;
    }
    CHECK(norm_err);
    CHECK(span_err);
}

TEST_CASE("validator accepts the canonical three-arm planar family") {
    // The third arm has norm slightly above one; it must still validate.
    const auto rep = validate_instance(scenario("fixed-u"));
    CHECK(rep.ok);
}

TEST_CASE("validator rejects broken probability vectors") {
    auto inst = scenario("changing-two");
    SUBCASE("not summing to one") {
        inst.context_probs[0] = 0.5;
        CHECK_FALSE(validate_instance(inst).ok);
    }
    SUBCASE("nonpositive entry") {
        inst.context_probs[0] = 1.0;
        inst.context_probs[1] = 0.0;
        CHECK_FALSE(validate_instance(inst).ok);
    }
    SUBCASE("wrong length") {
        inst.context_probs = VectorXd::Ones(1);
        CHECK_FALSE(validate_instance(inst).ok);
    }
}

TEST_CASE("validator rejects a theta of the wrong dimension") {
    auto inst = planar({v2(1, 0), v2(0, 1)});
    inst.theta = v3(1, 0, 0);
    CHECK_FALSE(validate_instance(inst).ok);
}

TEST_CASE("single-context sampler always returns context zero") {
    const auto inst = scenario("fixed-u");
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) CHECK(sample_context(inst, rng) == 0);
}

TEST_CASE("context frequencies match the configured probabilities") {
    const int n = 100000;
    SUBCASE("0.3 / 0.7 split") {
        const auto inst = scenario("changing-one");
        std::mt19937_64 rng(11);
        long zero = 0;
        for (int i = 0; i < n; ++i)
            if (sample_context(inst, rng) == 0) ++zero;
        CHECK(std::abs(zero / double(n) - 0.3) <= 0.01);
    }
    SUBCASE("rare context at 0.01") {
        const auto inst = scenario("changing-two");
        std::mt19937_64 rng(12);
        long one = 0;
        for (int i = 0; i < n; ++i)
            if (sample_context(inst, rng) == 1) ++one;
        CHECK(std::abs(one / double(n) - 0.01) <= 0.003);
    }
    SUBCASE("deviation bound holds for every context") {
        const auto inst = scenario("span-bounded");
        std::mt19937_64 rng(13);
        std::vector<long> counts(2, 0);
        for (int i = 0; i < n; ++i) ++counts[sample_context(inst, rng)];
        for (int m = 0; m < 2; ++m) {
            const double p = inst.context_probs[m];
            const double bound = 4.0 * std::sqrt(p * (1 - p) / n);
            CHECK(std::abs(counts[m] / double(n) - p) <= bound);
        }
    }
}

TEST_CASE("context sampling is deterministic under a fixed seed") {
    const auto inst = scenario("changing-one");
    std::mt19937_64 a(99), b(99);
    for (int i = 0; i < 200; ++i)
        CHECK(sample_context(inst, a) == sample_context(inst, b));
}

TEST_CASE("reward is the inner product plus one standard normal draw") {
    const auto inst = scenario("fixed-u");
    // Same seed, different arms: the noise draw cancels exactly.
    std::mt19937_64 a(5), b(5);
    const double ra = sample_reward(inst, v2(1, 0), a);
    const double rb = sample_reward(inst, v2(0, 0), b);
    CHECK(ra - rb == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("reward mean and variance match the model") {
    BanditInstance inst;
    inst.d = 3;
    inst.theta = v3(1, 0, 1);
    ActionSet s;
    s.context_id = 0;
    s.arms = {v3(0, 0.5, 0.9)};
    inst.contexts = {s};
    inst.context_probs = VectorXd::Ones(1);

    const int n = 100000;
    std::mt19937_64 rng(21);
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = sample_reward(inst, s.arms[0], rng);
        sum += r;
        sumsq += r * r;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean - 0.9) <= 0.02);
    CHECK(std::abs(var - 1.0) <= 0.03);
}

TEST_CASE("reward rejects an arm of the wrong dimension") {
    const auto inst = scenario("fixed-u");
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_reward(inst, v3(1, 0, 0), rng),
                    std::invalid_argument);
}

TEST_CASE("optimal arm identification and tie-breaking") {
    CHECK(optimal_arm(scenario("fixed-u"), 0) == 0);
    CHECK(optimal_arm(scenario("changing-one"), 1) == 1);
    // Identical arms: lowest index wins.
    CHECK(optimal_arm(planar({v2(0.5, 0), v2(0.5, 0)}), 0) == 0);
}

TEST_CASE("instantaneous regret values on the canonical planar family") {
    const auto inst = scenario("fixed-u");
    CHECK(instantaneous_regret(inst, 0, 0) == doctest::Approx(0.0));
    CHECK(instantaneous_regret(inst, 0, 2) == doctest::Approx(0.1));
    CHECK(instantaneous_regret(inst, 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("registry deduplicates across and within contexts") {
    SUBCASE("two planar sets share one arm and contain a duplicate") {
        const auto reg = build_registry(scenario("changing-two"));
        CHECK(reg.size() == 4);
        // (0,1) appears in both contexts and maps to one entry.
        CHECK(reg.index_of[0][1] == reg.index_of[1][0]);
        // The duplicated (-1,0) inside the second set shares an entry.
        CHECK(reg.index_of[1][1] == reg.index_of[1][2]);
    }
    SUBCASE("three-dimensional pair of sets yields five entries") {
        CHECK(build_registry(scenario("changing-one")).size() == 5);
    }
    SUBCASE("distinct single-context arms keep their count") {
        CHECK(build_registry(scenario("fixed-u")).size() == 3);
    }
}

TEST_CASE("registry vectors round-trip bitwise to the instance arms") {
    const auto inst = scenario("span-bounded");
    const auto reg = build_registry(inst);
    for (size_t m = 0; m < inst.contexts.size(); ++m)
        for (size_t i = 0; i < inst.contexts[m].arms.size(); ++i)
            CHECK(bitwise_equal(reg.unique_arms[reg.index_of[m][i]],
                                inst.contexts[m].arms[i]));
    for (long c : reg.pull_counts) CHECK(c == 0);
    CHECK(reg.total_pulls() == 0);
}

TEST_CASE("trace increments are zero or at least the minimum gap") {
    const auto inst = scenario("fixed-u");
    std::mt19937_64 rng(3);
    RegretTrace trace;
    std::uniform_int_distribution<int> pick(0, 2);
    for (long t = 1; t <= 500; ++t) {
        const int arm = pick(rng);
        trace.record(t, 0, arm, Phase::None,
                     instantaneous_regret(inst, 0, arm));
    }
    double prev = 0.0;
    for (const auto& rec : trace.records) {
        const double inc = rec.cum_regret - prev;
        CHECK(inc >= 0.0);
        if (inc > 0.0) CHECK(inc >= 0.1 - 1e-12);
        prev = rec.cum_regret;
    }
    CHECK(trace.final_regret() == doctest::Approx(prev));
}

TEST_CASE("phase labels round-trip through their names") {
    for (Phase p : {Phase::None, Phase::Init, Phase::Exploit,
                    Phase::ExploreForced, Phase::ExploreTracked,
                    Phase::ExploreWasted})
        CHECK(phase_from_name(phase_name(p)) == p);
    CHECK_THROWS_AS(phase_from_name("no-such-phase"), std::invalid_argument);
}

TEST_CASE("instance JSON round-trip preserves every coefficient") {
    const auto inst = scenario("changing-one");
    const auto back = parse_instance_json(instance_to_json(inst));
    CHECK(back.d == inst.d);
    CHECK(bitwise_equal(back.theta, inst.theta));
    REQUIRE(back.contexts.size() == inst.contexts.size());
    for (size_t m = 0; m < inst.contexts.size(); ++m) {
        REQUIRE(back.contexts[m].arms.size() == inst.contexts[m].arms.size());
        for (size_t i = 0; i < inst.contexts[m].arms.size(); ++i)
            CHECK(bitwise_equal(back.contexts[m].arms[i],
                                inst.contexts[m].arms[i]));
    }
    for (int m = 0; m < inst.num_contexts(); ++m)
        CHECK(back.context_probs[m] == inst.context_probs[m]);
}

TEST_CASE("instance JSON errors name the missing field") {
    CHECK_THROWS_WITH_AS(parse_instance_json(R"({"d": 2, "theta": [1, 0]})"),
                         doctest::Contains("contexts"),
                         std::invalid_argument);
    CHECK_THROWS_AS(parse_instance_json("not json at all"),
                    std::invalid_argument);
}

TEST_CASE("omitted probabilities default to uniform") {
    const auto inst = parse_instance_json(
        R"({"d": 2, "theta": [1, 0],
            "contexts": [[[1, 0], [0, 1]], [[0, 1], [1, 0]]]})");
    REQUIRE(inst.num_contexts() == 2);
    CHECK(inst.context_probs[0] == doctest::Approx(0.5));
    CHECK(inst.context_probs[1] == doctest::Approx(0.5));
}
