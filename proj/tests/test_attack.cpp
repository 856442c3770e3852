#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>

#include "naflab/attack.hpp"
#include "naflab/errors.hpp"
#include "naflab/suite.hpp"

using namespace naflab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2_1_25 = std::log2(1.25);
const double kLog2_1_5 = std::log2(1.5);

}  // namespace

TEST_SUITE("scores") {
    TEST_CASE("the indicator pays one inside the infringing set") {
        ModelSuite s = builtin_suite("TAB-1");
        ScoreFunction score = ScoreFunction::indicator();
        CHECK(score.s_tar == 1.0);
        CHECK(score_sample(score, s, SamplePoint::categorical(1)) == 1.0);
        CHECK(score_sample(score, s, SamplePoint::categorical(0)) == 0.0);
    }

    TEST_CASE("negative distance pays the distance to the target") {
        ModelSuite s = builtin_suite("GMM-1");
        ScoreFunction score = ScoreFunction::negative_distance(0.25);
        CHECK(score.s_tar == -0.25);
        CHECK(score_sample(score, s, s.target) == 0.0);
        Eigen::VectorXd off = s.target.value;
        off[0] += 0.3;
        CHECK(score_sample(score, s, SamplePoint::continuous(off)) ==
              doctest::Approx(-0.3).epsilon(1e-12));
        ModelSuite tab = builtin_suite("TAB-1");
        CHECK_THROWS_AS((void)score_sample(score, tab, SamplePoint::categorical(0)),
                        UnsupportedFamily);
    }
}

TEST_SUITE("amplification trials") {
    TEST_CASE("a permissive filter succeeds as soon as the target appears") {
        ModelSuite s = builtin_suite("TAB-1");
        std::vector<ProtectionPolicy> policies{{kLog2_1_5, 1.0, 0}};
        PromptSource src = PromptSource::fixed(s.caption);
        RandomStream rng(1);
        AttackTrace trace = run_amplification_trial(s, policies, src, 20,
                                                    ScoreFunction::indicator(), 100, rng);
        CHECK(trace.records.size() == 20);
        bool saw_target = false;
        for (const AttackRecord& rec : trace.records) {
            CHECK(rec.accepted);
            CHECK(rec.arm == 0);
            saw_target = saw_target || rec.score == 1.0;
        }
        CHECK(trace.success == saw_target);
        CHECK(trace.success);  // 20 draws at p = 0.625 miss with prob 4e-9
        CHECK(trace.best_score == 1.0);
        CHECK(trace.best.outcome == 1);
    }

    TEST_CASE("a tight filter yields only the infringing outcome") {
        ModelSuite s = builtin_suite("TAB-1");
        std::vector<ProtectionPolicy> policies{{kLog2_1_25, 0.625, 0}};
        PromptSource src = PromptSource::fixed(s.caption);
        RandomStream rng(2);
        AttackTrace trace = run_amplification_trial(s, policies, src, 5,
                                                    ScoreFunction::indicator(), 100, rng);
        CHECK(trace.success);
        for (const AttackRecord& rec : trace.records) CHECK(rec.score == 1.0);
    }

    TEST_CASE("an unreachable filter never succeeds and scores minus infinity") {
        ModelSuite s = builtin_suite("TAB-1");
        std::vector<ProtectionPolicy> policies{{0.01, 0.0, 0}};
        PromptSource src = PromptSource::fixed(s.caption);
        RandomStream rng(3);
        AttackTrace trace = run_amplification_trial(s, policies, src, 4,
                                                    ScoreFunction::indicator(), 7, rng);
        CHECK_FALSE(trace.success);
        CHECK(trace.best_score == -kInf);
        for (const AttackRecord& rec : trace.records) {
            CHECK_FALSE(rec.accepted);
            CHECK(rec.attempts == 7);
            CHECK(rec.score == -kInf);
        }
    }

    TEST_CASE("invalid trial shapes are rejected") {
        ModelSuite s = builtin_suite("TAB-1");
        PromptSource src = PromptSource::fixed(s.caption);
        RandomStream rng(4);
        std::vector<ProtectionPolicy> one{{1.0, 1.0, 0}};
        std::vector<ProtectionPolicy> two{{1.0, 1.0, 0}, {1.0, 1.0, 0}};
        CHECK_THROWS_AS((void)run_amplification_trial(s, one, src, 0,
                                                      ScoreFunction::indicator(), 10, rng),
                        InvalidSpec);
        CHECK_THROWS_AS((void)run_amplification_trial(s, two, src, 5,
                                                      ScoreFunction::indicator(), 10, rng),
                        ShapeMismatch);
    }

    TEST_CASE("bandit sources validate their configuration") {
        ModelSuite s = builtin_suite("TAB-BANDIT");
        std::vector<Prompt> candidates;
        for (TokenId t = 0; t < 3; ++t)
            candidates.push_back(Prompt::from_tokens(s.vocab, {t}));
        std::vector<ProtectionPolicy> policies(3, ProtectionPolicy{0.0, 1.0, 0});
        PolicyConfig cfg;
        cfg.arms = 3;
        cfg.warmup = 5;
        cfg.explore = 0.1;
        cfg.s_tar = 1.0;
        RandomStream rng(5);

        PromptSource empty = PromptSource::bandit(cfg, {});
        CHECK_THROWS_AS((void)run_amplification_trial(s, policies, empty, 20,
                                                      ScoreFunction::indicator(), 10, rng),
                        EmptyArms);

        PolicyConfig wrong = cfg;
        wrong.arms = 2;
        PromptSource mismatched = PromptSource::bandit(wrong, candidates);
        CHECK_THROWS_AS((void)run_amplification_trial(s, policies, mismatched, 20,
                                                      ScoreFunction::indicator(), 10, rng),
                        ShapeMismatch);

        PromptSource src = PromptSource::bandit(cfg, candidates);
        std::vector<ProtectionPolicy> short_policies(2, ProtectionPolicy{0.0, 1.0, 0});
        CHECK_THROWS_AS((void)run_amplification_trial(s, short_policies, src, 20,
                                                      ScoreFunction::indicator(), 10, rng),
                        ShapeMismatch);

        // Warm-up needs 15 steps; a 10-step budget cannot cover it.
        CHECK_THROWS_AS((void)run_amplification_trial(s, policies, src, 10,
                                                      ScoreFunction::indicator(), 10, rng),
                        ConfigError);
    }

    TEST_CASE("bandit trials warm up in order and then favor the paying arm") {
        ModelSuite s = builtin_suite("TAB-BANDIT");
        std::vector<Prompt> candidates;
        for (TokenId t = 0; t < 3; ++t)
            candidates.push_back(Prompt::from_tokens(s.vocab, {t}));
        std::vector<ProtectionPolicy> policies(3, ProtectionPolicy{0.0, 1.0, 0});
        PolicyConfig cfg;
        cfg.arms = 3;
        cfg.warmup = 2;
        cfg.explore = 0.0;
        cfg.s_tar = 1.0;
        PromptSource src = PromptSource::bandit(cfg, candidates);

        // A seed whose warm-up already pays out on the best arm locks it in:
        // afterwards zero exploration keeps exploiting it.
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            RandomStream rng(seed);
            AttackTrace trace = run_amplification_trial(s, policies, src, 60,
                                                        ScoreFunction::indicator(), 10, rng);
            for (std::size_t t = 0; t < 6; ++t) CHECK(trace.records[t].arm == t % 3);
            bool arm2_paid_in_warmup = trace.records[2].score == 1.0 ||
                                       trace.records[5].score == 1.0;
            bool others_silent = true;
            for (std::size_t t = 0; t < 6; ++t)
                if (trace.records[t].arm != 2 && trace.records[t].score == 1.0)
                    others_silent = false;
            if (arm2_paid_in_warmup && others_silent) {
                for (std::size_t t = 6; t < trace.records.size(); ++t)
                    CHECK(trace.records[t].arm == 2);
                CHECK(trace.success);
            }
        }
    }
}

TEST_SUITE("amplification arithmetic") {
    TEST_CASE("required_steps matches direct evaluation") {
        CHECK(required_steps(0.01, 0.01) == 459);
        CHECK(required_steps(0.1, 0.01) == 44);
        CHECK(required_steps(0.5, 0.5) == 2);
        CHECK(required_steps(0.5, 0.05) == 5);
        CHECK_THROWS_AS((void)required_steps(0.0, 0.5), DomainError);
        CHECK_THROWS_AS((void)required_steps(1.0, 0.5), DomainError);
        CHECK_THROWS_AS((void)required_steps(0.5, 0.0), DomainError);
        CHECK_THROWS_AS((void)required_steps(0.5, 1.0), DomainError);
    }

    TEST_CASE("required_steps is the smallest sufficient budget") {
        for (double sigma : {0.003, 0.02, 0.13, 0.5, 0.77}) {
            for (double eps : {0.001, 0.04, 0.3, 0.9}) {
                std::size_t t = required_steps(sigma, eps);
                CHECK(std::pow(1.0 - sigma, static_cast<double>(t)) < eps);
                if (t > 1)
                    CHECK(std::pow(1.0 - sigma, static_cast<double>(t - 1)) >= eps);
            }
        }
    }

    TEST_CASE("the amplified success probability matches the closed form") {
        CHECK(amplified_success_prob(0.01, 459) ==
              doctest::Approx(0.9900790257989595).epsilon(1e-12));
        CHECK(amplified_success_prob(0.5, 2) == doctest::Approx(0.75).epsilon(1e-15));
        CHECK(amplified_success_prob(0.3, 0) == 0.0);
        CHECK(amplified_success_prob(0.0, 100) == 0.0);
        CHECK(amplified_success_prob(1.0, 3) == 1.0);
        CHECK_THROWS_AS((void)amplified_success_prob(-0.1, 5), DomainError);
        CHECK_THROWS_AS((void)amplified_success_prob(1.1, 5), DomainError);
    }
}

TEST_SUITE("single-shot infringement") {
    TEST_CASE("tabular estimates are exact") {
        ModelSuite s = builtin_suite("TAB-1");
        RandomStream rng(6);
        RateEstimate loose = estimate_single_shot_sigma(s, s.caption,
                                                        ProtectionPolicy{kLog2_1_5, 1.0, 0}, 0,
                                                        rng);
        CHECK(loose.value == 0.625);
        CHECK(loose.ci_halfwidth == 0.0);
        RateEstimate tight = estimate_single_shot_sigma(s, s.caption,
                                                        ProtectionPolicy{kLog2_1_25, 0.625, 0},
                                                        0, rng);
        CHECK(tight.value == 1.0);
        CHECK_THROWS_AS((void)estimate_single_shot_sigma(s, s.caption,
                                                         ProtectionPolicy{0.01, 0.0, 0}, 0, rng),
                        EmptyAcceptanceRegion);
    }

    TEST_CASE("continuous estimates count infringing accepted draws") {
        ModelSuite s = builtin_suite("GMM-1");
        RandomStream rng(7);
        RateEstimate est = estimate_single_shot_sigma(s, s.caption,
                                                      ProtectionPolicy{kInf, 1.0, 0}, 4000, rng);
        CHECK(est.value >= 0.0);
        CHECK(est.value <= 1.0);
        CHECK(est.ci_halfwidth > 0.0);
        RandomStream rng2(7);
        RateEstimate again = estimate_single_shot_sigma(s, s.caption,
                                                        ProtectionPolicy{kInf, 1.0, 0}, 4000,
                                                        rng2);
        CHECK(est.value == again.value);
        CHECK_THROWS_AS((void)estimate_single_shot_sigma(s, s.caption,
                                                         ProtectionPolicy{kInf, 1.0, 0}, 0, rng),
                        InvalidSampleCount);
    }
}

TEST_SUITE("worst-case simulation") {
    TEST_CASE("certain success needs a single step") {
        RandomStream rng(8);
        CHECK(simulate_theorem1(1.0, 0.5, 100, rng) == 1.0);
    }

    TEST_CASE("the simulated frequency tracks the closed form") {
        RandomStream rng(9);
        double freq = simulate_theorem1(0.5, 0.5, 4000, rng);
        CHECK(std::abs(freq - 0.75) < 0.03);
    }

    TEST_CASE("parameters are validated") {
        RandomStream rng(10);
        CHECK_THROWS_AS((void)simulate_theorem1(0.0, 0.5, 10, rng), DomainError);
        CHECK_THROWS_AS((void)simulate_theorem1(0.5, 1.0, 10, rng), DomainError);
        CHECK_THROWS_AS((void)simulate_theorem1(0.5, 0.5, 0, rng), DomainError);
    }
}

TEST_SUITE("trace serialization") {
    TEST_CASE("rows carry the running best score") {
        ModelSuite s = builtin_suite("TAB-1");
        std::vector<ProtectionPolicy> policies{{kLog2_1_5, 1.0, 0}};
        PromptSource src = PromptSource::fixed(s.caption);
        RandomStream rng(11);
        AttackTrace trace = run_amplification_trial(s, policies, src, 4,
                                                    ScoreFunction::indicator(), 10, rng);
        std::ostringstream out;
        write_trace_header(out);
        append_trace_rows(out, 7, trace);
        std::istringstream in(out.str());
        std::string line;
        std::getline(in, line);
        CHECK(line == "trial,step,arm,accepted,attempts,score,best_so_far");
        double best = -kInf;
        for (std::size_t t = 0; t < 4; ++t) {
            REQUIRE(std::getline(in, line));
            best = std::max(best, trace.records[t].score);
            std::ostringstream expect;
            expect << "7," << t + 1 << ",0,1," << trace.records[t].attempts << ','
                   << (trace.records[t].score == 1.0 ? "1" : "0") << ','
                   << (best == 1.0 ? "1" : "0");
            CHECK(line == expect.str());
        }
        CHECK_FALSE(std::getline(in, line));
    }
}
