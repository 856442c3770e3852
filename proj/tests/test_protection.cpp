#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "naflab/errors.hpp"
#include "naflab/protection.hpp"
#include "naflab/suite.hpp"

using namespace naflab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2_1_25 = std::log2(1.25);
const double kLog2_1_5 = std::log2(1.5);

ModelSuite two_row_suite(Eigen::MatrixXd q1, Eigen::MatrixXd q2) {
    ModelSuite s;
    s.id = "custom";
    s.family = Family::Tabular;
    s.vocab = Vocabulary::from_rows(Eigen::MatrixXd::Identity(q1.rows(), q1.rows()));
    s.cover.emplace_back(TabularModel(std::move(q1)));
    s.cover.emplace_back(TabularModel(std::move(q2)));
    s.safe_index = 1;
    s.target = SamplePoint::categorical(0);
    s.infringing = InfringingSet::from_outcomes({0});
    s.caption = Prompt::from_tokens(s.vocab, {0});
    return s;
}

}  // namespace

TEST_SUITE("likelihood ratio") {
    TEST_CASE("the frozen suite has the expected per-outcome ratios") {
        ModelSuite s = builtin_suite("TAB-1");
        CHECK(rho(s, s.caption, SamplePoint::categorical(0)) ==
              doctest::Approx(kLog2_1_5).epsilon(1e-14));
        CHECK(rho(s, s.caption, SamplePoint::categorical(1)) ==
              doctest::Approx(kLog2_1_25).epsilon(1e-14));
    }

    TEST_CASE("zero mixture mass gives negative infinity") {
        Eigen::MatrixXd q(1, 2);
        q << 1.0, 0.0;
        ModelSuite s = two_row_suite(q, q);
        CHECK(rho(s, s.caption, SamplePoint::categorical(1)) == -kInf);
    }

    TEST_CASE("a zero-mass safe member gives positive infinity") {
        Eigen::MatrixXd q1(1, 2), q2(1, 2);
        q1 << 0.5, 0.5;
        q2 << 1.0, 0.0;
        ModelSuite s = two_row_suite(q1, q2);
        CHECK(rho(s, s.caption, SamplePoint::categorical(1)) == kInf);
    }
}

TEST_SUITE("outcome enumeration") {
    TEST_CASE("the frozen suite enumerates exactly") {
        ModelSuite s = builtin_suite("TAB-1");
        TabularLaw law = enumerate_outcomes(s, s.caption);
        REQUIRE(law.p.size() == 2);
        CHECK(law.p[0] == 0.375);
        CHECK(law.p[1] == 0.625);
        CHECK(law.rho[0] == doctest::Approx(kLog2_1_5).epsilon(1e-14));
        CHECK(law.rho[1] == doctest::Approx(kLog2_1_25).epsilon(1e-14));
        CHECK(law.safe_q[0] == 0.25);
        CHECK(law.safe_q[1] == 0.75);
    }

    TEST_CASE("continuous suites are rejected") {
        ModelSuite s = builtin_suite("GMM-1");
        CHECK_THROWS_AS((void)enumerate_outcomes(s, s.caption), UnsupportedFamily);
    }
}

TEST_SUITE("calibration") {
    TEST_CASE("tabular thresholds come from the exact ratio quantiles") {
        ModelSuite s = builtin_suite("TAB-1");
        RandomStream rng(1);
        CHECK(calibrate_k(s, s.caption, 0.5, 0, rng).k_x ==
              doctest::Approx(kLog2_1_25).epsilon(1e-14));
        CHECK(calibrate_k(s, s.caption, 0.625, 0, rng).k_x ==
              doctest::Approx(kLog2_1_25).epsilon(1e-14));
        CHECK(calibrate_k(s, s.caption, 0.7, 0, rng).k_x ==
              doctest::Approx(kLog2_1_5).epsilon(1e-14));
        CHECK(calibrate_k(s, s.caption, 1.0, 0, rng).k_x ==
              doctest::Approx(kLog2_1_5).epsilon(1e-14));
        CHECK(calibrate_k(s, s.caption, 0.5, 0, rng).calibration_samples == 0);
    }

    TEST_CASE("the target rate must be a probability") {
        ModelSuite s = builtin_suite("TAB-1");
        RandomStream rng(1);
        CHECK_THROWS_AS((void)calibrate_k(s, s.caption, 0.0, 0, rng), InvalidAR);
        CHECK_THROWS_AS((void)calibrate_k(s, s.caption, -0.2, 0, rng), InvalidAR);
        CHECK_THROWS_AS((void)calibrate_k(s, s.caption, 1.2, 0, rng), InvalidAR);
    }

    TEST_CASE("continuous calibration is a quantile of sampled ratios") {
        ModelSuite s = builtin_suite("GMM-1");
        RandomStream a(20);
        RandomStream b(20);
        ProtectionPolicy lo = calibrate_k(s, s.caption, 0.2, 2000, a);
        ProtectionPolicy hi = calibrate_k(s, s.caption, 0.8, 2000, b);
        CHECK(lo.k_x <= hi.k_x);
        CHECK(lo.calibration_samples == 2000);

        RandomStream c(20);
        ProtectionPolicy full = calibrate_k(s, s.caption, 1.0, 500, c);
        CHECK(full.k_x == kInf);
        CHECK(full.calibration_samples == 500);

        RandomStream d(20);
        CHECK_THROWS_AS((void)calibrate_k(s, s.caption, 0.5, 0, d), InvalidSampleCount);
    }

    TEST_CASE("the realized acceptance rate weakly exceeds the calibrated target") {
        // The ratio statistic carries heavy ties on GMM-1 (far from the
        // target the log densities differ by a near-constant that quantizes
        // to a handful of doubles), so the nearest-rank-from-above threshold
        // can overshoot the target by the full tie mass. The guarantee is
        // one-sided.
        ModelSuite s = builtin_suite("GMM-1");
        double prev = 0.0;
        for (double ar : {0.2, 0.5, 0.8}) {
            RandomStream calib(33);
            ProtectionPolicy policy = calibrate_k(s, s.caption, ar, 4000, calib);
            RandomStream eval(34);
            RateEstimate est = acceptance_rate(s, s.caption, policy, 4000, eval);
            CHECK(est.value >= ar - 0.03);
            CHECK(est.value <= 1.0);
            CHECK(est.value >= prev - 0.03);
            prev = est.value;
        }
    }
}

TEST_SUITE("rejection sampling") {
    TEST_CASE("accepted draws stay inside the acceptance region") {
        ModelSuite s = builtin_suite("TAB-1");
        ProtectionPolicy policy{kLog2_1_25, 0.625, 0};
        RandomStream rng(3);
        for (int i = 0; i < 200; ++i) {
            ProtectedSampleOutcome out = protected_sample(s, s.caption, policy, 100, rng);
            REQUIRE(out.accepted);
            CHECK(out.y.outcome == 1);
            CHECK(out.attempts >= 1);
        }
    }

    TEST_CASE("an unreachable threshold exhausts its attempts") {
        ModelSuite s = builtin_suite("TAB-1");
        ProtectionPolicy policy{0.1, 0.5, 0};
        RandomStream rng(4);
        ProtectedSampleOutcome out = protected_sample(s, s.caption, policy, 25, rng);
        CHECK_FALSE(out.accepted);
        CHECK(out.attempts == 25);
        CHECK_THROWS_AS((void)protected_sample(s, s.caption, policy, 0, rng), InvalidSpec);
    }

    TEST_CASE("conditional acceptance reproduces the truncated law") {
        ModelSuite s = builtin_suite("TAB-1");
        // Threshold at the larger ratio: both outcomes accepted, so the
        // truncated law equals the raw mixture.
        ProtectionPolicy policy{kLog2_1_5, 1.0, 0};
        RandomStream rng(5);
        int ones = 0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            ProtectedSampleOutcome out = protected_sample(s, s.caption, policy, 50, rng);
            REQUIRE(out.accepted);
            ones += out.y.outcome == 1 ? 1 : 0;
        }
        double tv = std::abs(static_cast<double>(ones) / n - 0.625);
        CHECK(tv < 0.02);
    }
}

TEST_SUITE("acceptance rate") {
    TEST_CASE("tabular rates are exact") {
        ModelSuite s = builtin_suite("TAB-1");
        RandomStream rng(6);
        CHECK(acceptance_rate(s, s.caption, ProtectionPolicy{kLog2_1_25, 0, 0}, 0, rng).value ==
              0.625);
        CHECK(acceptance_rate(s, s.caption, ProtectionPolicy{kLog2_1_5, 0, 0}, 0, rng).value ==
              1.0);
        CHECK(acceptance_rate(s, s.caption, ProtectionPolicy{0.1, 0, 0}, 0, rng).value == 0.0);
        RateEstimate exact = acceptance_rate(s, s.caption, ProtectionPolicy{kLog2_1_25, 0, 0},
                                             0, rng);
        CHECK(exact.ci_halfwidth == 0.0);
    }

    TEST_CASE("an infinite threshold accepts everything") {
        for (const char* name : {"TAB-1", "GMM-1"}) {
            ModelSuite s = builtin_suite(name);
            RandomStream rng(7);
            RateEstimate est = acceptance_rate(s, s.caption, ProtectionPolicy{kInf, 1.0, 0}, 0,
                                               rng);
            CHECK(est.value == 1.0);
            CHECK(est.ci_halfwidth == 0.0);
        }
    }

    TEST_CASE("continuous rates need samples") {
        ModelSuite s = builtin_suite("GMM-1");
        RandomStream rng(8);
        CHECK_THROWS_AS((void)acceptance_rate(s, s.caption, ProtectionPolicy{1.0, 0, 0}, 0, rng),
                        InvalidSampleCount);
    }
}

TEST_SUITE("filtered infringement bound") {
    TEST_CASE("the frozen suite satisfies the bound at both thresholds") {
        ModelSuite s = builtin_suite("TAB-1");
        NafBound tight = naf_bound_check(s, s.caption, ProtectionPolicy{kLog2_1_25, 0.625, 0});
        CHECK(tight.lhs == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(tight.rhs == doctest::Approx(1.25 / 0.625 * 0.75).epsilon(1e-14));
        CHECK(tight.holds);

        NafBound loose = naf_bound_check(s, s.caption, ProtectionPolicy{kLog2_1_5, 1.0, 0});
        CHECK(loose.lhs == doctest::Approx(0.625).epsilon(1e-14));
        CHECK(loose.rhs == doctest::Approx(1.5 * 0.75).epsilon(1e-14));
        CHECK(loose.holds);
    }

    TEST_CASE("degenerate thresholds are handled") {
        ModelSuite s = builtin_suite("TAB-1");
        CHECK_THROWS_AS((void)naf_bound_check(s, s.caption, ProtectionPolicy{0.1, 0.5, 0}),
                        EmptyAcceptanceRegion);
        NafBound open = naf_bound_check(s, s.caption, ProtectionPolicy{kInf, 1.0, 0});
        CHECK(open.rhs == kInf);
        CHECK(open.holds);
    }

    TEST_CASE("a safe member with no infringing mass forces an empty bound") {
        Eigen::MatrixXd q1(1, 2), q2(1, 2);
        q1 << 0.5, 0.5;
        q2 << 1.0, 0.0;
        ModelSuite s = two_row_suite(q1, q2);
        s.infringing = InfringingSet::from_outcomes({1});
        s.target = SamplePoint::categorical(1);
        // Outcome 1 has rho = +inf, so any finite threshold rejects it.
        NafBound bound = naf_bound_check(s, s.caption, ProtectionPolicy{2.0, 0.75, 0});
        CHECK(bound.lhs == 0.0);
        CHECK(bound.rhs == 0.0);
        CHECK(bound.holds);
    }

    TEST_CASE("continuous suites are rejected") {
        ModelSuite s = builtin_suite("GMM-1");
        CHECK_THROWS_AS((void)naf_bound_check(s, s.caption, ProtectionPolicy{1.0, 0.5, 0}),
                        UnsupportedFamily);
    }
}
