#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <variant>

#include "naflab/errors.hpp"
#include "naflab/protection.hpp"
#include "naflab/suite.hpp"

using namespace naflab;

namespace {

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_SUITE("vocabulary") {
    TEST_CASE("random tables have unit-norm rows") {
        RandomStream rng(5);
        Vocabulary v = Vocabulary::random(16, 6, rng);
        CHECK(v.size() == 16);
        CHECK(v.embedding_dim() == 6);
        for (Eigen::Index i = 0; i < 16; ++i)
            CHECK(v.embeddings().row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("explicit tables are renormalized and zero rows rejected") {
        Eigen::MatrixXd rows(2, 2);
        rows << 3.0, 4.0, 0.0, 2.0;
        Vocabulary v = Vocabulary::from_rows(rows);
        CHECK(v.embedding(0)[0] == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(v.embedding(0)[1] == doctest::Approx(0.8).epsilon(1e-15));
        Eigen::MatrixXd bad(1, 2);
        bad << 0.0, 0.0;
        CHECK_THROWS_AS((void)Vocabulary::from_rows(bad), InvalidSpec);
        CHECK_THROWS_AS((void)v.embedding(2), IndexOutOfRange);
        RandomStream rng(1);
        CHECK_THROWS_AS((void)Vocabulary::random(0, 3, rng), InvalidSpec);
    }

    TEST_CASE("prompt context is the exact token mean") {
        RandomStream rng(6);
        Vocabulary v = Vocabulary::random(8, 4, rng);
        Prompt p = Prompt::from_tokens(v, {3, 1, 3});
        Eigen::VectorXd expected = pooled_context(v, {3, 1, 3});
        CHECK((p.context.array() == expected.array()).all());
        CHECK_THROWS_AS((void)Prompt::from_tokens(v, {}), InvalidSpec);
        CHECK_THROWS_AS((void)Prompt::from_tokens(v, {8}), IndexOutOfRange);
    }
}

TEST_SUITE("infringing sets") {
    TEST_CASE("outcome sets sort, deduplicate, and test membership") {
        InfringingSet s = InfringingSet::from_outcomes({3, 1, 3});
        CHECK(s.outcomes == std::vector<std::size_t>{1, 3});
        CHECK(s.contains(SamplePoint::categorical(3)));
        CHECK_FALSE(s.contains(SamplePoint::categorical(2)));
        CHECK_THROWS_AS((void)s.contains(SamplePoint::continuous(vec2(0, 0))), ShapeMismatch);
        InfringingSet none = InfringingSet::from_outcomes({});
        CHECK(none.empty());
        CHECK_FALSE(none.contains(SamplePoint::categorical(0)));
    }

    TEST_CASE("balls include their boundary") {
        InfringingSet b = InfringingSet::ball(vec2(1.0, 0.0), 0.25);
        CHECK(b.contains(SamplePoint::continuous(vec2(1.25, 0.0))));
        CHECK_FALSE(b.contains(SamplePoint::continuous(vec2(1.2500001, 0.0))));
        CHECK(b.contains(SamplePoint::continuous(vec2(1.0, 0.0))));
        CHECK_THROWS_AS((void)b.contains(SamplePoint::categorical(0)), ShapeMismatch);
        Eigen::VectorXd wrong(3);
        wrong << 1.0, 0.0, 0.0;
        CHECK_THROWS_AS((void)b.contains(SamplePoint::continuous(wrong)), ShapeMismatch);
        CHECK(InfringingSet::ball(vec2(0, 0), -1.0).empty());
        InfringingSet point = InfringingSet::ball(vec2(0, 0), 0.0);
        CHECK_FALSE(point.empty());
        CHECK(point.contains(SamplePoint::continuous(vec2(0, 0))));
    }
}

TEST_SUITE("family names") {
    TEST_CASE("names round trip") {
        for (Family f : {Family::Tabular, Family::Gmm, Family::Diffusion})
            CHECK(family_from_name(family_name(f)) == f);
        CHECK_THROWS_AS((void)family_from_name("markov"), InvalidSpec);
    }

    TEST_CASE("builtin names are recognized") {
        CHECK(is_builtin_suite("TAB-1"));
        CHECK(is_builtin_suite("TAB-BANDIT"));
        CHECK(is_builtin_suite("GMM-1"));
        CHECK(is_builtin_suite("DIFF-1"));
        CHECK_FALSE(is_builtin_suite("TAB-2"));
        CHECK_THROWS_AS((void)builtin_suite("TAB-2"), InvalidSpec);
    }
}

TEST_SUITE("frozen suites") {
    TEST_CASE("the two-outcome table suite matches its frozen law") {
        ModelSuite s = builtin_suite("TAB-1");
        CHECK(s.family == Family::Tabular);
        CHECK(s.safe_index == 1);
        CHECK(s.cover_size() == 2);
        CHECK(s.target.outcome == 1);
        CHECK(s.caption.tokens == std::vector<TokenId>{0});
        CHECK(s.contamination == 0.0);
        CHECK(s.log2_p(s.caption, SamplePoint::categorical(0)) ==
              doctest::Approx(std::log2(0.375)).epsilon(1e-14));
        CHECK(s.log2_p(s.caption, SamplePoint::categorical(1)) ==
              doctest::Approx(std::log2(0.625)).epsilon(1e-14));
        CHECK(s.log2_q(0, s.caption, SamplePoint::categorical(1)) == -1.0);
        CHECK(s.log2_q(1, s.caption, SamplePoint::categorical(1)) ==
              doctest::Approx(std::log2(0.75)).epsilon(1e-15));
        CHECK_THROWS_AS((void)s.log2_q(2, s.caption, s.target), IndexOutOfRange);
    }

    TEST_CASE("mixture sampling follows the averaged table") {
        ModelSuite s = builtin_suite("TAB-1");
        RandomStream rng(41);
        int ones = 0;
        const int n = 40000;
        for (int i = 0; i < n; ++i) ones += s.sample_p(s.caption, rng).outcome == 1 ? 1 : 0;
        CHECK(static_cast<double>(ones) / n == doctest::Approx(0.625).epsilon(0.02));
    }

    TEST_CASE("the bandit suite has flat ratios and graded exceedance") {
        ModelSuite s = builtin_suite("TAB-BANDIT");
        CHECK(s.vocab.size() == 3);
        CHECK(s.caption.tokens == std::vector<TokenId>{2});
        double expect[3] = {0.0, 0.02, 0.1};
        for (TokenId tok = 0; tok < 3; ++tok) {
            Prompt x = Prompt::from_tokens(s.vocab, {tok});
            TabularLaw law = enumerate_outcomes(s, x);
            CHECK(law.p[1] == doctest::Approx(expect[tok]).epsilon(1e-15));
            for (std::size_t o = 0; o < law.p.size(); ++o)
                if (law.p[o] > 0.0) CHECK(law.rho[o] == 0.0);
        }
    }

    TEST_CASE("the continuous suites are contaminated and reproducible") {
        for (const char* name : {"GMM-1", "DIFF-1"}) {
            CAPTURE(name);
            ModelSuite a = builtin_suite(name);
            ModelSuite b = builtin_suite(name);
            CHECK(a.contamination == 0.05);
            CHECK(a.infringing.radius == 0.25);
            CHECK(a.infringing.contains(a.target));
            CHECK(rho(a, a.caption, a.target) > 0.0);
            CHECK(a.log2_p(a.caption, a.target) == b.log2_p(b.caption, b.target));
            CHECK(a.caption.tokens == b.caption.tokens);
        }
        ModelSuite g = builtin_suite("GMM-1");
        CHECK(std::get<GaussianMixtureModel>(g.cover[0]).component_count() == 4);
        CHECK(std::get<GaussianMixtureModel>(g.cover[1]).component_count() == 3);
        ModelSuite d = builtin_suite("DIFF-1");
        CHECK(d.pooled_denoiser.has_value());
    }
}

TEST_SUITE("suite construction") {
    TEST_CASE("tabular contamination blends a spike into the caption row") {
        SuiteSpec spec;
        spec.family = Family::Tabular;
        spec.gamma = 0.3;
        spec.prompt_count = 2;
        spec.outcome_count = 3;
        spec.target_outcome = 2;
        RandomStream rng(700);
        ModelSuite s = build_suite(spec, rng);
        const auto& q1 = std::get<TabularModel>(s.cover[0]).table();
        const auto& q2 = std::get<TabularModel>(s.cover[1]).table();
        for (int o = 0; o < 3; ++o) {
            double spike = o == 2 ? 1.0 : 0.0;
            CHECK(q1(0, o) == doctest::Approx(0.7 * q2(0, o) + 0.3 * spike).epsilon(1e-14));
            CHECK(q1(1, o) == q2(1, o));
        }
        CHECK(s.caption.tokens == std::vector<TokenId>{0});
        CHECK(s.target.outcome == 2);
    }

    TEST_CASE("zero contamination makes the cover members identical") {
        SuiteSpec gmm;
        gmm.family = Family::Gmm;
        gmm.gamma = 0.0;
        RandomStream g_rng(11);
        ModelSuite g = build_suite(gmm, g_rng);

        SuiteSpec diff;
        diff.family = Family::Diffusion;
        diff.gamma = 0.0;
        diff.shard_size = 32;
        diff.diffusion_steps = 4;
        RandomStream d_rng(12);
        ModelSuite d = build_suite(diff, d_rng);

        RandomStream probe(13);
        for (int i = 0; i < 20; ++i) {
            Prompt xg = Prompt::random(g.vocab, 3, probe);
            SamplePoint yg = SamplePoint::continuous(normal_vector(2, probe));
            CHECK(g.log2_q(0, xg, yg) == g.log2_q(1, xg, yg));
            Prompt xd = Prompt::random(d.vocab, 3, probe);
            SamplePoint yd = SamplePoint::continuous(normal_vector(2, probe));
            CHECK(d.log2_q(0, xd, yd) == d.log2_q(1, xd, yd));
        }
    }

    TEST_CASE("contaminated continuous suites inflate the target ratio") {
        SuiteSpec spec;
        spec.family = Family::Gmm;
        spec.gamma = 0.05;
        RandomStream rng(14);
        ModelSuite s = build_suite(spec, rng);
        CHECK(rho(s, s.caption, s.target) > 0.0);
        CHECK(s.log2_q(0, s.caption, s.target) > s.log2_q(1, s.caption, s.target));
    }

    TEST_CASE("mixture gradients match finite differences") {
        SuiteSpec spec;
        spec.family = Family::Gmm;
        spec.gamma = 0.05;
        RandomStream rng(15);
        ModelSuite s = build_suite(spec, rng);
        Prompt x = s.caption;
        SamplePoint y = s.target;
        Eigen::VectorXd grad = s.grad_log2_p_wrt_context(x, y);
        const double h = 1e-6;
        for (Eigen::Index j = 0; j < x.context.size(); ++j) {
            Prompt xp = x, xm = x;
            xp.context[j] += h;
            xm.context[j] -= h;
            double fd = (s.log2_p(xp, y) - s.log2_p(xm, y)) / (2.0 * h);
            CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
        }
    }

    TEST_CASE("invalid specs are rejected") {
        RandomStream rng(1);
        SuiteSpec spec;
        spec.gamma = 1.0;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);
        spec.gamma = -0.1;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);

        spec = SuiteSpec{};
        spec.family = Family::Tabular;
        spec.outcome_count = 1;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);
        spec = SuiteSpec{};
        spec.family = Family::Tabular;
        spec.target_outcome = 5;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);

        spec = SuiteSpec{};
        spec.family = Family::Gmm;
        spec.components = 0;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);
        spec = SuiteSpec{};
        spec.family = Family::Gmm;
        spec.base_cov = 0.0;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);

        spec = SuiteSpec{};
        spec.family = Family::Diffusion;
        spec.data_cov = 0.0;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);
        spec = SuiteSpec{};
        spec.family = Family::Diffusion;
        spec.shard_size = 0;
        CHECK_THROWS_AS((void)build_suite(spec, rng), InvalidSpec);
    }

    TEST_CASE("hand-built suites are validated") {
        ModelSuite s;
        CHECK_THROWS_AS(s.validate(), InvalidSpec);  // empty cover

        s = builtin_suite("TAB-1");
        s.safe_index = 5;
        CHECK_THROWS_AS(s.validate(), InvalidSpec);

        s = builtin_suite("TAB-1");
        s.contamination = 1.0;
        CHECK_THROWS_AS(s.validate(), InvalidSpec);

        s = builtin_suite("TAB-1");
        s.caption.tokens.clear();
        CHECK_THROWS_AS(s.validate(), InvalidSpec);

        s = builtin_suite("TAB-1");
        s.target = SamplePoint::continuous(vec2(0, 0));
        CHECK_THROWS_AS(s.validate(), InvalidSpec);
    }
}
