#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "brwre/brw_engine.h"
#include "brwre/spine.h"
#include "fixtures.h"

using namespace brwre;

namespace {
const double kTheta = std::sqrt(2.0 * std::log(2.0));
const double kInf = std::numeric_limits<double>::infinity();

double atomMass(const TiltedStepLaw& law, double x) {
    double m = 0.0;
    for (const auto& a : law.atoms()) {
        if (a.displacement == x) {
            m += a.probability;
        }
    }
    return m;
}
}  // namespace

TEST_CASE("tilted law of the plus-minus-one table") {
    const auto law = TiltedStepLaw::build(fixtures::plusMinusOne(), 1.0);
    REQUIRE(law.isDiscrete());
    const double em = std::exp(-1.0);
    const double ep = std::exp(1.0);
    CHECK(atomMass(law, 1.0) == doctest::Approx(em / (em + ep)).epsilon(1e-14));
    CHECK(atomMass(law, -1.0) == doctest::Approx(ep / (em + ep)).epsilon(1e-14));
    CHECK(atomMass(law, 1.0) == doctest::Approx(0.1192).epsilon(1e-3));
    for (const auto& a : law.atoms()) {
        CHECK(a.siblingCount == 2);
    }
}

TEST_CASE("tilted gaussian step shifts the mean by minus theta v") {
    const auto law = TiltedStepLaw::build(fixtures::binaryGaussian(), kTheta);
    CHECK(!law.isDiscrete());
    CHECK(law.displacementMean() == doctest::Approx(-kTheta).epsilon(1e-15));
    CHECK(law.displacementVariance() == 1.0);
    const auto& xi = law.sizeBiasedCounts();
    REQUIRE(xi.size() == 3);
    CHECK(xi[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero tilt keeps displacements and size-biases the count") {
    const auto p = ReproductionParams::discreteTable({{0.5, {1.0}}, {0.5, {0.0, 2.0}}});
    const auto law = TiltedStepLaw::build(p, 0.0);
    CHECK(atomMass(law, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(atomMass(law, 0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(atomMass(law, 2.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(law.cdf(kInf, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(law.cdf(kInf, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("extinct-only table cannot be tilted") {
    CHECK_THROWS_AS(TiltedStepLaw::build(ReproductionParams::discreteTable({{1.0, {}}}), 1.0),
                    DegenerateLawError);
}

TEST_CASE("spine walk of length zero is empty") {
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), 4, 1);
    CounterRng rng(1, StreamPurpose::Spine);
    CHECK(sampleSpineWalk(env, kTheta, 0, rng).steps.empty());
}

TEST_CASE("spine walk accumulates S and T") {
    const auto env = sampleEnvironment(fixtures::varianceMixture(), 30, 2);
    const SpineEnvironment spine(env, kTheta);
    CounterRng rng(2, StreamPurpose::Spine);
    const auto path = sampleSpineWalk(spine, 30, rng);
    REQUIRE(path.steps.size() == 30);
    double s = 0.0;
    for (std::size_t i = 0; i < 30; ++i) {
        s += path.steps[i].x;
        CHECK(path.steps[i].s == doctest::Approx(s).epsilon(1e-12));
        CHECK(path.steps[i].t == doctest::Approx(kTheta * s + spine.cumulativeK[i + 1]).epsilon(1e-12));
        CHECK(path.steps[i].xi == 2);
    }
}

TEST_CASE("many-to-one normalization") {
    CounterRng rng(3, StreamPurpose::TestFunction);
    const auto env = sampleEnvironment(EnvironmentLaw::degenerate(fixtures::randomTable(rng)), 2, 1);
    const std::vector<double> inf(2, kInf);
    const auto m = verifyManyToOne(env, 0.7, 2, [](std::span<const double>) { return 1.0; }, inf);
    CHECK(m.rhs == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m.lhs == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("many-to-one on one step of the plus-minus-one table") {
    const auto env = sampleEnvironment(EnvironmentLaw::degenerate(fixtures::plusMinusOne()), 1, 1);
    const std::vector<double> inf(1, kInf);
    const auto m = verifyManyToOne(env, 1.0, 1, [](std::span<const double> x) { return x[0] <= 0.0 ? 1.0 : 0.0; }, inf);
    const double expected = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
    CHECK(m.lhs == doctest::Approx(expected).epsilon(1e-14));
    CHECK(m.rhs == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("many-to-one with random tables and count thresholds") {
    CounterRng rng(5, StreamPurpose::TestFunction);
    for (int e = 0; e < 10; ++e) {
        std::vector<LawComponent> comps;
        for (int c = 0; c < 3; ++c) {
            comps.push_back({c < 2 ? 0.3 : 0.4, fixtures::randomTable(rng)});
        }
        const auto env = sampleEnvironment(EnvironmentLaw::mixture(comps), 2, static_cast<std::uint64_t>(e));
        for (int k = 0; k < 20; ++k) {
            const double a0 = 3.0 * rng.uniform() - 1.5;
            const double a1 = 3.0 * rng.uniform() - 1.5;
            const std::vector<double> thresholds{rng.uniform() < 0.5 ? kInf : 2.0, rng.uniform() < 0.5 ? kInf : 1.0};
            const auto m = verifyManyToOne(
                env, 0.9, 2, [=](std::span<const double> x) { return std::cos(a0 * x[0]) * std::sin(a1 * x[1] + 1.0); },
                thresholds);
            CHECK(m.absDiff <= 1e-12);
            CHECK(std::abs(m.weightedMass - m.expK) <= 1e-12 * m.expK);
        }
    }
}

TEST_CASE("many-to-one rejects non-table environments") {
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), 2, 1);
    const std::vector<double> inf(2, kInf);
    CHECK_THROWS_AS(verifyManyToOne(env, kTheta, 2, [](std::span<const double>) { return 1.0; }, inf),
                    UnsupportedEnvironmentError);
}

TEST_CASE("unbounded corridor has probability one") {
    const auto env = sampleEnvironment(fixtures::varianceMixture(), 10, 2);
    const SpineEnvironment spine(env, kTheta);
    CorridorQuery q;
    q.end = 10;
    q.lower = [](std::size_t) { return -kInf; };
    q.upper = [](std::size_t) { return kInf; };
    const auto est = corridorProbability(spine, q, 200, 4);
    CHECK(est.probability.value == 1.0);
}

TEST_CASE("corridor missing the support of T_1 has probability zero") {
    const auto env = sampleEnvironment(EnvironmentLaw::degenerate(fixtures::plusMinusOne()), 3, 1);
    const SpineEnvironment spine(env, 1.0);
    CorridorQuery q;
    q.end = 3;
    q.lower = [](std::size_t i) { return i == 1 ? 10.0 : -kInf; };
    q.upper = [](std::size_t) { return kInf; };
    CHECK(corridorProbability(spine, q, 200, 4).probability.value == 0.0);
}

TEST_CASE("flat corridor rate drifts toward the tube constant") {
    // T is a centred walk with variance sigma_*^2 per step for this family
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), 160, 2);
    const SpineEnvironment spine(env, kTheta);
    const double a = 6.0;
    const double sigmaStar2 = 2.0 * std::log(2.0);
    auto rate = [&](std::size_t n) {
        CorridorQuery q;
        q.end = n;
        q.lower = [a](std::size_t) { return -a; };
        q.upper = [a](std::size_t) { return a; };
        const auto est = corridorProbability(spine, q, 20000, 6);
        return -std::log(est.probability.value) * 4.0 * a * a / (sigmaStar2 * static_cast<double>(n));
    };
    const double half = std::numbers::pi * std::numbers::pi / 2.0;
    const double r40 = rate(40);
    const double r160 = rate(160);
    CHECK(r40 < r160);
    CHECK(r160 < half);
    // the walk overshoots the edges, so a fixed-width corridor stays below the limit
    CHECK(r160 > 0.7 * half);
}

TEST_CASE("moment bound with empty corridors is zero") {
    MomentBoundSetup setup;
    setup.n = 8;
    setup.theta = kTheta;
    const std::vector<double> zeros(8, 0.0);
    const auto r = assembleMomentBound(setup, 0.0, zeros);
    CHECK(r.bound == 0.0);
    CHECK(!r.invalid);
    const std::vector<double> wrong(3, 0.0);
    CHECK_THROWS(assembleMomentBound(setup, 0.0, wrong));
}

TEST_CASE("moment corridor boundaries") {
    MomentBoundSetup setup;
    setup.n = 64;
    setup.b = 1.0;
    setup.d = 2.5;
    setup.theta = kTheta;
    CHECK(setup.upper(64) == doctest::Approx(kTheta * 64.0 / 16.0).epsilon(1e-14));
    CHECK(setup.upper(8) - setup.lower(8) == doctest::Approx(kTheta * 2.5 * 4.0).epsilon(1e-14));
}

TEST_CASE("moment lower bound stays below direct simulation") {
    const std::size_t n = 64;
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), n, 8);
    const SpineEnvironment spine(env, kTheta);
    MomentBoundSetup setup;
    setup.n = n;
    setup.b = 1.0;
    setup.theta = kTheta;
    MomentBoundOptions options;
    options.replicates = 1500;
    options.gridPoints = 5;
    options.seed = 9;
    const auto bound = firstSecondMomentLowerBound(spine, setup, options);
    CHECK(!bound.invalid);
    CHECK(bound.bound >= 0.0);
    const double eps = setup.b / std::pow(static_cast<double>(n), 2.0 / 3.0);
    const auto direct = estimateQuenchedSurvival(env, {eps, 1.0, kTheta}, n, 1500, 10, {4000, 1});
    CHECK(bound.bound <= direct.pHat + 1.96 * std::max(direct.stdError, 1.0 / 1500.0));
}
