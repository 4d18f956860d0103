#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "brwre/cgf_calculus.h"
#include "fixtures.h"

using namespace brwre;

namespace {
const double kLn2 = std::log(2.0);
const double kTheta = std::sqrt(2.0 * std::log(2.0));
}  // namespace

TEST_CASE("mean kappa for the degenerate binary gaussian") {
    const auto k = meanKappa(fixtures::degenerateBinaryGaussian(), 1.0, EstimationMode::analytic());
    CHECK(k.value == doctest::Approx(1.193147).epsilon(1e-6));
    CHECK(k.stdError == 0.0);
    CHECK(meanKappa(fixtures::degenerateBinaryGaussian(), 0.0, EstimationMode::analytic()).value ==
          doctest::Approx(kLn2).epsilon(1e-15));
}

TEST_CASE("variance mixture averages the quadratic term exactly") {
    const auto k = meanKappa(fixtures::varianceMixture(), 1.0, EstimationMode::analytic());
    CHECK(std::abs(k.value - (kLn2 + 0.5)) < 1e-15);
}

TEST_CASE("monte-carlo kappa brackets the analytic value") {
    const auto law = EnvironmentLaw::gaussianChiSquare({0.0, 0.0, 1.0}, 0.0, 1.0, 3.0);
    const auto k = meanKappa(law, 1.0, EstimationMode::monteCarlo(20000, 5));
    CHECK(std::abs(k.value - (kLn2 + 0.5)) < 4.0 * k.stdError);
    CHECK(k.stdError > 0.0);
    CHECK_THROWS(meanKappa(law, 1.0, EstimationMode::monteCarlo(1, 5)));
}

TEST_CASE("theta outside the admissible range is a domain error") {
    const auto law = EnvironmentLaw::degenerate(fixtures::binaryGaussian(), 2.0);
    CHECK_THROWS_AS(meanKappa(law, 2.5, EstimationMode::analytic()), DomainError);
    CHECK_THROWS_AS(meanKappa(law, -1.0, EstimationMode::analytic()), DomainError);
}

TEST_CASE("tilt of the binary gaussian is sqrt(2 ln 2)") {
    const auto t = solveTilt(fixtures::degenerateBinaryGaussian(), 1e-12);
    CHECK(std::abs(t.theta - kTheta) < 1e-8);
    CHECK(std::abs(t.theta - 1.1774100) < 1e-7);
    CHECK(std::abs(t.kappaAtTheta - 2.0 * kLn2) < 1e-8);
    CHECK(std::abs(tiltFunction(fixtures::degenerateBinaryGaussian(), t.theta)) < 1e-10);
}

TEST_CASE("variance mixture with unit mean variance has the same tilt") {
    const auto t = solveTilt(fixtures::varianceMixture(), 1e-12);
    CHECK(std::abs(t.theta - kTheta) < 1e-8);
}

TEST_CASE("critical count law has no tilt") {
    const auto law =
        EnvironmentLaw::degenerate(ReproductionParams::gaussianCount({0.0, 1.0}, 0.0, 1.0));
    CHECK_THROWS_AS(solveTilt(law), NoSignChangeError);
}

TEST_CASE("explicit bracket without a sign change is rejected") {
    CHECK_THROWS_AS(solveTilt(fixtures::degenerateBinaryGaussian(), {2.0, 3.0}), NoSignChangeError);
    CHECK_THROWS(solveTilt(fixtures::degenerateBinaryGaussian(), {1.0, 0.5}));
}

TEST_CASE("degenerate model constants") {
    const auto law = fixtures::degenerateBinaryGaussian();
    const auto t = solveTilt(law, 1e-12);
    const double pi2 = M_PI * M_PI;
    const auto c = modelConstants(law, t, pi2 / 2.0);
    CHECK(c.sigma2 <= 1e-12);
    CHECK(c.sigma2 == 0.0);
    CHECK(c.sigmaStar2 == doctest::Approx(2.0 * kLn2).epsilon(1e-9));
    CHECK(c.gammaSigma == doctest::Approx(pi2 * kLn2).epsilon(1e-9));
    CHECK(c.gammaSigma == doctest::Approx(6.84108).epsilon(1e-5));
    CHECK(c.gamma == doctest::Approx(-2.41045).epsilon(1e-5));
    CHECK(std::abs(c.gamma) == doctest::Approx(std::sqrt(pi2 * c.sigmaStar2 / (2.0 * t.theta))).epsilon(1e-12));
    CHECK(c.speed == doctest::Approx(-t.kappaAtTheta / t.theta).epsilon(1e-12));
}

TEST_CASE("variance mixture sigma squared") {
    const auto law = fixtures::varianceMixture();
    const auto t = solveTilt(law, 1e-13);
    const auto m = environmentMoments(law, t, EstimationMode::analytic());
    CHECK(m.sigma2.value == doctest::Approx(kLn2 * kLn2 * 0.25).epsilon(1e-8));
    CHECK(m.sigma2.value == doctest::Approx(0.1201).epsilon(1e-3));
}

TEST_CASE("cumulative K for the degenerate law") {
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), 3, 1);
    const auto k = cumulativeK(env, kTheta);
    REQUIRE(k.size() == 4);
    CHECK(k[0] == 0.0);
    for (std::size_t i = 1; i <= 3; ++i) {
        CHECK(k[i] == doctest::Approx(2.0 * kLn2 * static_cast<double>(i)).epsilon(1e-14));
    }
    CHECK(cumulativeK(env.slice(0, 0), kTheta).size() == 1);
}

TEST_CASE("cumulative K replays the per-generation kappas") {
    const auto env = sampleEnvironment(fixtures::varianceMixture(), 40, 77);
    const auto k = cumulativeK(env, 1.3);
    double sum = 0.0;
    for (std::size_t i = 1; i <= 40; ++i) {
        sum += kappa(env.generation(i), 1.3);
        CHECK(std::abs(k[i] - sum) <= 1e-14 * std::abs(sum));
    }
}

TEST_CASE("barrier values") {
    const auto env = sampleEnvironment(fixtures::degenerateBinaryGaussian(), 12, 1);
    const auto k = cumulativeK(env, kTheta);
    const BarrierSpec zero{0.0, 1.0, kTheta};
    for (std::size_t i = 0; i <= 12; ++i) {
        CHECK(barrierValue(zero, k, i) == doctest::Approx(-k[i] / kTheta).epsilon(1e-15));
    }
    const BarrierSpec spec{0.1, 1.0, kTheta};
    CHECK(barrierValue(spec, k, 0) == 0.0);
    CHECK(barrierValue(spec, k, 10) == doctest::Approx(-kTheta * 10.0 + 1.0).epsilon(1e-12));
    CHECK(barrierValue(spec, k, 10) == doctest::Approx(-10.7741).epsilon(1e-5));
    CHECK_THROWS_AS(barrierValue(spec, k, 13), std::out_of_range);
    CHECK_THROWS((BarrierSpec{0.1, 1.5, kTheta}.validate()));
}

TEST_CASE("cutoff log-mean m(a)") {
    const auto zeroTable = EnvironmentLaw::degenerate(ReproductionParams::discreteTable({{1.0, {0.0, 0.0}}}));
    const auto t0 = TiltSolution{1.0, kLn2, 0.0, {0.0, 1.0}, 0};
    // cutoff a - ln2 is above the displacement 0 once a > ln 2
    const auto m = mOfA(zeroTable, t0, 1.0, EstimationMode::analytic());
    CHECK(!m.negativeInfinity);
    CHECK(m.value == doctest::Approx(kLn2).epsilon(1e-14));
    const auto none = mOfA(zeroTable, t0, 0.5, EstimationMode::analytic());
    CHECK(none.negativeInfinity);

    const auto law = fixtures::degenerateBinaryGaussian();
    const auto t = solveTilt(law);
    const auto big = mOfA(law, t, 50.0, EstimationMode::analytic());
    CHECK(big.value == doctest::Approx(kLn2).epsilon(1e-12));
    const auto chi = EnvironmentLaw::gaussianChiSquare({0.0, 0.0, 1.0}, 0.0, 1.0, 5.0);
    const auto bigMc = mOfA(chi, solveTilt(chi), 50.0, EstimationMode::monteCarlo(200, 3));
    CHECK(std::abs(bigMc.value - kLn2) <= std::max(2.0 * bigMc.stdError, 1e-12));
}
