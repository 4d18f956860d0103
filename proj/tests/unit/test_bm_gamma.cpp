#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "brwre/bm_gamma.h"

using namespace brwre;

namespace {
const double kPi = std::numbers::pi;
}

TEST_CASE("static tube matches the leading eigenfunction") {
    TubeGrid grid;
    grid.points = 513;
    grid.dt = 1.0 / 256.0;
    grid.horizon = 8.0;
    const std::vector<double> w(grid.steps(), 0.0);
    const double p = tubeProbability(w, 0.0, grid);
    const double expected = 4.0 / kPi * std::exp(-kPi * kPi);
    CHECK(expected == doctest::Approx(6.6e-5).epsilon(0.01));
    CHECK(std::abs(p / expected - 1.0) < 0.05);
}

TEST_CASE("a very short horizon keeps the path inside") {
    TubeGrid grid;
    grid.horizon = grid.dt;
    const std::vector<double> w(1, 0.0);
    CHECK(tubeProbability(w, 0.0, grid) > 0.999);
}

TEST_CASE("flat W makes beta irrelevant") {
    TubeGrid grid;
    grid.horizon = 2.0;
    const std::vector<double> w(grid.steps(), 0.0);
    const double base = tubeLogProbability(w, 0.0, grid);
    for (double beta : {0.3, 1.0, 4.0}) {
        CHECK(tubeLogProbability(w, beta, grid) == base);
    }
}

TEST_CASE("kernel agrees with nested monte carlo for a random W") {
    TubeGrid grid;
    grid.horizon = 2.0;
    CounterRng rng(3, StreamPurpose::GammaPath);
    const auto w = sampleBrownianPath(grid, rng);
    const double p = tubeProbability(w, 0.7, grid);
    const auto mc = tubeProbabilityMonteCarlo(w, 0.7, grid, 40000, 4);
    CHECK(std::abs(mc.value - p) <= 4.0 * mc.stdError);
}

TEST_CASE("path length must match the grid") {
    TubeGrid grid;
    const std::vector<double> w(5, 0.0);
    CHECK_THROWS_AS(tubeProbability(w, 0.0, grid), std::invalid_argument);
}

TEST_CASE("grid validation") {
    TubeGrid g;
    g.points = 256;
    CHECK_THROWS(g.validate());
    g = TubeGrid{};
    g.points = 31;
    CHECK_THROWS(g.validate());
    g = TubeGrid{};
    g.dt = 0.1;
    CHECK_THROWS(g.validate());
    g = TubeGrid{};
    g.horizon = 1.0 / 100.0;
    CHECK_THROWS(g.validate());
    CHECK_NOTHROW(TubeGrid{}.validate());
}

TEST_CASE("gamma hat at zero is close to pi squared over two") {
    const auto g = estimateGammaHat(0.0, TubeGrid{}, 4, 1, 1);
    CHECK(std::abs(g.value / (kPi * kPi / 2.0) - 1.0) < 0.03);
    CHECK(g.stdError == 0.0);
    CHECK(!g.unreliable);
}

TEST_CASE("gamma hat at zero with the shorter horizon t = 8") {
    TubeGrid grid;
    grid.horizon = 8.0;
    grid.points = 401;
    const auto g = estimateGammaHat(0.0, grid, 2, 1, 1);
    CHECK(std::abs(g.value / (kPi * kPi / 2.0) - 1.0) < 0.03);
}

TEST_CASE("normalized rate is invariant under Brownian scaling of the tube") {
    TubeGrid base;
    base.horizon = 4.0;
    const auto ref = estimateGammaHat(0.6, base, 6, 2, 1);
    for (double s : {0.5, 2.0}) {
        TubeGrid g = base;
        g.a = s;
        g.dt = base.dt * s * s;
        g.horizon = base.horizon * s * s;
        const auto e = estimateGammaHat(0.6, g, 6, 2, 1);
        CHECK(e.value == doctest::Approx(ref.value).epsilon(1e-9));
    }
}

TEST_CASE("gamma hat increases in beta") {
    TubeGrid grid;
    grid.horizon = 8.0;
    std::vector<GammaEstimate> est;
    for (double beta : {0.0, 0.5, 1.0}) {
        est.push_back(estimateGammaHat(beta, grid, 30, 5, 1));
    }
    for (std::size_t i = 1; i < est.size(); ++i) {
        const double band = 2.0 * std::hypot(est[i].stdError, est[i - 1].stdError);
        CHECK(est[i].value - est[i - 1].value > band);
    }
}

TEST_CASE("gamma hat estimates are reproducible across thread counts") {
    TubeGrid grid;
    grid.horizon = 2.0;
    const auto a = estimateGammaHat(0.5, grid, 8, 9, 1);
    const auto b = estimateGammaHat(0.5, grid, 8, 9, 3);
    CHECK(a.value == b.value);
    CHECK(a.stdError == b.stdError);
}

TEST_CASE("gamma constants for the degenerate family") {
    const double ln2 = std::log(2.0);
    GammaEstimate g;
    g.beta = 0.0;
    g.value = kPi * kPi / 2.0;
    const auto c = gammaConstants(0.0, 2.0 * ln2, std::sqrt(2.0 * ln2), g);
    CHECK(c.gammaSigma == doctest::Approx(kPi * kPi * ln2).epsilon(1e-14));
    CHECK(c.gammaSigma == doctest::Approx(6.84108).epsilon(1e-5));
    CHECK(c.gamma == doctest::Approx(-2.41045).epsilon(1e-5));
    CHECK(std::abs(c.gamma) == doctest::Approx(std::sqrt(kPi * kPi * 2.0 * ln2 / (2.0 * std::sqrt(2.0 * ln2)))).epsilon(1e-14));
    CHECK_THROWS_AS(gammaConstants(0.5, 2.0 * ln2, 1.0, g), std::invalid_argument);
    CHECK_THROWS_AS(gammaConstants(0.0, 0.0, 1.0, g), std::invalid_argument);
}

TEST_CASE("larger sigma squared gives a more negative gamma") {
    TubeGrid grid;
    grid.horizon = 8.0;
    const double s2star = 1.0;
    const auto g1 = estimateGammaHat(0.25, grid, 20, 7, 1);
    const auto g2 = estimateGammaHat(0.5, grid, 20, 7, 1);
    const auto c1 = gammaConstants(0.25, s2star, 1.2, g1);
    const auto c2 = gammaConstants(0.5, s2star, 1.2, g2);
    CHECK(c2.gamma < c1.gamma);
}
