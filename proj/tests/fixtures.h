#pragma once

#include <cmath>
#include <vector>

#include "brwre/env_model.h"
#include "brwre/rng.h"

namespace fixtures {

using namespace brwre;

inline ReproductionParams binaryGaussian(double variance = 1.0) {
    return ReproductionParams::gaussianCount({0.0, 0.0, 1.0}, 0.0, variance);
}

inline EnvironmentLaw degenerateBinaryGaussian() { return EnvironmentLaw::degenerate(binaryGaussian()); }

inline EnvironmentLaw varianceMixture() {
    return EnvironmentLaw::mixture({{0.5, binaryGaussian(0.5)}, {0.5, binaryGaussian(1.5)}});
}

inline ReproductionParams plusMinusOne() { return ReproductionParams::discreteTable({{1.0, {1.0, -1.0}}}); }

// A random discrete table with up to `maxChildren` children per outcome.
inline ReproductionParams randomTable(CounterRng& rng, std::size_t maxChildren = 3, std::size_t outcomes = 3) {
    std::vector<double> w(outcomes);
    double total = 0.0;
    for (double& x : w) {
        x = 0.1 + rng.uniform();
        total += x;
    }
    std::vector<TableOutcome> table;
    for (std::size_t o = 0; o < outcomes; ++o) {
        TableOutcome t;
        t.probability = w[o] / total;
        const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(maxChildren + 1));
        for (std::size_t c = 0; c < k; ++c) {
            t.displacements.push_back(std::round((4.0 * rng.uniform() - 2.0) * 4.0) / 4.0);
        }
        table.push_back(std::move(t));
    }
    double sum = 0.0;
    for (std::size_t o = 0; o + 1 < outcomes; ++o) {
        sum += table[o].probability;
    }
    table.back().probability = 1.0 - sum;
    return ReproductionParams::discreteTable(std::move(table));
}

// Random count law on {0..maxCount}.
inline std::vector<double> randomCountLaw(CounterRng& rng, std::size_t maxCount = 3) {
    std::vector<double> p(maxCount + 1);
    double total = 0.0;
    for (double& x : p) {
        x = rng.uniform();
        total += x;
    }
    for (double& x : p) {
        x /= total;
    }
    return p;
}

}  // namespace fixtures
