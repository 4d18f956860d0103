#include "brwre/bp_tools.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "brwre/brw_engine.h"
#include "brwre/parallel.h"
#include "brwre/rng.h"

namespace brwre {

GenerationMoments momentsOf(std::span<const double> countLaw) {
    GenerationMoments m;
    for (std::size_t k = 0; k < countLaw.size(); ++k) {
        const double kk = static_cast<double>(k);
        m.mean += kk * countLaw[k];
        m.factorial2 += kk * (kk - 1.0) * countLaw[k];
    }
    return m;
}

MomentSummary momentRecursion(std::span<const GenerationMoments> moments) {
    if (moments.empty()) {
        throw std::invalid_argument("moment_recursion: empty sequence");
    }
    MomentSummary out;
    double running = 1.0;
    for (const auto& g : moments) {
        if (!(g.mean > 0.0) || g.factorial2 < 0.0) {
            throw std::invalid_argument("moment_recursion: need f'(1) > 0 and f''(1) >= 0");
        }
        out.factorialRatio += g.factorial2 / (running * g.mean * g.mean);
        running *= g.mean;
    }
    out.mean = running;
    out.secondMoment = out.factorialRatio * running * running + running;
    return out;
}

double paleyZygmundBound(std::span<const GenerationMoments> moments, double b) {
    if (!(b > 1.0)) {
        throw std::invalid_argument("paley_zygmund_bound: b must exceed 1");
    }
    const MomentSummary s = momentRecursion(moments);
    const double shrink = 1.0 - std::pow(b, -static_cast<double>(moments.size()));
    const double value = shrink * shrink / (s.factorialRatio + 1.0 / s.mean);
    return std::clamp(value, 0.0, 1.0);
}

double agrestiLowerBound(std::span<const GenerationMoments> moments) {
    if (moments.empty()) {
        throw std::invalid_argument("agresti_lower_bound: empty sequence");
    }
    double running = 1.0;
    double sum = 0.0;
    for (const auto& g : moments) {
        if (!(g.mean > 0.0)) {
            throw std::invalid_argument("agresti_lower_bound: f'(1) must be > 0");
        }
        running *= g.mean;
        sum += (g.factorial2 / g.mean) / running;
    }
    const double denom = 1.0 / running + sum;
    return std::clamp(1.0 / denom, 0.0, 1.0);
}

std::vector<double> enumerateGenerationSizes(std::span<const std::vector<double>> countLaws,
                                             std::size_t maxSupport) {
    std::vector<double> dist{0.0, 1.0};
    for (const auto& law : countLaws) {
        const std::size_t top = dist.size() - 1;
        const std::size_t lawTop = law.empty() ? 0 : law.size() - 1;
        if (top * lawTop + 1 > maxSupport) {
            throw std::length_error("enumerate: support exceeds the budget");
        }
        std::vector<double> next(top * lawTop + 1, 0.0);
        // power = law^{*k}, built up as k grows
        std::vector<double> power{1.0};
        for (std::size_t k = 0; k <= top; ++k) {
            if (k > 0) {
                std::vector<double> p(power.size() + lawTop, 0.0);
                for (std::size_t i = 0; i < power.size(); ++i) {
                    if (power[i] == 0.0) {
                        continue;
                    }
                    for (std::size_t j = 0; j < law.size(); ++j) {
                        p[i + j] += power[i] * law[j];
                    }
                }
                power.swap(p);
            }
            if (dist[k] == 0.0) {
                continue;
            }
            for (std::size_t i = 0; i < power.size(); ++i) {
                next[i] += dist[k] * power[i];
            }
        }
        while (next.size() > 1 && next.back() == 0.0) {
            next.pop_back();
        }
        dist.swap(next);
    }
    return dist;
}

EnumeratedMoments momentsOfDistribution(std::span<const double> distribution) {
    EnumeratedMoments m;
    for (std::size_t k = 0; k < distribution.size(); ++k) {
        const double kk = static_cast<double>(k);
        m.mean += kk * distribution[k];
        m.factorial2 += kk * (kk - 1.0) * distribution[k];
        if (k > 0) {
            m.survival += distribution[k];
        }
    }
    return m;
}

double etaFromDistribution(std::span<const double> distribution, double b, std::size_t n) {
    const double mean = momentsOfDistribution(distribution).mean;
    const double level = std::max(std::pow(b, -static_cast<double>(n)) * mean, 1.0);
    double eta = 0.0;
    for (std::size_t k = 0; k < distribution.size(); ++k) {
        if (static_cast<double>(k) >= level) {
            eta += distribution[k];
        }
    }
    return eta;
}

namespace {

struct BarrierTree {
    const EnvironmentRealization& env;
    const BarrierSpec& spec;
    const std::vector<double>& drift;
    std::size_t k;
    std::size_t budget;
    std::size_t visited = 0;
    double total = 0.0;

    void visit(std::size_t g, double q, double probability) {
        if (++visited > budget) {
            throw std::length_error("expected_barrier_count: enumeration budget exceeded");
        }
        if (g == k) {
            total += probability;
            return;
        }
        const std::size_t next = g + 1;
        const double limit = spec.slopeTerm(next);
        for (const auto& o : env.generation(next).outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            for (double z : o.displacements) {
                const double child = q + z + drift[next];
                if (child <= limit) {
                    visit(next, child, probability * o.probability);
                }
            }
        }
    }
};

}  // namespace

double expectedBarrierCount(const EnvironmentRealization& env, const BarrierSpec& spec,
                            std::size_t k, std::size_t budget) {
    spec.validate();
    if (k > env.horizon()) {
        throw std::invalid_argument("expected_barrier_count: horizon shorter than k");
    }
    std::vector<double> drift(k + 1, 0.0);
    for (std::size_t i = 1; i <= k; ++i) {
        if (!env.generation(i).isDiscrete()) {
            throw std::invalid_argument("expected_barrier_count: needs discrete-table generations");
        }
        drift[i] = kappa(env.generation(i), spec.theta) / spec.theta;
    }
    BarrierTree tree{env, spec, drift, k, budget, 0, 0.0};
    tree.visit(0, 0.0, 1.0);
    return tree.total;
}

double plainSurvivalProbability(const EnvironmentRealization& env, std::size_t n) {
    if (n > env.horizon()) {
        throw std::invalid_argument("plain_survival_probability: horizon shorter than n");
    }
    std::vector<std::vector<double>> laws;
    for (std::size_t i = 1; i <= n; ++i) {
        laws.push_back(env.generation(i).offspringCountLaw());
    }
    return momentsOfDistribution(enumerateGenerationSizes(laws)).survival;
}

namespace {

struct BlockGeometry {
    std::size_t n = 0;
    double z = 0.0;
    std::size_t varsigmaN = 0;
    std::size_t floorZn = 0;

    std::size_t a(std::size_t l) const { return (l - 1) * (varsigmaN + floorZn) + varsigmaN; }
    std::size_t b(std::size_t l) const { return l * (varsigmaN + floorZn); }
};

BlockGeometry geometryOf(const AuxiliaryParams& p) {
    if (!(p.c > 1.0)) {
        throw std::invalid_argument("auxiliary bp: c must exceed 1");
    }
    if (p.varsigma == 0) {
        throw std::invalid_argument("auxiliary bp: varsigma must be a positive integer");
    }
    if (p.blocks == 0) {
        throw std::invalid_argument("auxiliary bp: need at least one block");
    }
    DepthRule rule{static_cast<double>(p.varsigma), p.c, p.a};
    BlockGeometry g;
    g.n = rule.depth(p.epsilon);
    g.z = rule.z(p.epsilon);
    g.varsigmaN = p.varsigma * g.n;
    g.floorZn = static_cast<std::size_t>(std::floor(g.z * static_cast<double>(g.n)));
    return g;
}

// Law of #{children with ζ ≤ cutoff}.
std::vector<double> thinnedCountLaw(const ReproductionParams& params, double cutoff) {
    if (params.isDiscrete()) {
        std::vector<double> law(params.maxOffspring() + 1, 0.0);
        for (const auto& o : params.outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            const auto kept = static_cast<std::size_t>(
                std::count_if(o.displacements.begin(), o.displacements.end(),
                              [cutoff](double z) { return z <= cutoff; }));
            law[kept] += o.probability;
        }
        return law;
    }
    const double pass = 0.5 * std::erfc(-(cutoff - params.displacementMean()) /
                                        std::sqrt(2.0 * params.displacementVariance()));
    const auto& counts = params.countProbabilities();
    std::vector<double> law(counts.size(), 0.0);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] <= 0.0) {
            continue;
        }
        double binom = 1.0;  // C(k, t)
        for (std::size_t t = 0; t <= k; ++t) {
            law[t] += counts[k] * binom * std::pow(pass, static_cast<double>(t)) *
                      std::pow(1.0 - pass, static_cast<double>(k - t));
            binom = binom * static_cast<double>(k - t) / static_cast<double>(t + 1);
        }
    }
    return law;
}

constexpr double kPopulationCeiling = 1e17;

// Z_{i} = Σ_{j ≤ Z_{i−1}} η_j(i), with the multinomial split of Z_{i−1} over
// η-values drawn by successive conditional binomials.
bool thinnedProcessReaches(const std::vector<std::vector<double>>& laws, double level,
                           CounterRng& rng) {
    std::uint64_t z = 1;
    for (const auto& law : laws) {
        std::uint64_t remaining = z;
        double mass = 1.0;
        std::uint64_t next = 0;
        for (std::size_t t = 0; t < law.size() && remaining > 0; ++t) {
            std::uint64_t count = remaining;
            if (t + 1 < law.size() && mass > 0.0) {
                const double p = std::clamp(law[t] / mass, 0.0, 1.0);
                std::binomial_distribution<std::uint64_t> binom(remaining, p);
                count = binom(rng);
            }
            next += count * t;
            remaining -= count;
            mass -= law[t];
        }
        z = next;
        if (z == 0) {
            return level <= 0.0;
        }
        if (static_cast<double>(z) > kPopulationCeiling) {
            // Extinction from this size within the few generations left is
            // below double resolution; the level is checked against the ceiling.
            return level <= kPopulationCeiling;
        }
    }
    return static_cast<double>(z) >= level;
}

}  // namespace

std::size_t auxiliaryHorizon(const AuxiliaryParams& params) {
    const BlockGeometry g = geometryOf(params);
    return std::max(g.b(params.blocks), g.n);
}

AuxiliaryBpResult buildAuxiliaryBp(const EnvironmentLaw& law, const TiltSolution& tilt,
                                   std::uint64_t envSeed, const AuxiliaryParams& params) {
    const BlockGeometry geo = geometryOf(params);
    if (!(params.a > params.c * params.epsilon)) {
        throw std::invalid_argument("auxiliary bp: need a > c*epsilon so that z > 0");
    }
    if (geo.floorZn == 0) {
        throw std::invalid_argument("auxiliary bp: floor(z*n) is 0; no thinned generations");
    }
    const CutoffLogMean ma = mOfA(law, tilt, params.a, params.mOfAMode);
    if (ma.negativeInfinity || !(ma.value > 0.0)) {
        throw std::invalid_argument("auxiliary bp: m(a) must be > 0; increase a");
    }
    if (!(params.w > 1.0) || !(params.w < std::exp(ma.value))) {
        throw std::invalid_argument("auxiliary bp: w must lie in (1, e^{m(a)})");
    }

    const double theta = tilt.theta;
    const std::size_t horizon = auxiliaryHorizon(params);
    const EnvironmentRealization env = sampleEnvironment(law, horizon, envSeed);

    // log m_i cumulated from generation 1.
    std::vector<double> logMi(horizon + 1, 0.0);
    std::vector<double> prefix(horizon + 1, 0.0);
    for (std::size_t i = 1; i <= horizon; ++i) {
        const auto& p = env.generation(i);
        logMi[i] = std::log(meanCountBelow(p, params.a - kappa(p, theta) / theta));
        prefix[i] = prefix[i - 1] + logMi[i];
    }

    AuxiliaryBpResult out;
    out.n = geo.n;
    out.z = geo.z;
    out.varsigmaN = geo.varsigmaN;
    out.floorZn = geo.floorZn;
    out.mOfA = ma.value;

    const double logW = std::log(params.w);
    const EngineOptions engine{params.cap, params.threads};
    std::vector<GenerationMoments> gMoments;
    double running = 1.0;
    bool zeroFactor = false;

    for (std::size_t l = 1; l <= params.blocks; ++l) {
        AuxiliaryBlockReport block;
        block.l = l;
        block.aBoundary = geo.a(l);
        block.bBoundary = geo.b(l);
        const double zn = static_cast<double>(geo.floorZn);
        block.logM = prefix[block.bBoundary] - prefix[block.aBoundary] - zn * logW;
        double direct = -zn * logW;
        for (std::size_t i = block.aBoundary + 1; i <= block.bBoundary; ++i) {
            direct += logMi[i];
        }
        block.logMDirect = direct;
        block.mBar = std::max(std::exp(block.logM), 1.0);
        block.ceilMBar = std::ceil(block.mBar);
        if (!std::isfinite(block.mBar) || block.mBar > kPopulationCeiling) {
            throw std::invalid_argument("auxiliary bp: m-bar too large to simulate; lower z or raise w");
        }

        const std::size_t start = geo.b(l - 1);
        const BarrierSpec slope{params.epsilon, 1.0, theta};
        const SurvivalEstimate p1 =
            estimateQuenchedSurvival(env.slice(start, geo.varsigmaN), slope, geo.varsigmaN,
                                     params.p1Replicates,
                                     streamKey(params.seed, StreamPurpose::Auxiliary, l, 1), engine);
        block.p1 = {p1.pHat, p1.stdError};

        std::vector<std::vector<double>> laws;
        for (std::size_t i = block.aBoundary + 1; i <= block.bBoundary; ++i) {
            const auto& p = env.generation(i);
            laws.push_back(thinnedCountLaw(p, params.a - kappa(p, theta) / theta));
        }
        std::vector<double> hits(params.p2Replicates, 0.0);
        const std::uint64_t p2Key = streamKey(params.seed, StreamPurpose::Auxiliary, l, 2);
        parallelFor(params.p2Replicates, params.threads, [&](std::size_t r) {
            CounterRng rng(p2Key, StreamPurpose::Auxiliary, r);
            hits[r] = thinnedProcessReaches(laws, block.mBar, rng) ? 1.0 : 0.0;
        });
        block.p2 = meanOf(hits);
        const double pr = block.p2.value;
        block.p2.stdError = std::sqrt(pr * (1.0 - pr) / static_cast<double>(params.p2Replicates));

        block.fPrime = block.p1.value * block.p2.value * block.ceilMBar;
        if (block.fPrime <= 0.0) {
            zeroFactor = true;
        } else {
            running *= block.fPrime;
            out.partialSum += block.ceilMBar / running;
            gMoments.push_back({block.fPrime, block.fPrime * (block.ceilMBar - 1.0)});
        }
        out.blocks.push_back(block);
        if (zeroFactor) {
            break;
        }
    }

    if (zeroFactor) {
        out.divergent = true;
        out.lowerBound = 0.0;
        out.agresti = 0.0;
        return out;
    }
    out.agresti = agrestiLowerBound(gMoments);

    // Geometric tail from the ratio of the last two series terms.
    const auto& last = out.blocks.back();
    const double lastTerm = last.ceilMBar / running;
    double ratio = 1.0 / last.fPrime;
    if (out.blocks.size() >= 2) {
        ratio = (last.ceilMBar / out.blocks[out.blocks.size() - 2].ceilMBar) / last.fPrime;
    }
    if (!(ratio < 1.0)) {
        out.divergent = true;
        out.tail = std::numeric_limits<double>::infinity();
        out.lowerBound = 0.0;
        return out;
    }
    out.tail = lastTerm * ratio / (1.0 - ratio);
    out.lowerBound = std::clamp(1.0 / (out.partialSum + out.tail), 0.0, 1.0);
    return out;
}

}  // namespace brwre
