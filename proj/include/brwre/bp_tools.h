#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "brwre/cgf_calculus.h"
#include "brwre/env_model.h"
#include "brwre/stats.h"

namespace brwre {

/// f'(1) and f''(1) of one generation's offspring generating function.
struct GenerationMoments {
    double mean = 0.0;
    double factorial2 = 0.0;
};

GenerationMoments momentsOf(std::span<const double> countLaw);

struct MomentSummary {
    double mean = 0.0;            // E Z_n
    double factorialRatio = 0.0;  // E[Z_n(Z_n−1)]/(E Z_n)²
    double secondMoment = 0.0;    // E Z_n²
};

/// E Z_n = Π f'_i and ratio = Σ_i f''_i/(F_{i−1} f'_i²) with F_i = f'_1⋯f'_i.
MomentSummary momentRecursion(std::span<const GenerationMoments> moments);

/// (1 − b^{−n})²·(E Z_n)²/E Z_n², a lower bound for
/// η_n = P(Z_n ≥ max{b^{−n} E Z_n, 1}). Clipped to [0, 1].
double paleyZygmundBound(std::span<const GenerationMoments> moments, double b);

/// [1/Π f'_j + Σ_i (f''_i/f'_i)/Π_{j≤i} f'_j]^{−1}, clipped to [0, 1].
double agrestiLowerBound(std::span<const GenerationMoments> moments);

/// Exact law of Z_n for a generation-dependent Galton–Watson process with
/// Z_0 = 1, computed by iterated convolution. Intended for small instances.
std::vector<double> enumerateGenerationSizes(std::span<const std::vector<double>> countLaws,
                                             std::size_t maxSupport = 1'000'000);

struct EnumeratedMoments {
    double mean = 0.0;
    double factorial2 = 0.0;  // E[Z(Z−1)]
    double survival = 0.0;    // P(Z > 0)
};

EnumeratedMoments momentsOfDistribution(std::span<const double> distribution);

/// η_n read off an exact distribution of Z_n.
double etaFromDistribution(std::span<const double> distribution, double b, std::size_t n);

/// E_Λ Y_k for the barrier-killed process by enumerating every potential
/// individual of the tree. Discrete-table generations only.
double expectedBarrierCount(const EnvironmentRealization& env, const BarrierSpec& spec,
                            std::size_t k, std::size_t budget = 5'000'000);

/// P_Λ(Z_n > 0) without any barrier, by exact enumeration of the count laws.
double plainSurvivalProbability(const EnvironmentRealization& env, std::size_t n);

struct AuxiliaryParams {
    double epsilon = 0.25;
    double c = 2.0;
    double a = 2.0;
    double w = 1.2;
    std::size_t varsigma = 2;
    std::size_t blocks = 8;
    std::size_t p1Replicates = 2000;
    std::size_t p2Replicates = 2000;
    std::size_t cap = 2000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    /// Used for m(a) when the law is not a finite mixture.
    EstimationMode mOfAMode = EstimationMode::analytic();
};

struct AuxiliaryBlockReport {
    std::size_t l = 0;
    std::size_t aBoundary = 0;  // a_{n,l}
    std::size_t bBoundary = 0;  // b_{n,l}
    MeanEstimate p1;
    MeanEstimate p2;
    double logM = 0.0;        // log m(l,ε) from prefix sums
    double logMDirect = 0.0;  // the same product summed from scratch
    double mBar = 1.0;
    double ceilMBar = 1.0;
    double fPrime = 0.0;  // p1·p2·⌈m̄⌉
};

struct AuxiliaryBpResult {
    std::size_t n = 0;
    double z = 0.0;
    std::size_t varsigmaN = 0;
    std::size_t floorZn = 0;
    double mOfA = 0.0;
    std::vector<AuxiliaryBlockReport> blocks;
    double partialSum = 0.0;  // Σ_{i≤L} ⌈m̄_i⌉/Π_{j≤i} f'_j
    double tail = 0.0;
    double lowerBound = 0.0;
    double agresti = 0.0;  // Agresti bound for the L-block process G
    bool divergent = false;
};

/// Block horizon b_{n,L} needed by buildAuxiliaryBp.
std::size_t auxiliaryHorizon(const AuxiliaryParams& params);

/// Auxiliary block process and its survival lower bound for the slope-cε
/// barrier, on the environment sampled from `envSeed`. The series is
/// truncated at `blocks` terms and the tail is extrapolated geometrically
/// from the last ratio; a ratio ≥ 1 or a zero f' makes the bound 0.
/// Throws std::invalid_argument for w outside (1, e^{m(a)}) or z ≤ 0.
AuxiliaryBpResult buildAuxiliaryBp(const EnvironmentLaw& law, const TiltSolution& tilt,
                                   std::uint64_t envSeed, const AuxiliaryParams& params);

}  // namespace brwre
