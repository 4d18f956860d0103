#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "brwre/cgf_calculus.h"
#include "brwre/env_model.h"

namespace brwre {

/// Alive particles at one generation. Positions are kept relative to the
/// ε = 0 barrier, q = V + K_i/ϑ, so the O(n) drift of K never enters.
struct Population {
    std::size_t generation = 0;
    std::vector<double> relativePositions;
};

struct SimulationOutcome {
    bool survived = true;
    /// Y_0..Y_depth, counted before any cap subsampling of that generation.
    std::vector<std::uint64_t> trajectory;
    bool capHit = false;
    /// Retained particles at the final simulated generation.
    Population finalPopulation;
};

/// One replicate of the barrier-killed process.
///
/// Offspring of a particle are drawn from a stream keyed by (replicate key,
/// generation, genealogical id), so the particles that survive a cap are a
/// subtree of the uncapped tree and different barriers see the same tree.
/// Children with V(u) > φ(|u|) are discarded at birth. When more than `cap`
/// particles are alive, a uniformly random subset of size `cap` is kept
/// (priority = hash of the particle id), which can only lose survivors.
SimulationOutcome simulateToDepth(const EnvironmentRealization& env, const BarrierSpec& spec,
                                  std::size_t depth, std::size_t cap, std::uint64_t replicateKey);

/// The same replicate evaluated for an ascending list of slopes at once. A
/// particle's class is the smallest ε_k its ancestry fits under; in priority
/// order it is kept while fewer than `cap` earlier particles have class at most
/// its own. View k is every kept particle of class ≤ k, so views are nested and
/// survival is monotone in ε. Without a binding cap view k equals the
/// single-slope run for ε_k; with one, view k is still a subtree of the
/// uncapped tree but may differ from the single-slope capped run.
std::vector<SimulationOutcome> simulateCoupled(const EnvironmentRealization& env,
                                               std::span<const double> epsilons, double alpha,
                                               double theta, std::size_t depth, std::size_t cap,
                                               std::uint64_t replicateKey);

struct SurvivalEstimate {
    std::size_t replicates = 0;
    std::size_t successes = 0;
    double pHat = 0.0;
    double stdError = 0.0;
    std::size_t depth = 0;
    double epsilon = 0.0;
    std::uint64_t envSeed = 0;
    std::uint64_t branchingSeedBase = 0;
    std::size_t capHits = 0;

    void finalize();
};

struct EngineOptions {
    std::size_t cap = 10000;
    unsigned threads = 1;
};

std::uint64_t replicateKey(std::uint64_t branchingSeedBase, std::size_t replicate);

/// P_Λ(Y_depth > 0) with the environment frozen and independent branching
/// streams per replicate.
SurvivalEstimate estimateQuenchedSurvival(const EnvironmentRealization& env,
                                          const BarrierSpec& spec, std::size_t depth,
                                          std::size_t replicates, std::uint64_t branchingSeedBase,
                                          const EngineOptions& options = {});

struct AnnealedEstimate {
    SurvivalEstimate pooled;
    std::vector<SurvivalEstimate> quenched;
    double acrossEnvironmentStdDev = 0.0;
    double minQuenched = 0.0;
    double maxQuenched = 0.0;
};

/// Seeds used by environment replicate e of an annealed run.
std::uint64_t annealedEnvironmentSeed(std::uint64_t seedBase, std::size_t e);
std::uint64_t annealedBranchingSeed(std::uint64_t seedBase, std::size_t e);

AnnealedEstimate estimateAnnealedSurvival(const EnvironmentLaw& law, const BarrierSpec& spec,
                                          std::size_t depth, std::size_t envReplicates,
                                          std::size_t branchingReplicates, std::uint64_t seedBase,
                                          const EngineOptions& options = {});

struct SweepResult {
    std::vector<SurvivalEstimate> estimates;
    /// extinction[r][k]: first generation with no survivor for replicate r
    /// under epsilons[k], or depth + 1 if it survived to `depth`.
    std::vector<std::vector<std::size_t>> extinction;
};

/// Common-random-numbers sweep over a strictly increasing ε list.
SweepResult coupledEpsilonSweep(const EnvironmentRealization& env, std::span<const double> epsilons,
                                double alpha, double theta, std::size_t depth,
                                std::size_t replicates, std::uint64_t branchingSeedBase,
                                const EngineOptions& options = {});

/// n(ε) = ⌊(ς + z)ε^{−3/2}⌋ with z = (c−1)ςε/(a − cε).
struct DepthRule {
    double varsigma = 1.0;
    double c = 2.0;
    double a = 2.0;

    double z(double epsilon) const;
    std::size_t depth(double epsilon) const;
};

struct ScalingRow {
    double epsilon = 0.0;
    std::size_t depth = 0;
    SurvivalEstimate estimate;
    double scaledLog = 0.0;  // √ε·log p̂
    bool flagged = false;
    bool skipped = false;
    std::string note;
};

struct ScalingTable {
    std::vector<ScalingRow> rows;
    double gammaReference = 0.0;
};

struct ScalingOptions {
    DepthRule rule;
    std::size_t maxDepth = 4000;
    std::size_t replicates = 1000;
    std::uint64_t envSeed = 0;
    std::uint64_t branchingSeedBase = 0;
    EngineOptions engine;
};

/// Tabulates √ε·log P_Λ(Y_{n(ε)} > 0) against the reference γ. Rows whose
/// depth exceeds maxDepth are skipped; rows where every replicate died carry
/// −∞ and are flagged.
ScalingTable scalingExperiment(const EnvironmentLaw& law, double theta,
                               std::span<const double> epsilons, double gammaReference,
                               const ScalingOptions& options);

}  // namespace brwre
