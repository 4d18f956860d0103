#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "brwre/env_model.h"
#include "brwre/rng.h"
#include "brwre/stats.h"

namespace brwre {

struct TiltedAtom {
    double displacement = 0.0;
    std::size_t siblingCount = 0;
    double probability = 0.0;
};

/// The law τ of one spine step (X, ξ) for a single generation.
///
/// Discrete tables give one atom per (outcome, child) with weight
/// w_o·e^{−ϑζ}/e^{κ(ϑ)}. For gaussian-count the two coordinates are
/// independent: ξ is size-biased and X ~ N(μ − ϑv, v).
class TiltedStepLaw {
public:
    static TiltedStepLaw build(const ReproductionParams& params, double theta);

    bool isDiscrete() const { return discrete_; }
    const std::vector<TiltedAtom>& atoms() const { return atoms_; }
    const std::vector<double>& sizeBiasedCounts() const { return sizeBiased_; }
    double displacementMean() const { return mean_; }
    double displacementVariance() const { return variance_; }

    /// τ((−∞, x] × [0, A]).
    double cdf(double x, double countThreshold) const;

    struct Draw {
        double displacement;
        std::size_t siblingCount;
    };
    Draw sample(CounterRng& rng) const;

private:
    bool discrete_ = true;
    std::vector<TiltedAtom> atoms_;
    std::vector<double> atomCumulative_;
    std::vector<double> sizeBiased_;
    std::vector<double> countCumulative_;
    double mean_ = 0.0;
    double variance_ = 1.0;
};

/// Tilted laws and K_0..K_n for a frozen environment, built once and shared.
struct SpineEnvironment {
    double theta = 0.0;
    std::vector<TiltedStepLaw> laws;  // laws[i-1] drives step i
    std::vector<double> cumulativeK;

    SpineEnvironment(const EnvironmentRealization& env, double theta);
    std::size_t horizon() const { return laws.size(); }
};

struct SpineStep {
    double x = 0.0;
    std::size_t xi = 0;
    double s = 0.0;
    double t = 0.0;
};

struct SpinePath {
    double theta = 0.0;
    std::vector<SpineStep> steps;  // steps[i-1] is generation i; S_0 = T_0 = 0
};

SpinePath sampleSpineWalk(const SpineEnvironment& spine, std::size_t n, CounterRng& rng);
SpinePath sampleSpineWalk(const EnvironmentRealization& env, double theta, std::size_t n,
                          CounterRng& rng);

class UnsupportedEnvironmentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using PathFunction = std::function<double(std::span<const double>)>;

struct ManyToOneCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double absDiff = 0.0;
    double weightedMass = 0.0;  // E_Λ Σ_{|u|=n} e^{−ϑV(u)}
    double expK = 0.0;          // e^{K_n}
};

/// Both sides of the many-to-one identity by exact enumeration. The left
/// side walks every potential individual of the Ulam–Harris tree up to depth
/// n, weighting it by the probability that it is born; the parent of u_i is
/// required to satisfy N(u_{i−1}) ≤ A_i. The right side walks the product of
/// tilted step laws. f receives V(u_1..u_n) on the left and S_1..S_n on the
/// right. Throws UnsupportedEnvironmentError for non-table generations and
/// std::length_error when the tree exceeds `pathBudget` individuals.
ManyToOneCheck verifyManyToOne(const EnvironmentRealization& env, double theta, std::size_t n,
                               const PathFunction& f, std::span<const double> thresholds,
                               std::size_t pathBudget = 2'000'000);

using Boundary = std::function<double(std::size_t)>;

/// P_Λ(lower(i) ≤ T_i ≤ upper(i), ξ_i ≤ threshold for start ≤ i ≤ end | T_start = startValue).
/// The bounds are checked on T_start as well, so a start outside the corridor
/// gives 0.
struct CorridorQuery {
    std::size_t start = 0;
    double startValue = 0.0;
    std::size_t end = 0;
    Boundary lower;
    Boundary upper;
    double xiThreshold = std::numeric_limits<double>::infinity();
};

struct CorridorEstimate {
    MeanEstimate probability;
    MeanEstimate weighted;  // E_Λ[e^{T_end} 1{corridor}]
    std::size_t replicates = 0;
};

CorridorEstimate corridorProbability(const SpineEnvironment& spine, const CorridorQuery& query,
                                     std::size_t replicates, std::uint64_t seed,
                                     unsigned threads = 1);

/// Corridor of the first/second moment argument at depth n:
/// T_i ∈ [ϑbi/n^{2/3} − ϑd·n^{1/3}, ϑbi/n^{2/3}].
struct MomentBoundSetup {
    std::size_t n = 0;
    double b = 1.0;
    double d = 2.5;
    double countThreshold = 2.0;  // A_n
    double theta = 1.0;

    double upper(std::size_t i) const;
    double lower(std::size_t i) const;
};

struct MomentBoundResult {
    double numerator = 0.0;
    double numeratorStdError = 0.0;
    std::vector<double> pjn;  // P_{j,n}, j = 1..n (index j-1)
    double denominator = 0.0;
    double bound = 0.0;
    bool invalid = false;
};

/// numerator / (1 + (A_n − 1)·Σ_j e^{ϑ(bn^{1/3} + dn^{1/3} − bj/n^{2/3})}·P_{j,n}).
/// A nonpositive or non-finite denominator sets `invalid` and bound 0.
MomentBoundResult assembleMomentBound(const MomentBoundSetup& setup, double numerator,
                                      std::span<const double> pjn);

struct MomentBoundOptions {
    std::size_t replicates = 4000;
    std::size_t gridPoints = 9;  // start values y per j for the sup in P_{j,n}
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Plug-in estimate: the numerator by plain corridor Monte Carlo and each
/// P_{j,n} as the largest estimate over a y-grid spanning the corridor at j.
MomentBoundResult firstSecondMomentLowerBound(const SpineEnvironment& spine,
                                              const MomentBoundSetup& setup,
                                              const MomentBoundOptions& options);

}  // namespace brwre
