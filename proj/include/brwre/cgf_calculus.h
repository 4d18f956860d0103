#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "brwre/env_model.h"
#include "brwre/stats.h"

namespace brwre {

/// Analytic evaluation is exact for finite mixtures. Monte-Carlo draws
/// `samples` environments from stream (seed, LawMonteCarlo, i) and reports a
/// standard error; there is no default sample size.
struct EstimationMode {
    enum class Kind { Analytic, MonteCarlo };
    Kind kind = Kind::Analytic;
    std::size_t samples = 0;
    std::uint64_t seed = 0;

    static EstimationMode analytic() { return {}; }
    static EstimationMode monteCarlo(std::size_t samples, std::uint64_t seed) {
        return {Kind::MonteCarlo, samples, seed};
    }
};

/// κ(θ) = E κ_1(θ).
MeanEstimate meanKappa(const EnvironmentLaw& law, double theta, EstimationMode mode);

class NoSignChangeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TiltSolution {
    double theta = 0.0;
    double kappaAtTheta = 0.0;
    double residual = 0.0;
    std::pair<double, double> bracket{0.0, 0.0};
    int iterations = 0;
};

std::pair<double, double> defaultTiltBracket(const EnvironmentLaw& law);

/// Bisection for the root ϑ of g(θ) = κ(θ) − θκ'(θ) on `bracket`. g is
/// nonincreasing, so a sign change pins a unique root.
TiltSolution solveTilt(const EnvironmentLaw& law, std::pair<double, double> bracket,
                       double tolerance = 1e-10);
TiltSolution solveTilt(const EnvironmentLaw& law, double tolerance = 1e-10);

/// g(θ) = κ(θ) − θκ'(θ) for the annealed κ (analytic).
double tiltFunction(const EnvironmentLaw& law, double theta);

struct EnvironmentMoments {
    MeanEstimate sigma2;      // E[(κ_1(ϑ) − ϑκ_1'(ϑ))²]
    MeanEstimate sigmaStar2;  // ϑ² E κ_1''(ϑ)
};

EnvironmentMoments environmentMoments(const EnvironmentLaw& law, const TiltSolution& tilt,
                                      EstimationMode mode);

struct ModelConstants {
    double sigma2 = 0.0;
    double sigmaStar2 = 0.0;
    double gammaHat = 0.0;
    double gammaSigma = 0.0;
    double gamma = 0.0;
    double speed = 0.0;  // r* = −κ(ϑ)/ϑ

    double beta() const { return sigma2 / sigmaStar2; }
};

/// Throws std::invalid_argument ("invalid law") when σ*² ≤ 0.
ModelConstants modelConstants(const EnvironmentLaw& law, const TiltSolution& tilt, double gammaHat,
                              EstimationMode mode = EstimationMode::analytic());

/// K_0..K_n with K_i − K_{i−1} = κ_i(ϑ).
std::vector<double> cumulativeK(const EnvironmentRealization& env, double theta);

struct BarrierSpec {
    double epsilon = 0.0;
    double alpha = 1.0;
    double theta = 1.0;

    void validate() const;
    /// ε·i^α
    double slopeTerm(std::size_t i) const;
};

/// φ(i) = −K_i/ϑ + ε·i^α. Throws std::out_of_range when i ≥ K.size().
double barrierValue(const BarrierSpec& spec, std::span<const double> cumulative, std::size_t i);

/// E_Λ[#{children with ζ ≤ cutoff}] for one generation law.
double meanCountBelow(const ReproductionParams& params, double cutoff);

struct CutoffLogMean {
    double value = 0.0;
    double stdError = 0.0;
    bool negativeInfinity = false;
};

/// m(a) = E log E_Λ[#{|u|=1 : V(u) ≤ a − κ_1(ϑ)/ϑ}]. An environment in which no
/// child can meet the cutoff makes the value −∞; that is reported through the
/// flag rather than thrown.
CutoffLogMean mOfA(const EnvironmentLaw& law, const TiltSolution& tilt, double a,
                   EstimationMode mode);

}  // namespace brwre
