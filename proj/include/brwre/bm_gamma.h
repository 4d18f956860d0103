#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "brwre/rng.h"
#include "brwre/stats.h"

namespace brwre {

struct TubeGrid {
    double a = 1.0;
    std::size_t points = 257;
    double dt = 1.0 / 64.0;
    double horizon = 16.0;

    /// Throws std::invalid_argument unless points is odd and ≥ 51, a > 0,
    /// 0 < dt ≤ a²/16 and horizon is a positive multiple of dt.
    void validate() const;
    std::size_t steps() const;
};

/// Transfer operator for the relative coordinate x = B − βW on [−a, a].
///
/// Each step applies the Gaussian transition of B shifted by β·ΔW and the
/// Brownian-bridge non-exit factor (1 − e^{−2(a−x)(a−y)/Δ})(1 − e^{−2(a+x)(a+y)/Δ}),
/// with W linear between grid times. Quadrature is trapezoidal on the odd
/// grid, so x = 0 is a node and the start is an exact point mass.
class TubeKernel {
public:
    explicit TubeKernel(const TubeGrid& grid);

    /// log P(∀s ≤ kΔ: |B_s − βW_s| ≤ a | W) for k = 1..W.size(). W holds
    /// W_Δ, W_{2Δ}, …; W_0 = 0 is implied.
    std::vector<double> logSurvivalCurve(std::span<const double> w, double beta) const;

    const TubeGrid& grid() const { return grid_; }

private:
    TubeGrid grid_;
    double h_ = 0.0;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> transition_;  // [i * points + j], point mass at node i to density at j
};

double tubeLogProbability(std::span<const double> w, double beta, const TubeGrid& grid);
double tubeProbability(std::span<const double> w, double beta, const TubeGrid& grid);

/// W_Δ..W_t for one standard Brownian path.
std::vector<double> sampleBrownianPath(const TubeGrid& grid, CounterRng& rng);

/// Nested plain Monte Carlo of the same tube probability: B is simulated on
/// the Δ-grid and killed between nodes with the bridge exit probability.
MeanEstimate tubeProbabilityMonteCarlo(std::span<const double> w, double beta,
                                       const TubeGrid& grid, std::size_t replicates,
                                       std::uint64_t seed, unsigned threads = 1);

struct GammaEstimate {
    double beta = 0.0;
    double value = 0.0;
    double stdError = 0.0;
    std::size_t replicates = 0;
    std::size_t excluded = 0;
    bool unreliable = false;
    TubeGrid grid;
};

/// Mean of −4a²·log P(tube | W)/t over independent W paths. Paths with zero
/// probability are excluded and counted; more than 5% exclusions marks the
/// estimate unreliable.
GammaEstimate estimateGammaHat(double beta, const TubeGrid& grid, std::size_t outerReplicates,
                               std::uint64_t seed, unsigned threads = 1);

struct GammaPair {
    double gammaSigma = 0.0;
    double gamma = 0.0;
};

/// γ_σ = σ*²·γ̂ and γ = −√(γ_σ/ϑ). Throws std::invalid_argument when the
/// estimate was not taken at β = σ²/σ*².
GammaPair gammaConstants(double sigma2, double sigmaStar2, double theta,
                         const GammaEstimate& gammaHat);

}  // namespace brwre
