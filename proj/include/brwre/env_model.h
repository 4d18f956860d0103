#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwre/rng.h"

namespace brwre {

/// θ̄ stored for families whose log-Laplace transform is finite for every θ ≥ 0.
inline constexpr double kUnboundedTheta = 1.0e6;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DegenerateLawError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Family { DiscreteTable, GaussianCount };

std::string familyName(Family family);

/// One row of a discrete reproduction table: with `probability`, the parent
/// has exactly `displacements.size()` children at these relative positions.
struct TableOutcome {
    double probability = 0.0;
    std::vector<double> displacements;
};

/// Law of one generation's point process.
///
/// discrete-table: a finite list of outcomes; count and displacements may be
/// arbitrarily coupled within an outcome.
/// gaussian-count: N ~ countProbabilities, children i.i.d. N(mean, variance),
/// independent of N.
class ReproductionParams {
public:
    static ReproductionParams discreteTable(std::vector<TableOutcome> outcomes);
    static ReproductionParams gaussianCount(std::vector<double> countProbabilities, double mean,
                                            double variance);

    Family family() const { return family_; }
    bool isDiscrete() const { return family_ == Family::DiscreteTable; }

    const std::vector<TableOutcome>& outcomes() const { return outcomes_; }
    const std::vector<double>& countProbabilities() const { return countProbabilities_; }
    double displacementMean() const { return mean_; }
    double displacementVariance() const { return variance_; }

    double expectedOffspring() const;
    std::size_t maxOffspring() const;

    /// P(N = k) for either family.
    std::vector<double> offspringCountLaw() const;

    /// Samples an outcome index (discrete) or a child count (gaussian) from u in [0,1).
    std::size_t pickIndex(double u) const;

    bool operator==(const ReproductionParams& other) const;

private:
    ReproductionParams() = default;
    void buildCumulative();

    Family family_ = Family::DiscreteTable;
    std::vector<TableOutcome> outcomes_;
    std::vector<double> countProbabilities_;
    double mean_ = 0.0;
    double variance_ = 1.0;
    std::vector<double> cumulative_;
};

struct KappaValues {
    double value = 0.0;
    double first = 0.0;
    double second = 0.0;
};

/// κ(θ) = log E[Σ_{i≤N} e^{−θζ_i}] with its first two θ-derivatives.
/// Throws DomainError for θ < 0 or non-finite θ.
KappaValues kappaAll(const ReproductionParams& params, double theta);
double kappa(const ReproductionParams& params, double theta);
double kappaPrime(const ReproductionParams& params, double theta);
double kappaSecond(const ReproductionParams& params, double theta);

/// Draws one reproduction event; returns child displacements.
std::vector<double> sampleReproduction(const ReproductionParams& params, CounterRng& rng);

/// Appends child displacements to `out`, returns the number appended.
std::size_t appendReproduction(const ReproductionParams& params, CounterRng& rng,
                               std::vector<double>& out);

struct LawComponent {
    double weight = 0.0;
    ReproductionParams params;
};

/// Distribution of one generation's ReproductionParams. Either a finite
/// mixture, or the gaussian-count family with variance = scale·χ²_dof/dof.
class EnvironmentLaw {
public:
    enum class Kind { FiniteMixture, GaussianChiSquare };

    static EnvironmentLaw degenerate(ReproductionParams params, double thetaBar = kUnboundedTheta);
    static EnvironmentLaw mixture(std::vector<LawComponent> components,
                                  double thetaBar = kUnboundedTheta);
    static EnvironmentLaw gaussianChiSquare(std::vector<double> countProbabilities, double mean,
                                            double varianceScale, double degreesOfFreedom,
                                            double thetaBar = kUnboundedTheta);

    Kind kind() const { return kind_; }
    bool isFiniteMixture() const { return kind_ == Kind::FiniteMixture; }
    bool isDegenerate() const { return isFiniteMixture() && components_.size() == 1; }
    bool allDiscrete() const;
    double thetaBar() const { return thetaBar_; }

    const std::vector<LawComponent>& components() const { return components_; }
    const std::vector<double>& countProbabilities() const { return countProbabilities_; }
    double displacementMean() const { return mean_; }
    double varianceScale() const { return varianceScale_; }
    double degreesOfFreedom() const { return dof_; }

    ReproductionParams sample(CounterRng& rng) const;

private:
    EnvironmentLaw() = default;

    Kind kind_ = Kind::FiniteMixture;
    double thetaBar_ = kUnboundedTheta;
    std::vector<LawComponent> components_;
    std::vector<double> cumulative_;
    std::vector<double> countProbabilities_;
    double mean_ = 0.0;
    double varianceScale_ = 1.0;
    double dof_ = 1.0;
};

/// Λ_1..Λ_n: params[g-1] is the law by which generation g-1 reproduces into
/// generation g. Entry i depends only on (law, seed, i), so a longer horizon
/// extends a shorter one.
struct EnvironmentRealization {
    std::uint64_t seed = 0;
    std::vector<ReproductionParams> params;

    std::size_t horizon() const { return params.size(); }
    /// Law used by generation g (g ≥ 1) when producing generation g.
    const ReproductionParams& generation(std::size_t g) const { return params.at(g - 1); }
    EnvironmentRealization slice(std::size_t offset, std::size_t length) const;
};

EnvironmentRealization sampleEnvironment(const EnvironmentLaw& law, std::size_t horizon,
                                         std::uint64_t seed);

}  // namespace brwre
