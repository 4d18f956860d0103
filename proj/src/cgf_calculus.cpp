#include "brwre/cgf_calculus.h"

#include <cmath>
#include <functional>
#include <limits>

namespace brwre {

namespace {

void checkLawDomain(const EnvironmentLaw& law, double theta) {
    if (!std::isfinite(theta) || theta < 0.0 || theta > law.thetaBar()) {
        throw DomainError("theta outside [0, theta_bar]");
    }
}

void requireSamples(const EstimationMode& mode) {
    if (mode.kind == EstimationMode::Kind::MonteCarlo && mode.samples < 2) {
        throw std::invalid_argument("monte-carlo mode needs at least 2 samples");
    }
}

// Expectation of f(params) under the law, exact for finite mixtures.
double mixtureExpectation(const EnvironmentLaw& law,
                          const std::function<double(const ReproductionParams&)>& f) {
    double total = 0.0;
    for (const auto& c : law.components()) {
        if (c.weight > 0.0) {
            total += c.weight * f(c.params);
        }
    }
    return total;
}

MeanEstimate monteCarloExpectation(const EnvironmentLaw& law, const EstimationMode& mode,
                                   const std::function<double(const ReproductionParams&)>& f) {
    RunningStats stats;
    for (std::size_t i = 0; i < mode.samples; ++i) {
        CounterRng rng(mode.seed, StreamPurpose::LawMonteCarlo, i);
        stats.push(f(law.sample(rng)));
    }
    return stats.estimate();
}

double expectedLogMean(const std::vector<double>& countProbabilities) {
    double m = 0.0;
    for (std::size_t k = 0; k < countProbabilities.size(); ++k) {
        m += countProbabilities[k] * static_cast<double>(k);
    }
    return std::log(m);
}

double normalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

MeanEstimate meanKappa(const EnvironmentLaw& law, double theta, EstimationMode mode) {
    checkLawDomain(law, theta);
    requireSamples(mode);
    auto f = [theta](const ReproductionParams& p) { return kappa(p, theta); };
    if (mode.kind == EstimationMode::Kind::MonteCarlo) {
        return monteCarloExpectation(law, mode, f);
    }
    if (law.isFiniteMixture()) {
        return {mixtureExpectation(law, f), 0.0};
    }
    // κ_1 is affine in the variance for gaussian-count, and E v = scale.
    const double value = expectedLogMean(law.countProbabilities()) -
                         theta * law.displacementMean() +
                         0.5 * theta * theta * law.varianceScale();
    return {value, 0.0};
}

double tiltFunction(const EnvironmentLaw& law, double theta) {
    checkLawDomain(law, theta);
    if (law.isFiniteMixture()) {
        return mixtureExpectation(law, [theta](const ReproductionParams& p) {
            const KappaValues k = kappaAll(p, theta);
            return k.value - theta * k.first;
        });
    }
    return expectedLogMean(law.countProbabilities()) - 0.5 * theta * theta * law.varianceScale();
}

std::pair<double, double> defaultTiltBracket(const EnvironmentLaw& law) {
    return {1e-6, law.thetaBar() * (1.0 - 1e-6)};
}

TiltSolution solveTilt(const EnvironmentLaw& law, double tolerance) {
    return solveTilt(law, defaultTiltBracket(law), tolerance);
}

TiltSolution solveTilt(const EnvironmentLaw& law, std::pair<double, double> bracket,
                       double tolerance) {
    double lo = bracket.first;
    double hi = bracket.second;
    if (!(lo < hi)) {
        throw std::invalid_argument("solve_tilt: bracket must satisfy low < high");
    }
    const double kappaZero = meanKappa(law, 0.0, EstimationMode::analytic()).value;
    if (!(kappaZero > 0.0) || !std::isfinite(kappaZero)) {
        throw NoSignChangeError("solve_tilt: kappa(0) must lie in (0, +inf)");
    }
    // g(0) = κ(0) > 0 and g is nonincreasing, so the root needs g(lo) > 0 > g(hi).
    const double glo = tiltFunction(law, lo);
    const double ghi = tiltFunction(law, hi);
    if (!(glo > 0.0) || !(ghi < 0.0)) {
        throw NoSignChangeError(
            "solve_tilt: kappa(theta) - theta*kappa'(theta) has no sign change on the bracket");
    }
    TiltSolution sol;
    sol.bracket = bracket;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double gm = tiltFunction(law, mid);
        sol.iterations = it + 1;
        if (gm == 0.0) {
            lo = hi = mid;
            break;
        }
        if (gm > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sol.theta = 0.5 * (lo + hi);
    sol.residual = std::abs(tiltFunction(law, sol.theta));
    sol.kappaAtTheta = meanKappa(law, sol.theta, EstimationMode::analytic()).value;
    if (sol.residual > tolerance) {
        throw NoSignChangeError("solve_tilt: bisection did not reach the requested tolerance");
    }
    return sol;
}

EnvironmentMoments environmentMoments(const EnvironmentLaw& law, const TiltSolution& tilt,
                                      EstimationMode mode) {
    requireSamples(mode);
    const double theta = tilt.theta;
    auto residualSquared = [theta](const ReproductionParams& p) {
        const KappaValues k = kappaAll(p, theta);
        const double g = k.value - theta * k.first;
        return g * g;
    };
    auto curvature = [theta](const ReproductionParams& p) {
        return theta * theta * kappaSecond(p, theta);
    };
    EnvironmentMoments out;
    if (mode.kind == EstimationMode::Kind::MonteCarlo) {
        out.sigma2 = monteCarloExpectation(law, mode, residualSquared);
        out.sigmaStar2 = monteCarloExpectation(law, mode, curvature);
        return out;
    }
    if (law.isFiniteMixture()) {
        out.sigma2 = {mixtureExpectation(law, residualSquared), 0.0};
        out.sigmaStar2 = {mixtureExpectation(law, curvature), 0.0};
        return out;
    }
    // g_1 = log m − ϑ²v/2 is affine in v: E g_1² = (E g_1)² + (ϑ²/2)² Var v.
    const double scale = law.varianceScale();
    const double varV = 2.0 * scale * scale / law.degreesOfFreedom();
    const double meanG = expectedLogMean(law.countProbabilities()) - 0.5 * theta * theta * scale;
    out.sigma2 = {meanG * meanG + 0.25 * theta * theta * theta * theta * varV, 0.0};
    out.sigmaStar2 = {theta * theta * scale, 0.0};
    return out;
}

ModelConstants modelConstants(const EnvironmentLaw& law, const TiltSolution& tilt, double gammaHat,
                              EstimationMode mode) {
    const EnvironmentMoments moments = environmentMoments(law, tilt, mode);
    if (!(moments.sigmaStar2.value > 0.0)) {
        throw std::invalid_argument("invalid law: sigma_*^2 must be > 0");
    }
    ModelConstants c;
    c.sigma2 = moments.sigma2.value;
    c.sigmaStar2 = moments.sigmaStar2.value;
    c.gammaHat = gammaHat;
    c.gammaSigma = c.sigmaStar2 * gammaHat;
    c.gamma = -std::sqrt(c.gammaSigma / tilt.theta);
    c.speed = -tilt.kappaAtTheta / tilt.theta;
    return c;
}

std::vector<double> cumulativeK(const EnvironmentRealization& env, double theta) {
    std::vector<double> k(env.horizon() + 1, 0.0);
    for (std::size_t i = 1; i <= env.horizon(); ++i) {
        k[i] = k[i - 1] + kappa(env.generation(i), theta);
    }
    return k;
}

void BarrierSpec::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("barrier: alpha must lie in (0, 1]");
    }
    if (!(theta > 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("barrier: theta must be > 0 and epsilon finite");
    }
}

double BarrierSpec::slopeTerm(std::size_t i) const {
    if (i == 0) {
        return 0.0;
    }
    const double x = static_cast<double>(i);
    return epsilon * (alpha == 1.0 ? x : std::pow(x, alpha));
}

double barrierValue(const BarrierSpec& spec, std::span<const double> cumulative, std::size_t i) {
    spec.validate();
    if (i >= cumulative.size()) {
        throw std::out_of_range("barrier_value: generation index beyond K");
    }
    return -cumulative[i] / spec.theta + spec.slopeTerm(i);
}

double meanCountBelow(const ReproductionParams& params, double cutoff) {
    if (params.isDiscrete()) {
        double total = 0.0;
        for (const auto& o : params.outcomes()) {
            std::size_t below = 0;
            for (double z : o.displacements) {
                if (z <= cutoff) {
                    ++below;
                }
            }
            total += o.probability * static_cast<double>(below);
        }
        return total;
    }
    const double sd = std::sqrt(params.displacementVariance());
    return params.expectedOffspring() * normalCdf((cutoff - params.displacementMean()) / sd);
}

CutoffLogMean mOfA(const EnvironmentLaw& law, const TiltSolution& tilt, double a,
                   EstimationMode mode) {
    requireSamples(mode);
    const double theta = tilt.theta;
    auto logMean = [theta, a](const ReproductionParams& p) {
        return std::log(meanCountBelow(p, a - kappa(p, theta) / theta));
    };
    CutoffLogMean out;
    MeanEstimate est;
    if (mode.kind == EstimationMode::Kind::MonteCarlo) {
        RunningStats stats;
        for (std::size_t i = 0; i < mode.samples; ++i) {
            CounterRng rng(mode.seed, StreamPurpose::LawMonteCarlo, i);
            const double v = logMean(law.sample(rng));
            if (!std::isfinite(v)) {
                out.negativeInfinity = true;
                break;
            }
            stats.push(v);
        }
        est = stats.estimate();
    } else {
        if (!law.isFiniteMixture()) {
            throw std::invalid_argument(
                "m_of_a: analytic mode needs a finite mixture; use monte-carlo");
        }
        for (const auto& c : law.components()) {
            if (c.weight > 0.0 && !std::isfinite(logMean(c.params))) {
                out.negativeInfinity = true;
            }
        }
        if (!out.negativeInfinity) {
            est = {mixtureExpectation(law, logMean), 0.0};
        }
    }
    if (out.negativeInfinity) {
        out.value = -std::numeric_limits<double>::infinity();
        out.stdError = 0.0;
        return out;
    }
    out.value = est.value;
    out.stdError = est.stdError;
    return out;
}

}  // namespace brwre
