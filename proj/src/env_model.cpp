#include "brwre/env_model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace brwre {

namespace {

constexpr double kWeightTolerance = 1e-12;

void checkWeights(const std::vector<double>& weights, const char* what) {
    if (weights.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty weight list");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw std::invalid_argument(std::string(what) + ": weight outside [0,1]");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > kWeightTolerance) {
        throw std::invalid_argument(std::string(what) + ": weights must sum to 1");
    }
}

std::vector<double> cumulativeOf(const std::vector<double>& weights) {
    std::vector<double> cumulative(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
    cumulative.back() = 1.0;
    return cumulative;
}

std::size_t pickFromCumulative(const std::vector<double>& cumulative, double u) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto index = static_cast<std::size_t>(it - cumulative.begin());
    return std::min(index, cumulative.size() - 1);
}

void checkTheta(double theta) {
    if (!std::isfinite(theta) || theta < 0.0) {
        throw DomainError("kappa: theta must be a finite value >= 0");
    }
}

}  // namespace

std::string familyName(Family family) {
    return family == Family::DiscreteTable ? "discrete-table" : "gaussian-count";
}

ReproductionParams ReproductionParams::discreteTable(std::vector<TableOutcome> outcomes) {
    std::vector<double> weights;
    weights.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        for (double z : o.displacements) {
            if (!std::isfinite(z)) {
                throw std::invalid_argument("discrete-table: non-finite displacement");
            }
        }
        weights.push_back(o.probability);
    }
    checkWeights(weights, "discrete-table");

    ReproductionParams p;
    p.family_ = Family::DiscreteTable;
    p.outcomes_ = std::move(outcomes);
    p.buildCumulative();
    return p;
}

ReproductionParams ReproductionParams::gaussianCount(std::vector<double> countProbabilities,
                                                     double mean, double variance) {
    checkWeights(countProbabilities, "gaussian-count");
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw std::invalid_argument("gaussian-count: variance must be > 0");
    }
    if (!std::isfinite(mean)) {
        throw std::invalid_argument("gaussian-count: non-finite mean");
    }
    ReproductionParams p;
    p.family_ = Family::GaussianCount;
    p.countProbabilities_ = std::move(countProbabilities);
    p.mean_ = mean;
    p.variance_ = variance;
    p.buildCumulative();
    return p;
}

void ReproductionParams::buildCumulative() {
    if (isDiscrete()) {
        std::vector<double> weights;
        for (const auto& o : outcomes_) {
            weights.push_back(o.probability);
        }
        cumulative_ = cumulativeOf(weights);
    } else {
        cumulative_ = cumulativeOf(countProbabilities_);
    }
}

double ReproductionParams::expectedOffspring() const {
    double m = 0.0;
    if (isDiscrete()) {
        for (const auto& o : outcomes_) {
            m += o.probability * static_cast<double>(o.displacements.size());
        }
    } else {
        for (std::size_t k = 0; k < countProbabilities_.size(); ++k) {
            m += countProbabilities_[k] * static_cast<double>(k);
        }
    }
    return m;
}

std::size_t ReproductionParams::maxOffspring() const {
    std::size_t most = 0;
    if (isDiscrete()) {
        for (const auto& o : outcomes_) {
            if (o.probability > 0.0) {
                most = std::max(most, o.displacements.size());
            }
        }
    } else {
        for (std::size_t k = 0; k < countProbabilities_.size(); ++k) {
            if (countProbabilities_[k] > 0.0) {
                most = k;
            }
        }
    }
    return most;
}

std::vector<double> ReproductionParams::offspringCountLaw() const {
    if (!isDiscrete()) {
        return countProbabilities_;
    }
    std::size_t most = 0;
    for (const auto& o : outcomes_) {
        most = std::max(most, o.displacements.size());
    }
    std::vector<double> law(most + 1, 0.0);
    for (const auto& o : outcomes_) {
        law[o.displacements.size()] += o.probability;
    }
    return law;
}

std::size_t ReproductionParams::pickIndex(double u) const {
    return pickFromCumulative(cumulative_, u);
}

bool ReproductionParams::operator==(const ReproductionParams& other) const {
    if (family_ != other.family_) {
        return false;
    }
    if (isDiscrete()) {
        if (outcomes_.size() != other.outcomes_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < outcomes_.size(); ++i) {
            if (outcomes_[i].probability != other.outcomes_[i].probability ||
                outcomes_[i].displacements != other.outcomes_[i].displacements) {
                return false;
            }
        }
        return true;
    }
    return countProbabilities_ == other.countProbabilities_ && mean_ == other.mean_ &&
           variance_ == other.variance_;
}

KappaValues kappaAll(const ReproductionParams& params, double theta) {
    checkTheta(theta);
    KappaValues out;
    if (params.isDiscrete()) {
        // log-sum-exp over all (outcome, child) terms w·e^{−θζ}
        double shift = -std::numeric_limits<double>::infinity();
        for (const auto& o : params.outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            for (double z : o.displacements) {
                shift = std::max(shift, std::log(o.probability) - theta * z);
            }
        }
        if (!std::isfinite(shift)) {
            const double inf = std::numeric_limits<double>::infinity();
            return {-inf, 0.0, 0.0};
        }
        double s0 = 0.0;
        double s1 = 0.0;
        double s2 = 0.0;
        for (const auto& o : params.outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            const double logw = std::log(o.probability);
            for (double z : o.displacements) {
                const double t = std::exp(logw - theta * z - shift);
                s0 += t;
                s1 += t * z;
                s2 += t * z * z;
            }
        }
        out.value = shift + std::log(s0);
        const double meanZ = s1 / s0;
        out.first = -meanZ;
        out.second = std::max(0.0, s2 / s0 - meanZ * meanZ);
        return out;
    }
    const double m = params.expectedOffspring();
    const double mu = params.displacementMean();
    const double v = params.displacementVariance();
    out.value = std::log(m) - theta * mu + 0.5 * theta * theta * v;
    out.first = -mu + theta * v;
    out.second = v;
    return out;
}

double kappa(const ReproductionParams& params, double theta) { return kappaAll(params, theta).value; }

double kappaPrime(const ReproductionParams& params, double theta) {
    return kappaAll(params, theta).first;
}

double kappaSecond(const ReproductionParams& params, double theta) {
    return kappaAll(params, theta).second;
}

std::size_t appendReproduction(const ReproductionParams& params, CounterRng& rng,
                               std::vector<double>& out) {
    const std::size_t index = params.pickIndex(rng.uniform());
    if (params.isDiscrete()) {
        const auto& d = params.outcomes()[index].displacements;
        out.insert(out.end(), d.begin(), d.end());
        return d.size();
    }
    std::normal_distribution<double> normal(params.displacementMean(),
                                            std::sqrt(params.displacementVariance()));
    for (std::size_t k = 0; k < index; ++k) {
        out.push_back(normal(rng));
    }
    return index;
}

std::vector<double> sampleReproduction(const ReproductionParams& params, CounterRng& rng) {
    std::vector<double> out;
    appendReproduction(params, rng, out);
    return out;
}

EnvironmentLaw EnvironmentLaw::degenerate(ReproductionParams params, double thetaBar) {
    return mixture({LawComponent{1.0, std::move(params)}}, thetaBar);
}

EnvironmentLaw EnvironmentLaw::mixture(std::vector<LawComponent> components, double thetaBar) {
    std::vector<double> weights;
    for (const auto& c : components) {
        weights.push_back(c.weight);
    }
    checkWeights(weights, "environment mixture");
    if (!(thetaBar > 0.0)) {
        throw std::invalid_argument("environment law: theta_bar must be > 0");
    }
    EnvironmentLaw law;
    law.kind_ = Kind::FiniteMixture;
    law.thetaBar_ = thetaBar;
    law.components_ = std::move(components);
    law.cumulative_ = cumulativeOf(weights);
    return law;
}

EnvironmentLaw EnvironmentLaw::gaussianChiSquare(std::vector<double> countProbabilities, double mean,
                                                 double varianceScale, double degreesOfFreedom,
                                                 double thetaBar) {
    checkWeights(countProbabilities, "gaussian chi-square law");
    if (!(varianceScale > 0.0) || !(degreesOfFreedom > 0.0)) {
        throw std::invalid_argument("gaussian chi-square law: scale and dof must be > 0");
    }
    EnvironmentLaw law;
    law.kind_ = Kind::GaussianChiSquare;
    law.thetaBar_ = thetaBar;
    law.countProbabilities_ = std::move(countProbabilities);
    law.mean_ = mean;
    law.varianceScale_ = varianceScale;
    law.dof_ = degreesOfFreedom;
    return law;
}

bool EnvironmentLaw::allDiscrete() const {
    if (!isFiniteMixture()) {
        return false;
    }
    return std::all_of(components_.begin(), components_.end(),
                       [](const LawComponent& c) { return c.params.isDiscrete(); });
}

ReproductionParams EnvironmentLaw::sample(CounterRng& rng) const {
    if (isFiniteMixture()) {
        return components_[pickFromCumulative(cumulative_, rng.uniform())].params;
    }
    std::chi_squared_distribution<double> chi(dof_);
    double v = varianceScale_ * chi(rng) / dof_;
    v = std::max(v, std::numeric_limits<double>::min());
    return ReproductionParams::gaussianCount(countProbabilities_, mean_, v);
}

EnvironmentRealization EnvironmentRealization::slice(std::size_t offset, std::size_t length) const {
    if (offset + length > params.size()) {
        throw std::out_of_range("environment slice beyond horizon");
    }
    EnvironmentRealization out;
    out.seed = seed;
    out.params.assign(params.begin() + static_cast<std::ptrdiff_t>(offset),
                      params.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return out;
}

EnvironmentRealization sampleEnvironment(const EnvironmentLaw& law, std::size_t horizon,
                                         std::uint64_t seed) {
    EnvironmentRealization env;
    env.seed = seed;
    env.params.reserve(horizon);
    for (std::size_t i = 0; i < horizon; ++i) {
        CounterRng rng(seed, StreamPurpose::Environment, i);
        env.params.push_back(law.sample(rng));
    }
    return env;
}

}  // namespace brwre
