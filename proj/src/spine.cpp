#include "brwre/spine.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "brwre/cgf_calculus.h"
#include "brwre/parallel.h"

namespace brwre {

namespace {

double normalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::size_t pick(const std::vector<double>& cumulative, double u) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<double> cumulativeOf(const std::vector<double>& weights) {
    std::vector<double> c(weights.size());
    std::partial_sum(weights.begin(), weights.end(), c.begin());
    if (!c.empty()) {
        c.back() = 1.0;
    }
    return c;
}

}  // namespace

TiltedStepLaw TiltedStepLaw::build(const ReproductionParams& params, double theta) {
    TiltedStepLaw law;
    const double logNormalizer = kappa(params, theta);
    if (!std::isfinite(logNormalizer)) {
        throw DegenerateLawError("tilted step law: no children are possible");
    }
    if (params.isDiscrete()) {
        law.discrete_ = true;
        std::vector<double> weights;
        for (const auto& o : params.outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            const double logw = std::log(o.probability);
            for (double z : o.displacements) {
                const double p = std::exp(logw - theta * z - logNormalizer);
                law.atoms_.push_back({z, o.displacements.size(), p});
                weights.push_back(p);
            }
        }
        law.atomCumulative_ = cumulativeOf(weights);
        return law;
    }
    law.discrete_ = false;
    const auto& counts = params.countProbabilities();
    const double m = params.expectedOffspring();
    law.sizeBiased_.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        law.sizeBiased_[k] = static_cast<double>(k) * counts[k] / m;
    }
    law.countCumulative_ = cumulativeOf(law.sizeBiased_);
    law.variance_ = params.displacementVariance();
    law.mean_ = params.displacementMean() - theta * law.variance_;
    return law;
}

double TiltedStepLaw::cdf(double x, double countThreshold) const {
    double total = 0.0;
    if (discrete_) {
        for (const auto& a : atoms_) {
            if (a.displacement <= x && static_cast<double>(a.siblingCount) <= countThreshold) {
                total += a.probability;
            }
        }
        return total;
    }
    for (std::size_t k = 0; k < sizeBiased_.size(); ++k) {
        if (static_cast<double>(k) <= countThreshold) {
            total += sizeBiased_[k];
        }
    }
    return total * normalCdf((x - mean_) / std::sqrt(variance_));
}

TiltedStepLaw::Draw TiltedStepLaw::sample(CounterRng& rng) const {
    if (discrete_) {
        const TiltedAtom& a = atoms_[pick(atomCumulative_, rng.uniform())];
        return {a.displacement, a.siblingCount};
    }
    const std::size_t k = pick(countCumulative_, rng.uniform());
    std::normal_distribution<double> normal(mean_, std::sqrt(variance_));
    return {normal(rng), k};
}

SpineEnvironment::SpineEnvironment(const EnvironmentRealization& env, double theta_)
    : theta(theta_), cumulativeK(brwre::cumulativeK(env, theta_)) {
    laws.reserve(env.horizon());
    for (std::size_t i = 1; i <= env.horizon(); ++i) {
        laws.push_back(TiltedStepLaw::build(env.generation(i), theta));
    }
}

SpinePath sampleSpineWalk(const SpineEnvironment& spine, std::size_t n, CounterRng& rng) {
    if (n > spine.horizon()) {
        throw std::invalid_argument("sample_spine_walk: environment horizon shorter than n");
    }
    SpinePath path;
    path.theta = spine.theta;
    path.steps.reserve(n);
    double s = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const auto draw = spine.laws[i - 1].sample(rng);
        s += draw.displacement;
        path.steps.push_back({draw.displacement, draw.siblingCount, s,
                              spine.theta * s + spine.cumulativeK[i]});
    }
    return path;
}

SpinePath sampleSpineWalk(const EnvironmentRealization& env, double theta, std::size_t n,
                          CounterRng& rng) {
    return sampleSpineWalk(SpineEnvironment(env.slice(0, std::min(n, env.horizon())), theta), n,
                           rng);
}

namespace {

double thresholdAt(std::span<const double> thresholds, std::size_t i) {
    return i <= thresholds.size() ? thresholds[i - 1] : std::numeric_limits<double>::infinity();
}

struct TreeWalk {
    const EnvironmentRealization& env;
    double theta;
    std::size_t n;
    const PathFunction& f;
    std::span<const double> thresholds;
    std::size_t budget;
    std::size_t visited = 0;
    std::vector<double> path;
    double numerator = 0.0;
    double denominator = 0.0;

    void visit(std::size_t g, double position, double probability, bool admissible) {
        if (++visited > budget) {
            throw std::length_error("verify_many_to_one: tree exceeds the enumeration budget");
        }
        if (g == n) {
            const double w = probability * std::exp(-theta * position);
            denominator += w;
            if (admissible) {
                numerator += w * f(path);
            }
            return;
        }
        const auto& params = env.generation(g + 1);
        for (const auto& o : params.outcomes()) {
            if (o.probability <= 0.0) {
                continue;
            }
            const bool ok =
                admissible && static_cast<double>(o.displacements.size()) <= thresholdAt(thresholds, g + 1);
            for (double z : o.displacements) {
                path.push_back(position + z);
                visit(g + 1, position + z, probability * o.probability, ok);
                path.pop_back();
            }
        }
    }
};

struct SpineWalk {
    const std::vector<TiltedStepLaw>& laws;
    std::size_t n;
    const PathFunction& f;
    std::span<const double> thresholds;
    std::size_t budget;
    std::size_t visited = 0;
    std::vector<double> path;
    double total = 0.0;

    void visit(std::size_t g, double s, double probability) {
        if (++visited > budget) {
            throw std::length_error("verify_many_to_one: spine enumeration exceeds the budget");
        }
        if (g == n) {
            total += probability * f(path);
            return;
        }
        const double limit = thresholdAt(thresholds, g + 1);
        for (const auto& a : laws[g].atoms()) {
            if (static_cast<double>(a.siblingCount) > limit) {
                continue;
            }
            path.push_back(s + a.displacement);
            visit(g + 1, s + a.displacement, probability * a.probability);
            path.pop_back();
        }
    }
};

}  // namespace

ManyToOneCheck verifyManyToOne(const EnvironmentRealization& env, double theta, std::size_t n,
                               const PathFunction& f, std::span<const double> thresholds,
                               std::size_t pathBudget) {
    if (n > env.horizon()) {
        throw std::invalid_argument("verify_many_to_one: environment horizon shorter than n");
    }
    for (std::size_t i = 1; i <= n; ++i) {
        if (!env.generation(i).isDiscrete()) {
            throw UnsupportedEnvironmentError("verify_many_to_one: needs discrete-table generations");
        }
    }

    TreeWalk tree{env, theta, n, f, thresholds, pathBudget, 0, {}, 0.0, 0.0};
    tree.visit(0, 0.0, 1.0, true);

    std::vector<TiltedStepLaw> laws;
    for (std::size_t i = 1; i <= n; ++i) {
        laws.push_back(TiltedStepLaw::build(env.generation(i), theta));
    }
    SpineWalk spine{laws, n, f, thresholds, pathBudget, 0, {}, 0.0};
    spine.visit(0, 0.0, 1.0);

    ManyToOneCheck out;
    out.weightedMass = tree.denominator;
    out.lhs = tree.denominator > 0.0 ? tree.numerator / tree.denominator : 0.0;
    out.rhs = spine.total;
    out.absDiff = std::abs(out.lhs - out.rhs);
    double kn = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        kn += kappa(env.generation(i), theta);
    }
    out.expK = std::exp(kn);
    return out;
}

CorridorEstimate corridorProbability(const SpineEnvironment& spine, const CorridorQuery& query,
                                     std::size_t replicates, std::uint64_t seed, unsigned threads) {
    if (query.end > spine.horizon() || query.start > query.end) {
        throw std::invalid_argument("corridor_probability: need start <= end <= horizon");
    }
    if (replicates == 0) {
        throw std::invalid_argument("corridor_probability: replicates must be >= 1");
    }
    const auto lower = [&](std::size_t i) {
        return query.lower ? query.lower(i) : -std::numeric_limits<double>::infinity();
    };
    const auto upper = [&](std::size_t i) {
        return query.upper ? query.upper(i) : std::numeric_limits<double>::infinity();
    };

    std::vector<double> inside(replicates, 0.0);
    std::vector<double> weighted(replicates, 0.0);
    const bool startOk =
        lower(query.start) <= query.startValue && query.startValue <= upper(query.start);
    if (startOk) {
        parallelFor(replicates, threads, [&](std::size_t r) {
            CounterRng rng(seed, StreamPurpose::Corridor, query.start, r);
            double t = query.startValue;
            for (std::size_t i = query.start + 1; i <= query.end; ++i) {
                const auto draw = spine.laws[i - 1].sample(rng);
                t += spine.theta * draw.displacement + (spine.cumulativeK[i] - spine.cumulativeK[i - 1]);
                if (t < lower(i) || t > upper(i) ||
                    static_cast<double>(draw.siblingCount) > query.xiThreshold) {
                    return;
                }
            }
            inside[r] = 1.0;
            weighted[r] = std::exp(t);
        });
    }
    CorridorEstimate out;
    out.replicates = replicates;
    out.probability = meanOf(inside);
    out.weighted = meanOf(weighted);
    return out;
}

double MomentBoundSetup::upper(std::size_t i) const {
    return theta * b * static_cast<double>(i) / std::pow(static_cast<double>(n), 2.0 / 3.0);
}

double MomentBoundSetup::lower(std::size_t i) const {
    return upper(i) - theta * d * std::cbrt(static_cast<double>(n));
}

MomentBoundResult assembleMomentBound(const MomentBoundSetup& setup, double numerator,
                                      std::span<const double> pjn) {
    if (pjn.size() != setup.n) {
        throw std::invalid_argument("moment bound: need one P_{j,n} per j = 1..n");
    }
    MomentBoundResult out;
    out.numerator = numerator;
    out.pjn.assign(pjn.begin(), pjn.end());
    const double cube = std::cbrt(static_cast<double>(setup.n));
    const double twoThirds = cube * cube;
    double sum = 0.0;
    for (std::size_t j = 1; j <= setup.n; ++j) {
        const double exponent = setup.theta * (setup.b * cube + setup.d * cube -
                                               setup.b * static_cast<double>(j) / twoThirds);
        sum += std::exp(exponent) * pjn[j - 1];
    }
    out.denominator = 1.0 + (setup.countThreshold - 1.0) * sum;
    if (!(out.denominator > 0.0) || !std::isfinite(out.denominator)) {
        out.invalid = true;
        out.bound = 0.0;
        return out;
    }
    out.bound = std::clamp(numerator / out.denominator, 0.0, 1.0);
    return out;
}

MomentBoundResult firstSecondMomentLowerBound(const SpineEnvironment& spine,
                                              const MomentBoundSetup& setup,
                                              const MomentBoundOptions& options) {
    if (setup.n == 0 || setup.n > spine.horizon()) {
        throw std::invalid_argument("moment bound: need 1 <= n <= horizon");
    }
    if (!(setup.countThreshold > 1.0)) {
        throw std::invalid_argument("moment bound: A_n must exceed 1");
    }
    if (options.gridPoints < 2) {
        throw std::invalid_argument("moment bound: y-grid needs at least 2 points");
    }
    CorridorQuery q;
    q.end = setup.n;
    q.lower = [&setup](std::size_t i) { return setup.lower(i); };
    q.upper = [&setup](std::size_t i) { return setup.upper(i); };
    q.xiThreshold = setup.countThreshold;
    const CorridorEstimate head =
        corridorProbability(spine, q, options.replicates, options.seed, options.threads);

    // The sup over y in P_{j,n} drops the ξ restriction and takes the max over a grid.
    std::vector<double> pjn(setup.n, 0.0);
    CorridorQuery tail = q;
    tail.xiThreshold = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j <= setup.n; ++j) {
        tail.start = j;
        const double lo = setup.lower(j);
        const double hi = setup.upper(j);
        double best = 0.0;
        for (std::size_t g = 0; g < options.gridPoints && best < 1.0; ++g) {
            tail.startValue = lo + (hi - lo) * static_cast<double>(g) /
                                       static_cast<double>(options.gridPoints - 1);
            const auto est = corridorProbability(spine, tail, options.replicates,
                                                 streamKey(options.seed, StreamPurpose::Corridor, j, g),
                                                 options.threads);
            best = std::max(best, est.probability.value);
        }
        pjn[j - 1] = best;
    }
    MomentBoundResult out = assembleMomentBound(setup, head.weighted.value, pjn);
    out.numeratorStdError = head.weighted.stdError;
    return out;
}

}  // namespace brwre
