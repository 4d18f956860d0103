#include "brwre/brw_engine.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "brwre/parallel.h"
#include "brwre/rng.h"

namespace brwre {

namespace {

struct Particle {
    double q;       // V + K_g/ϑ
    double epsReq;  // smallest slope under which the whole ancestry stays below the barrier
    std::uint64_t id;
};

std::uint64_t childId(std::uint64_t parent, std::size_t index, std::size_t generation) {
    return mix64(parent * 0x9e3779b97f4a7c15ULL + (index + 1) * 0xd6e8feb86659fd93ULL +
                 generation);
}

std::uint64_t priorityOf(const Particle& p, std::size_t generation) {
    return mix64(p.id ^ (0xa0761d6478bd642fULL * (generation + 1)));
}

void checkAscending(std::span<const double> epsilons) {
    if (epsilons.empty()) {
        throw std::invalid_argument("epsilon list must be nonempty");
    }
    for (std::size_t k = 1; k < epsilons.size(); ++k) {
        if (!(epsilons[k] > epsilons[k - 1])) {
            throw std::invalid_argument("epsilon list must be strictly increasing");
        }
    }
}

}  // namespace

std::vector<SimulationOutcome> simulateCoupled(const EnvironmentRealization& env,
                                               std::span<const double> epsilons, double alpha,
                                               double theta, std::size_t depth, std::size_t cap,
                                               std::uint64_t replicateKey) {
    checkAscending(epsilons);
    BarrierSpec{epsilons.back(), alpha, theta}.validate();
    if (depth > env.horizon()) {
        throw std::invalid_argument("simulate: environment horizon shorter than depth");
    }
    if (cap == 0) {
        throw std::invalid_argument("simulate: cap must be positive");
    }

    const std::size_t classes = epsilons.size();
    const double epsMax = epsilons.back();
    std::vector<SimulationOutcome> outcomes(classes);
    for (auto& o : outcomes) {
        o.trajectory.assign(depth + 1, 0);
        o.trajectory[0] = 1;
    }

    std::vector<Particle> current{{0.0, -std::numeric_limits<double>::infinity(), mix64(replicateKey)}};
    std::vector<Particle> next;
    std::vector<double> displacements;
    std::vector<std::uint32_t> classOf;
    std::vector<std::uint64_t> aliveByClass(classes);
    std::vector<std::size_t> order;
    std::vector<std::uint64_t> priorities;
    std::vector<std::size_t> visited(classes);
    std::vector<std::uint8_t> keep;
    std::size_t lastGeneration = 0;

    for (std::size_t g = 1; g <= depth; ++g) {
        const ReproductionParams& params = env.generation(g);
        const double drift = kappa(params, theta) / theta;
        const double scale = alpha == 1.0 ? static_cast<double>(g) : std::pow(static_cast<double>(g), alpha);

        next.clear();
        for (const Particle& parent : current) {
            CounterRng rng(replicateKey, StreamPurpose::Branching, g, parent.id);
            displacements.clear();
            appendReproduction(params, rng, displacements);
            for (std::size_t j = 0; j < displacements.size(); ++j) {
                const double q = parent.q + displacements[j] + drift;
                const double req = std::max(parent.epsReq, q / scale);
                if (req <= epsMax) {
                    next.push_back({q, req, childId(parent.id, j, g)});
                }
            }
        }

        classOf.resize(next.size());
        std::fill(aliveByClass.begin(), aliveByClass.end(), 0);
        for (std::size_t i = 0; i < next.size(); ++i) {
            const auto it = std::lower_bound(epsilons.begin(), epsilons.end(), next[i].epsReq);
            classOf[i] = static_cast<std::uint32_t>(it - epsilons.begin());
            ++aliveByClass[classOf[i]];
        }
        std::uint64_t running = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            running += aliveByClass[k];
            outcomes[k].trajectory[g] = running;
        }

        if (next.size() > cap) {
            priorities.resize(next.size());
            order.resize(next.size());
            for (std::size_t i = 0; i < next.size(); ++i) {
                priorities[i] = priorityOf(next[i], g);
            }
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                return priorities[x] < priorities[y] || (priorities[x] == priorities[y] && x < y);
            });
            std::fill(visited.begin(), visited.end(), 0);
            keep.assign(next.size(), 0);
            std::size_t lowestDroppedClass = classes;
            for (std::size_t idx : order) {
                const std::size_t c = classOf[idx];
                std::size_t rank = 0;
                for (std::size_t j = 0; j <= c; ++j) {
                    rank += visited[j];
                }
                if (rank < cap) {
                    keep[idx] = 1;
                } else {
                    lowestDroppedClass = std::min(lowestDroppedClass, c);
                }
                ++visited[c];
            }
            for (std::size_t k = lowestDroppedClass; k < classes; ++k) {
                outcomes[k].capHit = true;
            }
            std::size_t w = 0;
            for (std::size_t i = 0; i < next.size(); ++i) {
                if (keep[i]) {
                    next[w] = next[i];
                    classOf[w] = classOf[i];
                    ++w;
                }
            }
            next.resize(w);
            classOf.resize(w);
        }

        current.swap(next);
        lastGeneration = g;
        if (current.empty()) {
            break;
        }
    }

    for (std::size_t k = 0; k < classes; ++k) {
        auto& o = outcomes[k];
        o.survived = o.trajectory[depth] > 0;
        o.finalPopulation.generation = lastGeneration;
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (classOf.size() == current.size() ? classOf[i] <= k : current[i].epsReq <= epsilons[k]) {
                o.finalPopulation.relativePositions.push_back(current[i].q);
            }
        }
    }
    return outcomes;
}

SimulationOutcome simulateToDepth(const EnvironmentRealization& env, const BarrierSpec& spec,
                                  std::size_t depth, std::size_t cap, std::uint64_t replicateKey) {
    const double eps[] = {spec.epsilon};
    return std::move(simulateCoupled(env, eps, spec.alpha, spec.theta, depth, cap, replicateKey).front());
}

void SurvivalEstimate::finalize() {
    pHat = replicates == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(replicates);
    stdError = replicates == 0 ? 0.0 : std::sqrt(pHat * (1.0 - pHat) / static_cast<double>(replicates));
}

std::uint64_t replicateKey(std::uint64_t branchingSeedBase, std::size_t replicate) {
    return streamKey(branchingSeedBase, StreamPurpose::Branching, replicate);
}

SurvivalEstimate estimateQuenchedSurvival(const EnvironmentRealization& env,
                                          const BarrierSpec& spec, std::size_t depth,
                                          std::size_t replicates, std::uint64_t branchingSeedBase,
                                          const EngineOptions& options) {
    if (replicates == 0) {
        throw std::invalid_argument("estimate_quenched_survival: replicates must be >= 1");
    }
    spec.validate();
    std::vector<std::uint8_t> survived(replicates, 0);
    std::vector<std::uint8_t> capped(replicates, 0);
    parallelFor(replicates, options.threads, [&](std::size_t r) {
        const SimulationOutcome o =
            simulateToDepth(env, spec, depth, options.cap, replicateKey(branchingSeedBase, r));
        survived[r] = o.survived ? 1 : 0;
        capped[r] = o.capHit ? 1 : 0;
    });
    SurvivalEstimate est;
    est.replicates = replicates;
    est.successes = static_cast<std::size_t>(std::count(survived.begin(), survived.end(), 1));
    est.capHits = static_cast<std::size_t>(std::count(capped.begin(), capped.end(), 1));
    est.depth = depth;
    est.epsilon = spec.epsilon;
    est.envSeed = env.seed;
    est.branchingSeedBase = branchingSeedBase;
    est.finalize();
    return est;
}

std::uint64_t annealedEnvironmentSeed(std::uint64_t seedBase, std::size_t e) {
    return streamKey(seedBase, StreamPurpose::Annealed, e, 0);
}

std::uint64_t annealedBranchingSeed(std::uint64_t seedBase, std::size_t e) {
    return streamKey(seedBase, StreamPurpose::Annealed, e, 1);
}

AnnealedEstimate estimateAnnealedSurvival(const EnvironmentLaw& law, const BarrierSpec& spec,
                                          std::size_t depth, std::size_t envReplicates,
                                          std::size_t branchingReplicates, std::uint64_t seedBase,
                                          const EngineOptions& options) {
    if (envReplicates == 0) {
        throw std::invalid_argument("estimate_annealed_survival: env replicates must be >= 1");
    }
    AnnealedEstimate out;
    RunningStats spread;
    for (std::size_t e = 0; e < envReplicates; ++e) {
        const EnvironmentRealization env =
            sampleEnvironment(law, depth, annealedEnvironmentSeed(seedBase, e));
        out.quenched.push_back(estimateQuenchedSurvival(env, spec, depth, branchingReplicates,
                                                        annealedBranchingSeed(seedBase, e), options));
        spread.push(out.quenched.back().pHat);
    }
    if (envReplicates == 1) {
        out.pooled = out.quenched.front();
    } else {
        SurvivalEstimate pooled;
        pooled.depth = depth;
        pooled.epsilon = spec.epsilon;
        pooled.envSeed = seedBase;
        pooled.branchingSeedBase = seedBase;
        for (const auto& q : out.quenched) {
            pooled.replicates += q.replicates;
            pooled.successes += q.successes;
            pooled.capHits += q.capHits;
        }
        pooled.finalize();
        out.pooled = pooled;
    }
    out.acrossEnvironmentStdDev = spread.stddev();
    const auto [lo, hi] = std::minmax_element(
        out.quenched.begin(), out.quenched.end(),
        [](const SurvivalEstimate& x, const SurvivalEstimate& y) { return x.pHat < y.pHat; });
    out.minQuenched = lo->pHat;
    out.maxQuenched = hi->pHat;
    return out;
}

SweepResult coupledEpsilonSweep(const EnvironmentRealization& env, std::span<const double> epsilons,
                                double alpha, double theta, std::size_t depth,
                                std::size_t replicates, std::uint64_t branchingSeedBase,
                                const EngineOptions& options) {
    checkAscending(epsilons);
    if (replicates == 0) {
        throw std::invalid_argument("coupled_epsilon_sweep: replicates must be >= 1");
    }
    const std::size_t classes = epsilons.size();
    SweepResult out;
    out.extinction.assign(replicates, std::vector<std::size_t>(classes, depth + 1));
    std::vector<std::vector<std::uint8_t>> capped(replicates, std::vector<std::uint8_t>(classes, 0));

    parallelFor(replicates, options.threads, [&](std::size_t r) {
        const auto outcomes = simulateCoupled(env, epsilons, alpha, theta, depth, options.cap,
                                              replicateKey(branchingSeedBase, r));
        for (std::size_t k = 0; k < classes; ++k) {
            const auto& traj = outcomes[k].trajectory;
            const auto it = std::find(traj.begin(), traj.end(), 0u);
            out.extinction[r][k] = it == traj.end() ? depth + 1 : static_cast<std::size_t>(it - traj.begin());
            capped[r][k] = outcomes[k].capHit ? 1 : 0;
        }
    });

    for (std::size_t k = 0; k < classes; ++k) {
        SurvivalEstimate est;
        est.replicates = replicates;
        est.depth = depth;
        est.epsilon = epsilons[k];
        est.envSeed = env.seed;
        est.branchingSeedBase = branchingSeedBase;
        for (std::size_t r = 0; r < replicates; ++r) {
            est.successes += out.extinction[r][k] > depth ? 1 : 0;
            est.capHits += capped[r][k];
        }
        est.finalize();
        out.estimates.push_back(est);
    }
    return out;
}

double DepthRule::z(double epsilon) const { return (c - 1.0) * varsigma * epsilon / (a - c * epsilon); }

std::size_t DepthRule::depth(double epsilon) const {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("depth rule: epsilon must be > 0");
    }
    const double zz = z(epsilon);
    if (!(zz > 0.0) || !std::isfinite(zz)) {
        throw std::invalid_argument("depth rule: z must be > 0 (need a > c*epsilon and c > 1)");
    }
    return static_cast<std::size_t>(std::floor((varsigma + zz) * std::pow(epsilon, -1.5)));
}

ScalingTable scalingExperiment(const EnvironmentLaw& law, double theta,
                               std::span<const double> epsilons, double gammaReference,
                               const ScalingOptions& options) {
    ScalingTable table;
    table.gammaReference = gammaReference;

    std::size_t horizon = 0;
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        ScalingRow row;
        row.epsilon = epsilons[i];
        try {
            row.depth = options.rule.depth(epsilons[i]);
        } catch (const std::invalid_argument& e) {
            row.skipped = true;
            row.flagged = true;
            row.note = e.what();
        }
        if (!row.skipped && row.depth > options.maxDepth) {
            row.skipped = true;
            row.flagged = true;
            row.note = "depth exceeds max depth";
        }
        if (!row.skipped) {
            horizon = std::max(horizon, row.depth);
        }
        table.rows.push_back(row);
    }

    const EnvironmentRealization env = sampleEnvironment(law, horizon, options.envSeed);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        ScalingRow& row = table.rows[i];
        if (row.skipped) {
            row.scaledLog = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const BarrierSpec spec{row.epsilon, 1.0, theta};
        row.estimate = estimateQuenchedSurvival(
            env, spec, row.depth, options.replicates,
            streamKey(options.branchingSeedBase, StreamPurpose::Scaling, i), options.engine);
        if (row.estimate.successes == 0) {
            row.scaledLog = -std::numeric_limits<double>::infinity();
            row.flagged = true;
            row.note = "all replicates died";
        } else {
            row.scaledLog = std::sqrt(row.epsilon) * std::log(row.estimate.pHat);
        }
    }
    return table;
}

}  // namespace brwre
