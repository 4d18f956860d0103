#include "brwre/experiment.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "brwre/bp_tools.h"
#include "brwre/cgf_calculus.h"
#include "brwre/parallel.h"
#include "brwre/rng.h"
#include "brwre/spine.h"

namespace brwre {

using nlohmann::json;

namespace {

// Tracks which keys of one object were read so leftovers can be rejected.
class Block {
public:
    Block(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            throw ConfigError(where() + ": expected an object");
        }
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    std::string keyPath(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& require(const std::string& key) {
        used_.insert(key);
        if (!node_.contains(key)) {
            throw ConfigError(keyPath(key) + ": required key is missing");
        }
        return node_.at(key);
    }

    double number(const std::string& key) {
        const json& v = require(key);
        if (!v.is_number()) {
            throw ConfigError(keyPath(key) + ": expected a number");
        }
        return v.get<double>();
    }

    double number(const std::string& key, double fallback) {
        return has(key) ? number(key) : (used_.insert(key), fallback);
    }

    std::uint64_t integer(const std::string& key) {
        const json& v = require(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 &&
                                        !v.is_number_unsigned())) {
            throw ConfigError(keyPath(key) + ": expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }

    std::size_t count(const std::string& key, std::size_t fallback, std::size_t minimum = 0) {
        const std::size_t v = has(key) ? static_cast<std::size_t>(integer(key)) : (used_.insert(key), fallback);
        if (v < minimum) {
            throw ConfigError(keyPath(key) + ": must be >= " + std::to_string(minimum));
        }
        return v;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (!has(key)) {
            used_.insert(key);
            return fallback;
        }
        const json& v = require(key);
        if (!v.is_string()) {
            throw ConfigError(keyPath(key) + ": expected a string");
        }
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key) {
        const json& v = require(key);
        if (!v.is_array() || v.empty()) {
            throw ConfigError(keyPath(key) + ": expected a nonempty array of numbers");
        }
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) {
                throw ConfigError(keyPath(key) + ": expected a nonempty array of numbers");
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    Block child(const std::string& key) { return Block(require(key), keyPath(key)); }

    void finish() const {
        for (const auto& item : node_.items()) {
            if (!used_.count(item.key())) {
                throw ConfigError(keyPath(item.key()) + ": unknown key");
            }
        }
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

template <class F>
auto rethrowAsConfig(const std::string& path, F&& build) {
    try {
        return build();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ReproductionParams parseParams(Block b) {
    const std::string family = b.text("family", "");
    if (family == "gaussian-count") {
        auto counts = b.numbers("count_probabilities");
        const double mean = b.number("displacement_mean");
        const double variance = b.number("displacement_variance");
        b.finish();
        return rethrowAsConfig(b.keyPath("family"), [&] {
            return ReproductionParams::gaussianCount(counts, mean, variance);
        });
    }
    if (family == "discrete-table") {
        const json& outcomes = b.require("outcomes");
        if (!outcomes.is_array() || outcomes.empty()) {
            throw ConfigError(b.keyPath("outcomes") + ": expected a nonempty array");
        }
        std::vector<TableOutcome> table;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            Block o(outcomes[i], b.keyPath("outcomes") + "[" + std::to_string(i) + "]");
            TableOutcome t;
            t.probability = o.number("probability");
            const json& d = o.require("displacements");
            if (!d.is_array()) {
                throw ConfigError(o.keyPath("displacements") + ": expected an array of numbers");
            }
            for (const auto& x : d) {
                if (!x.is_number()) {
                    throw ConfigError(o.keyPath("displacements") + ": expected an array of numbers");
                }
                t.displacements.push_back(x.get<double>());
            }
            o.finish();
            table.push_back(std::move(t));
        }
        b.finish();
        return rethrowAsConfig(b.keyPath("outcomes"),
                               [&] { return ReproductionParams::discreteTable(table); });
    }
    throw ConfigError(b.keyPath("family") + ": expected \"gaussian-count\" or \"discrete-table\"");
}

EnvironmentLaw parseEnvironment(Block b) {
    const std::string law = b.text("law", "degenerate");
    const double thetaBar = b.number("theta_bar", kUnboundedTheta);
    if (!(thetaBar > 0.0)) {
        throw ConfigError(b.keyPath("theta_bar") + ": must be > 0");
    }
    if (law == "degenerate") {
        ReproductionParams p = parseParams(b.child("params"));
        b.finish();
        return EnvironmentLaw::degenerate(std::move(p), thetaBar);
    }
    if (law == "mixture") {
        const json& comps = b.require("components");
        if (!comps.is_array() || comps.empty()) {
            throw ConfigError(b.keyPath("components") + ": expected a nonempty array");
        }
        std::vector<LawComponent> components;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            Block c(comps[i], b.keyPath("components") + "[" + std::to_string(i) + "]");
            LawComponent lc{c.number("weight"), parseParams(c.child("params"))};
            c.finish();
            components.push_back(std::move(lc));
        }
        b.finish();
        return rethrowAsConfig(b.keyPath("components"),
                               [&] { return EnvironmentLaw::mixture(components, thetaBar); });
    }
    if (law == "chi-square") {
        auto counts = b.numbers("count_probabilities");
        const double mean = b.number("displacement_mean");
        const double scale = b.number("variance_scale");
        const double dof = b.number("degrees_of_freedom");
        b.finish();
        return rethrowAsConfig(b.keyPath("law"), [&] {
            return EnvironmentLaw::gaussianChiSquare(counts, mean, scale, dof, thetaBar);
        });
    }
    throw ConfigError(b.keyPath("law") + ": expected \"degenerate\", \"mixture\" or \"chi-square\"");
}

void requirePositive(double v, const std::string& path) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(path + ": must be a finite value > 0");
    }
}

}  // namespace

ExperimentConfig parseConfig(json document, const ConfigOverrides& overrides) {
    if (!document.is_object()) {
        throw ConfigError("<root>: expected an object");
    }
    if (overrides.seed) {
        if (!document.contains("seeds") || !document["seeds"].is_object()) {
            throw ConfigError("seeds: required block is missing");
        }
        document["seeds"]["master"] = *overrides.seed;
    }
    if (overrides.outputDirectory || overrides.formats) {
        if (!document.contains("output")) {
            document["output"] = json::object();
        }
        if (overrides.outputDirectory) {
            document["output"]["directory"] = *overrides.outputDirectory;
        }
        if (overrides.formats) {
            document["output"]["formats"] = *overrides.formats;
        }
    }

    ExperimentConfig cfg;
    cfg.effective = document;
    Block root(cfg.effective, "");

    {
        Block seeds = root.child("seeds");
        cfg.masterSeed = seeds.integer("master");
        seeds.finish();
    }
    if (root.has("environment")) {
        cfg.law = parseEnvironment(root.child("environment"));
    }
    if (root.has("tilt")) {
        Block t = root.child("tilt");
        if (t.has("bracket")) {
            const auto br = t.numbers("bracket");
            if (br.size() != 2 || !(br[0] < br[1])) {
                throw ConfigError(t.keyPath("bracket") + ": expected [low, high] with low < high");
            }
            cfg.tilt.bracket = std::make_pair(br[0], br[1]);
        }
        cfg.tilt.tolerance = t.number("tolerance", cfg.tilt.tolerance);
        requirePositive(cfg.tilt.tolerance, t.keyPath("tolerance"));
        t.finish();
    }
    if (root.has("barrier")) {
        Block b = root.child("barrier");
        if (b.has("epsilon") && b.has("epsilons")) {
            throw ConfigError(b.keyPath("epsilon") + ": give either epsilon or epsilons, not both");
        }
        if (b.has("epsilon")) {
            cfg.barrier.epsilons = {b.number("epsilon")};
        } else if (b.has("epsilons")) {
            cfg.barrier.epsilons = b.numbers("epsilons");
        }
        cfg.barrier.alpha = b.number("alpha", 1.0);
        if (!(cfg.barrier.alpha > 0.0 && cfg.barrier.alpha <= 1.0)) {
            throw ConfigError(b.keyPath("alpha") + ": must lie in (0, 1]");
        }
        cfg.barrier.rule.varsigma = static_cast<double>(b.count("varsigma", 1, 1));
        cfg.barrier.rule.c = b.number("c", 2.0);
        if (!(cfg.barrier.rule.c > 1.0)) {
            throw ConfigError(b.keyPath("c") + ": must exceed 1");
        }
        cfg.barrier.rule.a = b.number("a", 2.0);
        b.finish();
    }
    if (root.has("engine")) {
        Block e = root.child("engine");
        cfg.engine.depth = e.count("depth", cfg.engine.depth);
        cfg.engine.replicates = e.count("replicates", cfg.engine.replicates, 1);
        cfg.engine.cap = e.count("cap", cfg.engine.cap, 1);
        const std::string mode = e.text("mode", "quenched");
        if (mode != "quenched" && mode != "annealed") {
            throw ConfigError(e.keyPath("mode") + ": expected \"quenched\" or \"annealed\"");
        }
        cfg.engine.annealed = mode == "annealed";
        cfg.engine.envReplicates = e.count("env_replicates", 1, 1);
        cfg.engine.maxDepth = e.count("max_depth", cfg.engine.maxDepth, 1);
        e.finish();
    }
    if (root.has("gamma")) {
        Block g = root.child("gamma");
        cfg.gamma.grid.a = g.number("a", cfg.gamma.grid.a);
        cfg.gamma.grid.points = g.count("points", cfg.gamma.grid.points);
        cfg.gamma.grid.dt = g.number("dt", cfg.gamma.grid.dt);
        cfg.gamma.grid.horizon = g.number("horizon", cfg.gamma.grid.horizon);
        cfg.gamma.outerReplicates = g.count("outer_replicates", cfg.gamma.outerReplicates, 2);
        if (g.has("betas")) {
            cfg.gamma.betas = g.numbers("betas");
        }
        for (double beta : cfg.gamma.betas) {
            if (!(beta >= 0.0)) {
                throw ConfigError(g.keyPath("betas") + ": values must be >= 0");
            }
        }
        rethrowAsConfig(g.keyPath("grid"), [&] {
            cfg.gamma.grid.validate();
            return 0;
        });
        g.finish();
    }
    if (root.has("bound")) {
        Block b = root.child("bound");
        cfg.bound.w = b.number("w", cfg.bound.w);
        cfg.bound.blocks = b.count("blocks", cfg.bound.blocks, 1);
        cfg.bound.p1Replicates = b.count("p1_replicates", cfg.bound.p1Replicates, 1);
        cfg.bound.p2Replicates = b.count("p2_replicates", cfg.bound.p2Replicates, 1);
        cfg.bound.cap = b.count("cap", cfg.bound.cap, 1);
        cfg.bound.pzBase = b.number("paley_zygmund_b", cfg.bound.pzBase);
        if (!(cfg.bound.pzBase > 1.0)) {
            throw ConfigError(b.keyPath("paley_zygmund_b") + ": must exceed 1");
        }
        cfg.bound.directReplicates = b.count("direct_replicates", cfg.bound.directReplicates, 1);
        cfg.bound.mOfASamples = b.count("m_of_a_samples", 0);
        b.finish();
    }
    if (root.has("verify")) {
        Block v = root.child("verify");
        cfg.verify.environments = v.count("environments", cfg.verify.environments, 1);
        cfg.verify.depth = v.count("depth", cfg.verify.depth, 1);
        if (cfg.verify.depth > 3) {
            throw ConfigError(v.keyPath("depth") + ": enumeration supports depth <= 3");
        }
        cfg.verify.functions = v.count("functions", cfg.verify.functions, 1);
        cfg.verify.tolerance = v.number("tolerance", cfg.verify.tolerance);
        requirePositive(cfg.verify.tolerance, v.keyPath("tolerance"));
        v.finish();
    }
    if (root.has("estimation")) {
        Block e = root.child("estimation");
        const std::string mode = e.text("mode", "analytic");
        if (mode != "analytic" && mode != "monte-carlo") {
            throw ConfigError(e.keyPath("mode") + ": expected \"analytic\" or \"monte-carlo\"");
        }
        cfg.estimation.monteCarlo = mode == "monte-carlo";
        cfg.estimation.samples = e.count("samples", 0);
        if (cfg.estimation.monteCarlo && cfg.estimation.samples < 2) {
            throw ConfigError(e.keyPath("samples") + ": monte-carlo mode needs samples >= 2");
        }
        e.finish();
    }
    if (root.has("output")) {
        Block o = root.child("output");
        cfg.output.directory = o.text("directory", cfg.output.directory);
        cfg.output.formats = o.text("formats", cfg.output.formats);
        if (cfg.output.formats != "csv" && cfg.output.formats != "json" && cfg.output.formats != "both") {
            throw ConfigError(o.keyPath("formats") + ": expected csv, json or both");
        }
        cfg.output.maxFlaggedFraction = o.number("max_flagged_fraction", cfg.output.maxFlaggedFraction);
        if (!(cfg.output.maxFlaggedFraction >= 0.0 && cfg.output.maxFlaggedFraction <= 1.0)) {
            throw ConfigError(o.keyPath("max_flagged_fraction") + ": must lie in [0, 1]");
        }
        o.finish();
    }
    root.finish();
    return cfg;
}

ExperimentConfig loadConfig(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path + ": cannot open config file");
    }
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parseConfig(std::move(document), overrides);
}

std::uint64_t configHash(const json& document) {
    json hashed = document;
    if (hashed.is_object()) {
        hashed.erase("output");
    }
    const std::string canonical = hashed.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hashHex(std::uint64_t hash) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << hash;
    return s.str();
}

SeedLedger SeedLedger::derive(std::uint64_t master) {
    SeedLedger s;
    s.master = master;
    s.environment = streamKey(master, StreamPurpose::Environment);
    s.branching = streamKey(master, StreamPurpose::Branching);
    s.annealed = streamKey(master, StreamPurpose::Annealed);
    s.scaling = streamKey(master, StreamPurpose::Scaling);
    s.gamma = streamKey(master, StreamPurpose::GammaPath);
    s.auxiliary = streamKey(master, StreamPurpose::Auxiliary);
    s.verify = streamKey(master, StreamPurpose::TestFunction);
    s.estimation = streamKey(master, StreamPurpose::LawMonteCarlo);
    return s;
}

json SeedLedger::toJson() const {
    return json{
        {"master", master},
        {"rule",
         "module seed = streamKey(master, purpose); each draw uses CounterRng(streamKey(module seed, "
         "purpose, i0, i1, i2)) with counter-based splitmix64 output"},
        {"environment", {{"seed", environment}, {"draw", "generation i: (seed, Environment, i)"}}},
        {"branching",
         {{"seed", branching},
          {"draw", "replicate r key = streamKey(seed, Branching, r); particle draws (key, Branching, "
                   "generation, genealogical id)"}}},
        {"annealed",
         {{"seed", annealed},
          {"draw", "env e: environment seed streamKey(seed, Annealed, e, 0), branching base "
                   "streamKey(seed, Annealed, e, 1)"}}},
        {"scaling", {{"seed", scaling}, {"draw", "row k branching base streamKey(seed, Scaling, k)"}}},
        {"gamma", {{"seed", gamma}, {"draw", "W path r: (seed, GammaPath, r)"}}},
        {"auxiliary",
         {{"seed", auxiliary},
          {"draw", "block l: p1 base streamKey(seed, Auxiliary, l, 1), p2 streamKey(seed, Auxiliary, l, 2)"}}},
        {"verify",
         {{"seed", verify},
          {"draw", "environment e: streamKey(seed, Environment, e); function k: (seed, TestFunction, e, k)"}}},
        {"estimation", {{"seed", estimation}, {"draw", "environment sample i: (seed, LawMonteCarlo, i)"}}},
    };
}

const std::vector<std::string>& subcommandNames() {
    static const std::vector<std::string> names{"solve-tilt", "constants", "survival", "sweep",
                                                "scaling",    "verify-mto", "bound",  "gamma"};
    return names;
}

namespace {

const EnvironmentLaw& requireLaw(const ExperimentConfig& cfg) {
    if (!cfg.law) {
        throw ConfigError("environment: required block is missing");
    }
    return *cfg.law;
}

TiltSolution tiltFor(const ExperimentConfig& cfg) {
    const EnvironmentLaw& law = requireLaw(cfg);
    return cfg.tilt.bracket ? solveTilt(law, *cfg.tilt.bracket, cfg.tilt.tolerance)
                            : solveTilt(law, cfg.tilt.tolerance);
}

EstimationMode estimationFor(const ExperimentConfig& cfg, const SeedLedger& seeds) {
    return cfg.estimation.monteCarlo ? EstimationMode::monteCarlo(cfg.estimation.samples, seeds.estimation)
                                     : EstimationMode::analytic();
}

struct ConstantsBundle {
    TiltSolution tilt;
    ModelConstants constants;
    GammaEstimate gammaHat;
};

ConstantsBundle constantsFor(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    ConstantsBundle out;
    out.tilt = tiltFor(cfg);
    const EnvironmentLaw& law = requireLaw(cfg);
    const EnvironmentMoments moments = environmentMoments(law, out.tilt, estimationFor(cfg, seeds));
    if (!(moments.sigmaStar2.value > 0.0)) {
        throw ConfigError("environment: invalid law, sigma_*^2 must be > 0");
    }
    const double beta = moments.sigma2.value / moments.sigmaStar2.value;
    out.gammaHat = estimateGammaHat(beta, cfg.gamma.grid, cfg.gamma.outerReplicates, seeds.gamma, threads);
    out.constants = modelConstants(law, out.tilt, out.gammaHat.value, estimationFor(cfg, seeds));
    return out;
}

void checkEpsilons(const ExperimentConfig& cfg, bool strictlyIncreasing) {
    const auto& eps = cfg.barrier.epsilons;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        if (!std::isfinite(eps[k])) {
            throw ConfigError("barrier.epsilons: values must be finite");
        }
        if (strictlyIncreasing && k > 0 && !(eps[k] > eps[k - 1])) {
            throw ConfigError("barrier.epsilons: must be strictly increasing");
        }
    }
}

ResultRecord runSolveTilt(const ExperimentConfig& cfg) {
    const TiltSolution t = tiltFor(cfg);
    ResultRecord r;
    r.table.columns = {"theta", "kappa_at_theta", "residual", "bracket_low", "bracket_high", "iterations"};
    r.table.addRow({t.theta, t.kappaAtTheta, t.residual, t.bracket.first, t.bracket.second,
                    static_cast<std::int64_t>(t.iterations)});
    r.summary.push_back("theta = " + formatDouble(t.theta) + " (residual " + formatDouble(t.residual) + ")");
    return r;
}

ResultRecord runConstants(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    const ConstantsBundle b = constantsFor(cfg, seeds, threads);
    const ModelConstants& c = b.constants;
    ResultRecord r;
    r.table.columns = {"theta",      "kappa_at_theta", "sigma2",      "sigma_star2",
                       "beta",       "gamma_hat",      "gamma_hat_std_error", "gamma_sigma",
                       "gamma",      "speed",          "gamma_degenerate_form", "unreliable"};
    const double degenerate = -std::sqrt(std::numbers::pi * std::numbers::pi * c.sigmaStar2 / (2.0 * b.tilt.theta));
    r.table.addRow({b.tilt.theta, b.tilt.kappaAtTheta, c.sigma2, c.sigmaStar2, c.beta(), c.gammaHat,
                    b.gammaHat.stdError, c.gammaSigma, c.gamma, c.speed, degenerate, b.gammaHat.unreliable});
    r.flaggedRows = b.gammaHat.unreliable ? 1 : 0;
    r.summary.push_back("gamma = " + formatDouble(c.gamma) + ", gamma_sigma = " + formatDouble(c.gammaSigma));
    return r;
}

ResultRecord runSurvival(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    checkEpsilons(cfg, false);
    const EnvironmentLaw& law = requireLaw(cfg);
    const TiltSolution tilt = tiltFor(cfg);
    const EngineOptions engine{cfg.engine.cap, threads};
    ResultRecord r;
    r.table.columns = {"kind",       "env_index", "epsilon",  "depth",    "replicates",
                       "successes",  "p_hat",     "std_error", "cap_hits", "env_seed",
                       "branching_seed_base"};
    auto add = [&r](const std::string& kind, std::int64_t env, const SurvivalEstimate& e) {
        r.table.addRow({kind, env, e.epsilon, static_cast<std::uint64_t>(e.depth),
                        static_cast<std::uint64_t>(e.replicates), static_cast<std::uint64_t>(e.successes),
                        e.pHat, e.stdError, static_cast<std::uint64_t>(e.capHits), e.envSeed,
                        e.branchingSeedBase});
    };
    for (double eps : cfg.barrier.epsilons) {
        const BarrierSpec spec{eps, cfg.barrier.alpha, tilt.theta};
        if (cfg.engine.annealed) {
            const AnnealedEstimate a =
                estimateAnnealedSurvival(law, spec, cfg.engine.depth, cfg.engine.envReplicates,
                                         cfg.engine.replicates, seeds.annealed, engine);
            for (std::size_t e = 0; e < a.quenched.size(); ++e) {
                add("quenched", static_cast<std::int64_t>(e), a.quenched[e]);
            }
            add("pooled", -1, a.pooled);
            r.summary.push_back("epsilon " + formatDouble(eps) + ": annealed p_hat = " +
                                formatDouble(a.pooled.pHat) + ", across-environment sd = " +
                                formatDouble(a.acrossEnvironmentStdDev));
        } else {
            const EnvironmentRealization env = sampleEnvironment(law, cfg.engine.depth, seeds.environment);
            const SurvivalEstimate e =
                estimateQuenchedSurvival(env, spec, cfg.engine.depth, cfg.engine.replicates, seeds.branching, engine);
            add("quenched", 0, e);
            r.summary.push_back("epsilon " + formatDouble(eps) + ": p_hat = " + formatDouble(e.pHat) +
                                " +- " + formatDouble(e.stdError));
        }
    }
    return r;
}

ResultRecord runSweep(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    checkEpsilons(cfg, true);
    const EnvironmentLaw& law = requireLaw(cfg);
    const TiltSolution tilt = tiltFor(cfg);
    const EnvironmentRealization env = sampleEnvironment(law, cfg.engine.depth, seeds.environment);
    const SweepResult s = coupledEpsilonSweep(env, cfg.barrier.epsilons, cfg.barrier.alpha, tilt.theta,
                                              cfg.engine.depth, cfg.engine.replicates, seeds.branching,
                                              {cfg.engine.cap, threads});
    ResultRecord r;
    r.table.columns = {"epsilon", "depth", "replicates", "successes", "p_hat", "std_error", "cap_hits"};
    bool monotone = true;
    for (std::size_t k = 0; k < s.estimates.size(); ++k) {
        const auto& e = s.estimates[k];
        r.table.addRow({e.epsilon, static_cast<std::uint64_t>(e.depth), static_cast<std::uint64_t>(e.replicates),
                        static_cast<std::uint64_t>(e.successes), e.pHat, e.stdError,
                        static_cast<std::uint64_t>(e.capHits)});
        if (k > 0 && e.successes < s.estimates[k - 1].successes) {
            monotone = false;
        }
    }
    r.summary.push_back(monotone ? "survival counts nondecreasing in epsilon"
                                 : "survival counts NOT monotone in epsilon");
    r.flaggedRows = monotone ? 0 : s.estimates.size();
    return r;
}

ResultRecord runScaling(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    checkEpsilons(cfg, false);
    const EnvironmentLaw& law = requireLaw(cfg);
    const ConstantsBundle b = constantsFor(cfg, seeds, threads);
    ScalingOptions options;
    options.rule = cfg.barrier.rule;
    options.maxDepth = cfg.engine.maxDepth;
    options.replicates = cfg.engine.replicates;
    options.envSeed = seeds.environment;
    options.branchingSeedBase = seeds.scaling;
    options.engine = {cfg.engine.cap, threads};
    const ScalingTable t = scalingExperiment(law, b.tilt.theta, cfg.barrier.epsilons, b.constants.gamma, options);
    ResultRecord r;
    r.table.columns = {"epsilon", "depth", "replicates", "successes", "p_hat", "std_error",
                       "cap_hits", "scaled_log", "gamma_reference", "gamma_degenerate_form", "flagged",
                       "skipped", "note"};
    const double degenerate =
        -std::sqrt(std::numbers::pi * std::numbers::pi * b.constants.sigmaStar2 / (2.0 * b.tilt.theta));
    for (const auto& row : t.rows) {
        r.table.addRow({row.epsilon, static_cast<std::uint64_t>(row.depth),
                        static_cast<std::uint64_t>(row.estimate.replicates),
                        static_cast<std::uint64_t>(row.estimate.successes), row.estimate.pHat,
                        row.estimate.stdError, static_cast<std::uint64_t>(row.estimate.capHits),
                        row.scaledLog, t.gammaReference, degenerate, row.flagged, row.skipped, row.note});
        r.flaggedRows += row.flagged ? 1 : 0;
    }
    r.summary.push_back("gamma reference = " + formatDouble(t.gammaReference) + " (sigma^2 = 0 closed form " +
                        formatDouble(degenerate) + ")");
    return r;
}

// Bounded test functions on paths: products of shifted sines or half-space indicators.
PathFunction randomTestFunction(CounterRng& rng, std::size_t depth) {
    std::vector<double> a(depth);
    std::vector<double> c(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        a[i] = 4.0 * rng.uniform() - 2.0;
        c[i] = 6.0 * rng.uniform();
    }
    const double level = 2.0 * rng.uniform() - 1.0;
    if (rng.uniform() < 0.5) {
        return [a, c](std::span<const double> x) {
            double v = 1.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                v *= 0.5 + 0.5 * std::sin(a[i] * x[i] + c[i]);
            }
            return v;
        };
    }
    return [a, level](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += a[i] * x[i];
        }
        return s <= level ? 1.0 : 0.0;
    };
}

ResultRecord runVerifyMto(const ExperimentConfig& cfg, const SeedLedger& seeds) {
    const EnvironmentLaw& law = requireLaw(cfg);
    if (!law.allDiscrete()) {
        throw ConfigError("environment: verify-mto needs a law made of discrete-table params");
    }
    const TiltSolution tilt = tiltFor(cfg);
    const std::size_t n = cfg.verify.depth;
    ResultRecord r;
    r.table.columns = {"env_index", "function_index", "depth", "lhs", "rhs", "abs_diff", "mass_rel_error"};
    double worst = 0.0;
    double worstMass = 0.0;
    for (std::size_t e = 0; e < cfg.verify.environments; ++e) {
        const EnvironmentRealization env =
            sampleEnvironment(law, n, streamKey(seeds.verify, StreamPurpose::Environment, e));
        for (std::size_t k = 0; k < cfg.verify.functions; ++k) {
            CounterRng rng(seeds.verify, StreamPurpose::TestFunction, e, k);
            const PathFunction f = randomTestFunction(rng, n);
            std::vector<double> thresholds(n);
            for (double& t : thresholds) {
                const double u = rng.uniform();
                t = u < 0.25 ? std::numeric_limits<double>::infinity() : std::floor(1.0 + 3.0 * u);
            }
            const ManyToOneCheck m = verifyManyToOne(env, tilt.theta, n, f, thresholds);
            const double massErr = std::abs(m.weightedMass - m.expK) / m.expK;
            worst = std::max(worst, m.absDiff);
            worstMass = std::max(worstMass, massErr);
            r.table.addRow({static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(k),
                            static_cast<std::uint64_t>(n), m.lhs, m.rhs, m.absDiff, massErr});
            if (m.absDiff > cfg.verify.tolerance || massErr > cfg.verify.tolerance) {
                ++r.flaggedRows;
            }
        }
    }
    const std::string tol = formatDouble(cfg.verify.tolerance);
    if (worst <= cfg.verify.tolerance) {
        r.summary.push_back("max |lhs−rhs| ≤ " + tol + " (observed " + formatDouble(worst) + ")");
    } else {
        r.summary.push_back("max |lhs−rhs| = " + formatDouble(worst) + " exceeds " + tol);
    }
    r.summary.push_back("max relative error of E[sum e^{-theta V}] against e^{K_n}: " + formatDouble(worstMass));
    return r;
}

ResultRecord runBound(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    const EnvironmentLaw& law = requireLaw(cfg);
    const TiltSolution tilt = tiltFor(cfg);
    AuxiliaryParams p;
    p.epsilon = cfg.barrier.epsilons.front();
    p.c = cfg.barrier.rule.c;
    p.a = cfg.barrier.rule.a;
    p.varsigma = static_cast<std::size_t>(cfg.barrier.rule.varsigma);
    p.w = cfg.bound.w;
    p.blocks = cfg.bound.blocks;
    p.p1Replicates = cfg.bound.p1Replicates;
    p.p2Replicates = cfg.bound.p2Replicates;
    p.cap = cfg.bound.cap;
    p.seed = seeds.auxiliary;
    p.threads = threads;
    if (cfg.bound.mOfASamples > 0) {
        p.mOfAMode = EstimationMode::monteCarlo(cfg.bound.mOfASamples, seeds.estimation);
    } else if (!law.isFiniteMixture()) {
        throw ConfigError("bound.m_of_a_samples: required (> 0) for a chi-square law");
    }
    const AuxiliaryBpResult res = rethrowAsConfig("bound", [&] { return buildAuxiliaryBp(law, tilt, seeds.environment, p); });

    const EnvironmentRealization env = sampleEnvironment(law, res.n, seeds.environment);
    const BarrierSpec direct{p.c * p.epsilon, 1.0, tilt.theta};
    const SurvivalEstimate d = estimateQuenchedSurvival(env, direct, res.n, cfg.bound.directReplicates,
                                                        seeds.branching, {cfg.engine.cap, threads});

    ResultRecord r;
    r.table.columns = {"kind", "l", "a_boundary", "b_boundary", "p1", "p1_std_error", "p2",
                       "p2_std_error", "log_m", "m_bar", "f_prime", "value"};
    std::vector<GenerationMoments> g;
    for (const auto& b : res.blocks) {
        r.table.addRow({std::string("block"), static_cast<std::uint64_t>(b.l),
                        static_cast<std::uint64_t>(b.aBoundary), static_cast<std::uint64_t>(b.bBoundary),
                        b.p1.value, b.p1.stdError, b.p2.value, b.p2.stdError, b.logM, b.mBar, b.fPrime,
                        b.fPrime});
        if (b.fPrime > 0.0) {
            g.push_back({b.fPrime, b.fPrime * (b.ceilMBar - 1.0)});
        }
    }
    const double pz = g.size() == res.blocks.size() ? paleyZygmundBound(g, cfg.bound.pzBase) : 0.0;
    auto scalar = [&r](const std::string& kind, double v) {
        r.table.addRow({kind, std::string(), std::string(), std::string(), std::string(), std::string(),
                        std::string(), std::string(), std::string(), std::string(), std::string(), v});
    };
    scalar("n", static_cast<double>(res.n));
    scalar("z", res.z);
    scalar("m_of_a", res.mOfA);
    scalar("partial_sum", res.partialSum);
    scalar("tail", res.tail);
    scalar("lower_bound", res.lowerBound);
    scalar("agresti", res.agresti);
    scalar("paley_zygmund", pz);
    scalar("direct_survival", d.pHat);
    scalar("direct_std_error", d.stdError);
    if (res.divergent) {
        ++r.flaggedRows;
    }
    r.summary.push_back("lower bound for survival at slope c*epsilon = " + formatDouble(res.lowerBound) +
                        (res.divergent ? " (series not summable; block process not supercritical)" : ""));
    r.summary.push_back("direct depth-" + std::to_string(res.n) + " survival at slope c*epsilon = " +
                        formatDouble(d.pHat) + " +- " + formatDouble(d.stdError));
    return r;
}

ResultRecord runGamma(const ExperimentConfig& cfg, const SeedLedger& seeds, unsigned threads) {
    ResultRecord r;
    r.table.columns = {"beta", "gamma_hat", "std_error", "replicates", "excluded", "unreliable",
                       "a", "points", "dt", "horizon"};
    for (double beta : cfg.gamma.betas) {
        const GammaEstimate g = estimateGammaHat(beta, cfg.gamma.grid, cfg.gamma.outerReplicates, seeds.gamma, threads);
        r.table.addRow({beta, g.value, g.stdError, static_cast<std::uint64_t>(g.replicates),
                        static_cast<std::uint64_t>(g.excluded), g.unreliable, g.grid.a,
                        static_cast<std::uint64_t>(g.grid.points), g.grid.dt, g.grid.horizon});
        r.flaggedRows += g.unreliable ? 1 : 0;
        r.summary.push_back("gamma_hat(" + formatDouble(beta) + ") = " + formatDouble(g.value) + " +- " +
                            formatDouble(g.stdError));
    }
    return r;
}

json tableToJson(const Table& table) {
    json rows = json::array();
    for (const auto& row : table.rows) {
        json obj = json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            const Cell& c = row[i];
            if (const auto* d = std::get_if<double>(&c)) {
                // JSON has no infinities; keep the CSV spelling
                obj[table.columns[i]] = std::isfinite(*d) ? json(*d) : json(formatDouble(*d));
            } else if (const auto* s = std::get_if<std::string>(&c)) {
                obj[table.columns[i]] = *s;
            } else if (const auto* a = std::get_if<std::int64_t>(&c)) {
                obj[table.columns[i]] = *a;
            } else if (const auto* u = std::get_if<std::uint64_t>(&c)) {
                obj[table.columns[i]] = *u;
            } else {
                obj[table.columns[i]] = std::get<bool>(c);
            }
        }
        rows.push_back(std::move(obj));
    }
    return rows;
}

}  // namespace

ResultRecord runSubcommand(const std::string& name, const ExperimentConfig& config, unsigned threads) {
    const auto start = std::chrono::steady_clock::now();
    const SeedLedger seeds = SeedLedger::derive(config.masterSeed);
    threads = std::max(1u, threads);
    ResultRecord r;
    if (name == "solve-tilt") {
        r = runSolveTilt(config);
    } else if (name == "constants") {
        r = runConstants(config, seeds, threads);
    } else if (name == "survival") {
        r = runSurvival(config, seeds, threads);
    } else if (name == "sweep") {
        r = runSweep(config, seeds, threads);
    } else if (name == "scaling") {
        r = runScaling(config, seeds, threads);
    } else if (name == "verify-mto") {
        r = runVerifyMto(config, seeds);
    } else if (name == "bound") {
        r = runBound(config, seeds, threads);
    } else if (name == "gamma") {
        r = runGamma(config, seeds, threads);
    } else {
        throw ConfigError("unknown subcommand " + name);
    }
    r.subcommand = name;
    r.configHash = configHash(config.effective);
    r.seeds = seeds;
    r.threads = threads;
    r.wallClockSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

std::vector<std::string> writeRecord(const ResultRecord& record, const OutputConfig& output) {
    namespace fs = std::filesystem;
    const fs::path dir(output.directory);
    fs::create_directories(dir);
    std::vector<std::string> written;
    const bool csv = output.formats == "csv" || output.formats == "both";
    const bool js = output.formats == "json" || output.formats == "both";
    if (csv) {
        const fs::path p = dir / (record.subcommand + ".csv");
        std::ofstream out(p, std::ios::binary);
        writeCsv(out, record.table);
        written.push_back(p.string());
    }
    if (js) {
        const fs::path p = dir / (record.subcommand + ".json");
        std::ofstream out(p, std::ios::binary);
        out << json{{"subcommand", record.subcommand},
                    {"config_hash", hashHex(record.configHash)},
                    {"columns", record.table.columns},
                    {"rows", tableToJson(record.table)}}
                   .dump(2)
            << "\n";
        written.push_back(p.string());
    }
    const fs::path meta = dir / (record.subcommand + ".meta.json");
    std::ofstream out(meta, std::ios::binary);
    out << json{{"subcommand", record.subcommand},
                {"config_hash", hashHex(record.configHash)},
                {"toolkit_version", kToolkitVersion},
                {"seed_ledger", record.seeds.toJson()},
                {"rows", record.table.rows.size()},
                {"flagged_rows", record.flaggedRows},
                {"summary", record.summary},
                {"threads", record.threads},
                {"wall_clock_seconds", record.wallClockSeconds}}
               .dump(2)
        << "\n";
    written.push_back(meta.string());
    return written;
}

int runCli(int argc, char** argv) {
    CLI::App app{"Barrier-killed branching random walks in random environment: simulation and checks"};
    app.require_subcommand(1);

    std::string configPath;
    std::string recordPath;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
    unsigned threads = 1;

    auto addCommon = [&](CLI::App* sub) {
        sub->add_option("--config", configPath, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "override seeds.master");
        sub->add_option("--out", out, "override output.directory");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--format", format, "csv, json or both")->check(CLI::IsMember({"csv", "json", "both"}));
    };
    const std::vector<std::pair<std::string, std::string>> descriptions{
        {"solve-tilt", "solve kappa(theta) = theta kappa'(theta)"},
        {"constants", "sigma^2, sigma_*^2, gamma-hat, gamma_sigma, gamma"},
        {"survival", "quenched or annealed survival estimates"},
        {"sweep", "coupled survival over an increasing epsilon list"},
        {"scaling", "sqrt(eps) log p-hat against the gamma reference"},
        {"verify-mto", "exact many-to-one checks on sampled discrete environments"},
        {"bound", "auxiliary block process lower bound"},
        {"gamma", "Brownian tube constant gamma-hat(beta)"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, text] : descriptions) {
        CLI::App* sub = app.add_subcommand(name, text);
        addCommon(sub);
        subs.push_back(sub);
    }
    CLI::App* verifyRecord = app.add_subcommand("verify-record", "recompute the config hash of a result record");
    addCommon(verifyRecord);
    verifyRecord->add_option("--record", recordPath, "path to a .meta.json or .json record")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    ConfigOverrides overrides{seed, out, format};
    ExperimentConfig cfg;
    try {
        cfg = loadConfig(configPath, overrides);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    if (verifyRecord->parsed()) {
        std::ifstream in(recordPath);
        if (!in) {
            std::cerr << "config error: cannot open record " << recordPath << "\n";
            return 1;
        }
        json rec;
        try {
            rec = json::parse(in);
        } catch (const std::exception& e) {
            std::cerr << "config error: " << recordPath << ": " << e.what() << "\n";
            return 1;
        }
        const std::string expected = hashHex(configHash(cfg.effective));
        const std::string stored = rec.value("config_hash", std::string());
        if (stored == expected) {
            std::cout << "config hash " << expected << " matches " << recordPath << "\n";
            return 0;
        }
        std::cout << "config hash mismatch: record has " << stored << ", config gives " << expected << "\n";
        return 2;
    }

    std::string name;
    for (CLI::App* sub : subs) {
        if (sub->parsed()) {
            name = sub->get_name();
        }
    }
    ResultRecord record;
    try {
        record = runSubcommand(name, cfg, threads);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    for (const auto& line : record.summary) {
        std::cout << line << "\n";
    }
    for (const auto& path : writeRecord(record, cfg.output)) {
        std::cout << "wrote " << path << "\n";
    }
    const double total = static_cast<double>(std::max<std::size_t>(record.table.rows.size(), 1));
    if (static_cast<double>(record.flaggedRows) / total > cfg.output.maxFlaggedFraction) {
        std::cerr << record.flaggedRows << " of " << record.table.rows.size()
                  << " rows flagged, above output.max_flagged_fraction\n";
        return 2;
    }
    return 0;
}

}  // namespace brwre
