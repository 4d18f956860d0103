#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "brwre/bm_gamma.h"
#include "brwre/brw_engine.h"
#include "brwre/csv.h"
#include "brwre/env_model.h"

namespace brwre {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Validation failure; the message starts with the offending key path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TiltConfig {
    std::optional<std::pair<double, double>> bracket;
    double tolerance = 1e-10;
};

struct BarrierConfig {
    std::vector<double> epsilons{0.1};
    double alpha = 1.0;
    DepthRule rule;
};

struct EngineConfig {
    std::size_t depth = 100;
    std::size_t replicates = 1000;
    std::size_t cap = 10000;
    bool annealed = false;
    std::size_t envReplicates = 1;
    std::size_t maxDepth = 4000;
};

struct GammaConfig {
    TubeGrid grid;
    std::size_t outerReplicates = 200;
    std::vector<double> betas{0.0};
};

struct BoundConfig {
    double w = 1.2;
    std::size_t blocks = 8;
    std::size_t p1Replicates = 2000;
    std::size_t p2Replicates = 2000;
    std::size_t cap = 2000;
    double pzBase = 2.0;
    std::size_t directReplicates = 2000;
    std::size_t mOfASamples = 0;  // 0 means analytic
};

struct VerifyConfig {
    std::size_t environments = 100;
    std::size_t depth = 3;
    std::size_t functions = 20;
    double tolerance = 1e-12;
};

struct EstimationConfig {
    bool monteCarlo = false;
    std::size_t samples = 0;
};

struct OutputConfig {
    std::string directory = "results";
    std::string formats = "csv";
    double maxFlaggedFraction = 0.5;
};

struct ExperimentConfig {
    nlohmann::json effective;  // the document after overrides; hashed verbatim
    std::optional<EnvironmentLaw> law;
    TiltConfig tilt;
    BarrierConfig barrier;
    EngineConfig engine;
    GammaConfig gamma;
    BoundConfig bound;
    VerifyConfig verify;
    EstimationConfig estimation;
    OutputConfig output;
    std::uint64_t masterSeed = 0;
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> outputDirectory;
    std::optional<std::string> formats;
};

/// Parses and validates the whole document. Unknown keys, wrong types and
/// out-of-range values throw ConfigError naming the key path.
ExperimentConfig parseConfig(nlohmann::json document, const ConfigOverrides& overrides = {});
ExperimentConfig loadConfig(const std::string& path, const ConfigOverrides& overrides = {});

/// FNV-1a over the canonical (sorted-key, compact) dump.
std::uint64_t configHash(const nlohmann::json& document);
std::string hashHex(std::uint64_t hash);

/// Seeds handed to each module, all derived from the master seed.
struct SeedLedger {
    std::uint64_t master = 0;
    std::uint64_t environment = 0;
    std::uint64_t branching = 0;
    std::uint64_t annealed = 0;
    std::uint64_t scaling = 0;
    std::uint64_t gamma = 0;
    std::uint64_t auxiliary = 0;
    std::uint64_t verify = 0;
    std::uint64_t estimation = 0;

    static SeedLedger derive(std::uint64_t master);
    nlohmann::json toJson() const;
};

struct ResultRecord {
    std::string subcommand;
    std::uint64_t configHash = 0;
    Table table;
    std::vector<std::string> summary;
    std::size_t flaggedRows = 0;
    SeedLedger seeds;
    double wallClockSeconds = 0.0;
    unsigned threads = 1;
};

const std::vector<std::string>& subcommandNames();

/// Runs the named experiment. Throws ConfigError for a config that does not
/// fit the subcommand; per-row failures are flagged in the table instead.
ResultRecord runSubcommand(const std::string& name, const ExperimentConfig& config, unsigned threads);

/// Writes <name>.csv and/or <name>.json plus <name>.meta.json under the
/// configured directory; returns the paths written.
std::vector<std::string> writeRecord(const ResultRecord& record, const OutputConfig& output);

/// Full command-line entry point; returns the process exit status.
int runCli(int argc, char** argv);

}  // namespace brwre
