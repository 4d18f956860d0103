#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "brwre/csv.h"
#include "brwre/experiment.h"

using namespace brwre;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json degenerateDoc() {
    return json::parse(R"({
      "environment": {"law": "degenerate", "params": {"family": "gaussian-count",
        "count_probabilities": [0, 0, 1], "displacement_mean": 0, "displacement_variance": 1}},
      "barrier": {"epsilons": [0.3]},
      "engine": {"depth": 20, "replicates": 50, "cap": 500},
      "seeds": {"master": 5}
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("brwre_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Run {
    int status;
    std::string output;
};

Run cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli.log";
    const std::string cmd = std::string(BRWRE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(log)};
}

void writeJson(const fs::path& p, const json& doc) { std::ofstream(p) << doc.dump(2); }

std::string configPath(const std::string& name) { return std::string(BRWRE_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST_CASE("csv formatting") {
    CHECK(formatDouble(0.5) == "0.5");
    CHECK(formatDouble(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(formatDouble(std::nan("")) == "nan");
    CHECK(csvEscape("plain") == "plain");
    CHECK(csvEscape("a,b") == "\"a,b\"");
    CHECK(csvEscape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    Table t;
    t.columns = {"x", "name"};
    t.addRow({1.25, std::string("a,b")});
    t.addRow({std::int64_t{-3}, true});
    std::ostringstream out;
    writeCsv(out, t);
    CHECK(out.str() == "x,name\r\n1.25,\"a,b\"\r\n-3,true\r\n");
    CHECK_THROWS(t.addRow({1.0}));
}

TEST_CASE("config parsing reads every block") {
    const auto cfg = parseConfig(degenerateDoc());
    CHECK(cfg.masterSeed == 5);
    REQUIRE(cfg.law.has_value());
    CHECK(cfg.law->isDegenerate());
    CHECK(cfg.engine.depth == 20);
    CHECK(cfg.barrier.epsilons == std::vector<double>{0.3});
    CHECK(cfg.output.formats == "csv");
}

TEST_CASE("unknown keys are rejected with their path") {
    auto doc = degenerateDoc();
    doc["engine"]["replicatez"] = 4;
    try {
        parseConfig(doc);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("engine.replicatez", 0) == 0);
    }
    doc = degenerateDoc();
    doc["extra"] = json::object();
    CHECK_THROWS_AS(parseConfig(doc), ConfigError);
}

TEST_CASE("type and range errors name the key") {
    auto doc = degenerateDoc();
    doc["engine"]["depth"] = "ten";
    CHECK_THROWS_WITH_AS(parseConfig(doc), doctest::Contains("engine.depth"), ConfigError);
    doc = degenerateDoc();
    doc["environment"]["params"]["displacement_variance"] = -1;
    CHECK_THROWS_WITH_AS(parseConfig(doc), doctest::Contains("environment.params"), ConfigError);
    doc = degenerateDoc();
    doc.erase("seeds");
    CHECK_THROWS_WITH_AS(parseConfig(doc), doctest::Contains("seeds"), ConfigError);
    doc = degenerateDoc();
    doc["gamma"] = {{"points", 100}};
    CHECK_THROWS_WITH_AS(parseConfig(doc), doctest::Contains("gamma"), ConfigError);
}

TEST_CASE("hash ignores the output block but not the seed") {
    const auto base = parseConfig(degenerateDoc());
    ConfigOverrides out;
    out.outputDirectory = "elsewhere";
    const auto moved = parseConfig(degenerateDoc(), out);
    CHECK(configHash(base.effective) == configHash(moved.effective));
    ConfigOverrides seed;
    seed.seed = 6;
    const auto reseeded = parseConfig(degenerateDoc(), seed);
    CHECK(reseeded.masterSeed == 6);
    CHECK(configHash(base.effective) != configHash(reseeded.effective));
    CHECK(hashHex(0x1f).size() == 16);
}

TEST_CASE("seed ledger derives distinct module seeds") {
    const auto s = SeedLedger::derive(5);
    CHECK(s.environment != s.branching);
    CHECK(s.gamma != s.auxiliary);
    CHECK(s.toJson()["master"] == 5);
    CHECK(SeedLedger::derive(5).scaling == s.scaling);
}

TEST_CASE("subcommand records carry table, hash and seeds") {
    const auto cfg = parseConfig(degenerateDoc());
    const auto r = runSubcommand("survival", cfg, 1);
    CHECK(r.subcommand == "survival");
    CHECK(r.configHash == configHash(cfg.effective));
    CHECK(r.table.rows.size() == 1);
    CHECK(r.seeds.master == 5);
    CHECK_THROWS_AS(runSubcommand("nope", cfg, 1), ConfigError);
}

TEST_CASE("verify-mto needs a discrete law") {
    CHECK_THROWS_AS(runSubcommand("verify-mto", parseConfig(degenerateDoc()), 1), ConfigError);
}

TEST_CASE("solve-tilt on the bundled degenerate config") {
    const auto dir = scratch("tilt");
    const auto run = cli("solve-tilt --config " + configPath("degenerate_gaussian.json") + " --out " + dir.string(), dir);
    CHECK(run.status == 0);
    const std::string csv = slurp(dir / "solve-tilt.csv");
    CHECK(csv.find("1.17741002") != std::string::npos);
    const auto meta = json::parse(slurp(dir / "solve-tilt.meta.json"));
    CHECK(meta["toolkit_version"] == kToolkitVersion);
    CHECK(meta.contains("seed_ledger"));
}

TEST_CASE("verify-mto on the bundled discrete config") {
    const auto dir = scratch("mto");
    const auto run = cli("verify-mto --config " + configPath("discrete.json") + " --out " + dir.string(), dir);
    CHECK(run.status == 0);
    CHECK(run.output.find("max |lhs−rhs| ≤ 1e-12") != std::string::npos);
}

TEST_CASE("missing seeds block fails without writing files") {
    const auto dir = scratch("noseeds");
    auto doc = degenerateDoc();
    doc.erase("seeds");
    const fs::path out = dir / "out";
    doc["output"] = {{"directory", out.string()}};
    writeJson(dir / "bad.json", doc);
    const auto run = cli("survival --config " + (dir / "bad.json").string(), dir);
    CHECK(run.status == 1);
    CHECK(!fs::exists(out));
}

TEST_CASE("unparseable config is a config error") {
    const auto dir = scratch("garbage");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK(cli("solve-tilt --config " + (dir / "bad.json").string(), dir).status == 1);
    CHECK(cli("solve-tilt --config " + (dir / "absent.json").string(), dir).status == 1);
    CHECK(cli("solve-tilt", dir).status == 1);
}

TEST_CASE("verify-record matches the embedded hash") {
    const auto dir = scratch("record");
    const fs::path cfgPath = dir / "cfg.json";
    writeJson(cfgPath, degenerateDoc());
    REQUIRE(cli("solve-tilt --config " + cfgPath.string() + " --out " + dir.string(), dir).status == 0);
    const std::string record = (dir / "solve-tilt.meta.json").string();
    CHECK(cli("verify-record --config " + cfgPath.string() + " --record " + record, dir).status == 0);
    CHECK(cli("verify-record --config " + cfgPath.string() + " --seed 99 --record " + record, dir).status == 2);
}

TEST_CASE("flagged rows over the threshold give exit status two") {
    const auto dir = scratch("flagged");
    auto doc = degenerateDoc();
    doc["environment"]["params"] = {{"family", "discrete-table"},
                                    {"outcomes", {{{"probability", 0.5}, {"displacements", json::array()}},
                                                  {{"probability", 0.5}, {"displacements", {-1.0, 0.0, 1.0}}}}}};
    doc["barrier"] = {{"epsilons", {0.2, 0.4}}, {"varsigma", 1}, {"c", 2}, {"a", 2}};
    doc["engine"]["replicates"] = 1;
    doc["output"] = {{"max_flagged_fraction", 0.0}};
    doc["gamma"] = {{"outer_replicates", 2}, {"horizon", 1}};
    writeJson(dir / "cfg.json", doc);
    // with a single replicate at least one row is expected to die out
    const auto run = cli("scaling --config " + (dir / "cfg.json").string() + " --out " + dir.string(), dir);
    CHECK(run.status == 2);
    CHECK(fs::exists(dir / "scaling.csv"));
}

TEST_CASE("json mirror is written on request") {
    const auto dir = scratch("json");
    const fs::path cfgPath = dir / "cfg.json";
    writeJson(cfgPath, degenerateDoc());
    REQUIRE(cli("survival --config " + cfgPath.string() + " --format both --out " + dir.string(), dir).status == 0);
    const auto mirror = json::parse(slurp(dir / "survival.json"));
    CHECK(mirror["rows"].size() == 1);
    CHECK(fs::exists(dir / "survival.csv"));
}

TEST_CASE("csv output is byte-identical across thread counts") {
    const auto dir = scratch("threads");
    const fs::path cfgPath = dir / "cfg.json";
    writeJson(cfgPath, degenerateDoc());
    REQUIRE(cli("sweep --config " + cfgPath.string() + " --threads 1 --out " + (dir / "t1").string(), dir).status == 0);
    REQUIRE(cli("sweep --config " + cfgPath.string() + " --threads 4 --out " + (dir / "t4").string(), dir).status == 0);
    CHECK(slurp(dir / "t1" / "sweep.csv") == slurp(dir / "t4" / "sweep.csv"));
}
