#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include "rydcrit/config.hpp"
#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/pipeline.hpp"

using namespace rydcrit;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
schema_version: 1
name: ring6_smoke
seed: 21
lattice: {geometry: ring, sites: 6}
gap_scan: {delta_min: -1.0, delta_max: 3.0, points: 21}
ramp: {kind: lila_discrete, total_time_us: 1.0, points: 21}
measurement: {shots: 300}
analysis: {models: [power], fit_min_distance: 1.0, bootstrap: 20}
)";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rydcrit_test_" + name);
    fs::remove_all(p);
    return p;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(RYDCRIT_CLI) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Pipeline, ReproducibleAndManifested) {
    const ExperimentConfig cfg = parse_config(kSmall);
    RunOptions a, b;
    a.out_dir = scratch("run_a");
    b.out_dir = scratch("run_b");
    a.plot_data = b.plot_data = true;
    const RunReport ra = run_pipeline(cfg, a);
    const RunReport rb = run_pipeline(cfg, b);
    ASSERT_EQ(ra.files, rb.files);
    ASSERT_FALSE(ra.files.empty());
    for (const auto& f : ra.files)
        EXPECT_EQ(read_text_file(a.out_dir / f), read_text_file(b.out_dir / f)) << f;

    const auto manifest = nlohmann::json::parse(read_text_file(a.out_dir / "manifest.json"));
    EXPECT_EQ(manifest["config_hash"], cfg.hash());
    EXPECT_EQ(manifest["master_seed"], cfg.seed);
    EXPECT_EQ(manifest["files"].size(), ra.files.size());
    for (const auto& e : manifest["files"]) {
        const std::string body = read_text_file(a.out_dir / e["path"].get<std::string>());
        EXPECT_EQ(e["sha256"], sha256_hex(body)) << e["path"];
        EXPECT_EQ(e["bytes"], body.size());
    }
    for (const char* f : {"gap_profile.csv", "ramp.csv", "snapshots.txt", "fits.json", "config.json", "plot_data.csv"})
        EXPECT_TRUE(fs::exists(a.out_dir / f)) << f;
    EXPECT_EQ(read_text_file(a.out_dir / "gap_profile.csv").rfind("# config_hash " + cfg.hash(), 0), 0u);
}

TEST(Pipeline, SeedChangesSnapshotsOnly) {
    ExperimentConfig cfg = parse_config(kSmall);
    RunOptions a, b;
    a.out_dir = scratch("seed_a");
    b.out_dir = scratch("seed_b");
    run_prepare(cfg, a);
    cfg.seed = 22;
    run_prepare(cfg, b);
    EXPECT_NE(read_text_file(a.out_dir / "snapshots.txt"), read_text_file(b.out_dir / "snapshots.txt"));
}

TEST(Pipeline, AnalyzeReusesSnapshots) {
    const ExperimentConfig cfg = parse_config(kSmall);
    RunOptions a, b;
    a.out_dir = scratch("reuse_a");
    b.out_dir = scratch("reuse_b");
    run_pipeline(cfg, a);
    b.snapshots = a.out_dir / "snapshots.txt";
    run_analyze(cfg, b);
    EXPECT_EQ(read_text_file(a.out_dir / "fits.json"), read_text_file(b.out_dir / "fits.json"));

    ExperimentConfig other = cfg;
    other.lattice.sites = 8;
    RunOptions c;
    c.out_dir = scratch("reuse_c");
    c.snapshots = b.snapshots;
    EXPECT_THROW(run_analyze(other, c), Error);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream(dir / name) << body;
        return (dir / name).string();
    };
    const std::string good = write("good.yaml", kSmall);
    const std::string typo = write("typo.yaml", "schema_version: 1\nlatice: {sites: 6}\n");
    const std::string big = write("big.yaml", "schema_version: 1\nlattice: {geometry: ring, sites: 40}\n");
    const std::string out = (dir / "out").string();

    EXPECT_EQ(cli("gap-scan --config " + good + " --out " + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
    EXPECT_EQ(cli("gap-scan --config " + typo + " --out " + out), 2);
    EXPECT_EQ(cli("gap-scan --config " + big + " --out " + out), 3);
    EXPECT_EQ(cli("gap-scan --out " + out), 2);
    EXPECT_EQ(cli("frobnicate --config " + good), 2);
}
