#include <gtest/gtest.h>

#include <string>

#include "rydcrit/config.hpp"
#include "rydcrit/errors.hpp"

using namespace rydcrit;

namespace {

const char* kMinimal = R"(
schema_version: 1
name: small
seed: 3
lattice: {geometry: ring, sites: 6}
)";

ErrorKind kind_of(const std::string& yaml, std::string* what = nullptr) {
    try {
        parse_config(yaml);
    } catch (const Error& e) {
        if (what) *what = e.what();
        return e.kind();
    }
    ADD_FAILURE() << "no error for:\n" << yaml;
    return ErrorKind::Io;
}

}  // namespace

TEST(Config, MinimalDocumentTakesDefaults) {
    const ExperimentConfig c = parse_config(kMinimal);
    EXPECT_EQ(c.name, "small");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.lattice.sites, 6);
    EXPECT_NEAR(c.omega(), 2 * M_PI * 1.6, 1e-12);
    EXPECT_NEAR(c.rate_to_rad(15.0), 2 * M_PI * 15.0, 1e-12);
    EXPECT_EQ(c.build_lattice().n_sites(), 6);
    EXPECT_FALSE(c.ramp.delta_end.has_value());
}

TEST(Config, GapMinimumKeywordLeavesEndOpen) {
    const ExperimentConfig c = parse_config(std::string(kMinimal) + "ramp: {delta_end: gap_minimum}\n");
    EXPECT_FALSE(c.ramp.delta_end.has_value());
    const ExperimentConfig d = parse_config(std::string(kMinimal) + "ramp: {delta_end: 1.2}\n");
    ASSERT_TRUE(d.ramp.delta_end.has_value());
    EXPECT_DOUBLE_EQ(*d.ramp.delta_end, 1.2);
}

TEST(Config, TypoNamesPathAndSuggestion) {
    std::string what;
    EXPECT_EQ(kind_of("schema_version: 1\nlatice: {geometry: ring, sites: 6}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("latice"), std::string::npos) << what;
    EXPECT_NE(what.find("did you mean 'lattice'"), std::string::npos) << what;

    EXPECT_EQ(kind_of(std::string(kMinimal) + "ramp: {totl_time_us: 2}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("ramp.totl_time_us"), std::string::npos) << what;
    EXPECT_NE(what.find("ramp.total_time_us"), std::string::npos) << what;
}

TEST(Config, WrongTypesAndRanges) {
    std::string what;
    EXPECT_EQ(kind_of("schema_version: 1\nlattice: {geometry: ring, sites: 6.5}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("lattice.sites"), std::string::npos) << what;
    EXPECT_EQ(kind_of(std::string(kMinimal) + "measurement: {shots: 0}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("measurement.shots"), std::string::npos) << what;
    EXPECT_EQ(kind_of(std::string(kMinimal) + "ramp: {kind: cubic}\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of(std::string(kMinimal) + "kz: {enabled: true, rates_mhz_per_us: [5]}\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of(std::string(kMinimal) + "kz: {smoothing: {chi_window: 4}}\n"), ErrorKind::Config);
}

TEST(Config, SchemaVersionChecked) {
    std::string what;
    EXPECT_EQ(kind_of("lattice: {geometry: ring, sites: 6}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("schema_version"), std::string::npos);
    EXPECT_EQ(kind_of("schema_version: 2\nlattice: {geometry: ring, sites: 6}\n", &what), ErrorKind::Config);
    EXPECT_NE(what.find("schema_version"), std::string::npos);
}

TEST(Config, CapacityErrors) {
    EXPECT_EQ(kind_of("schema_version: 1\nlattice: {geometry: ring, sites: 30}\n"), ErrorKind::Capacity);
    EXPECT_NO_THROW(parse_config("schema_version: 1\nlattice: {geometry: ring, sites: 30}\n"
                                 "hamiltonian: {basis: blockade}\n"));
    EXPECT_EQ(kind_of("schema_version: 1\nlattice: {geometry: ring, sites: 8}\n"
                      "decoherence: {mode: measured, lindblad_check: true}\n"),
              ErrorKind::Capacity);
}

TEST(Config, HashIsCanonical) {
    const ExperimentConfig a = parse_config(kMinimal);
    const ExperimentConfig b = parse_config("lattice:\n  sites: 6\n  geometry: ring\nseed: 3\nname: small\nschema_version: 1\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 64u);
    ExperimentConfig c = a;
    c.seed = 4;
    EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, JsonCarriesEverySection) {
    const ExperimentConfig a = parse_config(std::string(kMinimal) + "kz: {enabled: true, rates_mhz_per_us: [4, 2]}\n");
    const auto j = a.to_json();
    for (const char* s : {"lattice", "hamiltonian", "gap_scan", "ramp", "decoherence", "disorder", "measurement",
                          "analysis", "kz", "evolution"})
        EXPECT_TRUE(j.contains(s)) << s;
    EXPECT_EQ(j["kz"]["rates_mhz_per_us"].size(), 2u);
    EXPECT_EQ(j["schema_version"], kConfigSchemaVersion);
}
