#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rydcrit/analysis.hpp"
#include "rydcrit/dynamics.hpp"
#include "rydcrit/lattice.hpp"
#include "rydcrit/measurement.hpp"

namespace rydcrit {

inline constexpr int kConfigSchemaVersion = 1;

/// Declarative experiment description. In the document, detunings are in
/// units of Omega, Omega in MHz (Omega / 2pi), times in us and sweep rates in
/// MHz/us (dDelta/dt / 2pi). Accessors convert to rad/us.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;

    struct LatticeSection {
        std::string geometry = "ring";  // ring | square
        int sites = 12;
        int nx = 4;
        int ny = 4;
        double spacing = 1.0;
    } lattice;

    struct HamiltonianSection {
        double omega_mhz = 1.6;
        std::optional<double> blockade_radius = 1.4;  // R_b / a
        std::optional<double> c6;                     // rad/us * a^6
        std::optional<double> interaction_cutoff;     // a
        std::string basis = "full";                   // full | blockade
        int max_full_sites = 22;
    } hamiltonian;

    struct GapScanSection {
        double delta_min = -1.0;
        double delta_max = 3.0;
        int points = 81;
        bool symmetric_sector = true;
    } gap_scan;

    struct RampSection {
        std::string kind = "lila_discrete";  // lila_discrete | lila_analytic | linear
        double delta_start = -1.0;
        /// Absent: the gap-profile minimum.
        std::optional<double> delta_end;
        double total_time_us = 2.0;
        int points = 101;
        double rate_mhz_per_us = 15.0;
        double omega_turn_on_us = 0.0;
    } ramp;

    struct DecoherenceSection {
        std::string mode = "off";  // off | measured | scaled | custom
        double scale = 1.0;
        JumpParams custom;  // rates 1/us, frequencies rad/us
        bool lindblad_check = false;
    } decoherence;

    struct DisorderSection {
        double coupling_sigma = 0.0;
        ThermalMotion thermal;
        int realizations = 1;
    } disorder;

    struct MeasurementSection {
        int shots = 1000;
        int shots_per_trajectory = 1;
        DetectionModel detection;
        bool postselect = false;
        std::optional<double> postselect_radius;  // a; defaults to R_b
        double loss_probability = 0.0;
    } measurement;

    struct AnalysisSection {
        std::string field = "sigma";
        std::vector<std::string> regions{"all"};
        std::vector<std::string> models{"power", "power_exponential"};
        double fit_min_distance = 1.5;
        std::optional<double> fit_max_distance;
        int bootstrap = 200;
        bool connected = false;
    } analysis;

    struct KzSection {
        bool enabled = false;
        std::vector<double> rates_mhz_per_us;
        double delta_min = -1.0;
        double delta_max = 3.0;
        /// Sweep endpoints; absent means the measurement window edges.
        std::optional<double> sweep_min;
        std::optional<double> sweep_max;
        int points = 50;
        bool backward = true;
        double plateau_tolerance = 0.05;
        double monotone_tolerance = 0.02;
        SusceptibilityOptions susceptibility;
    } kz;

    struct EvolutionSection {
        double tolerance = 1e-8;
        std::string integrator = "cf4";  // cf4 | midpoint
        double dt_max_us = 0.25;
    } evolution;

    nlohmann::json to_json() const;
    /// SHA-256 of the canonical JSON form.
    std::string hash() const;
    /// Re-checks every field; parse_config calls this.
    void validate() const;

    double omega() const;
    double rate_to_rad(double mhz_per_us) const;
    Lattice build_lattice() const;
    /// Hamiltonian at zero detuning.
    HamiltonianSpec build_template(const Lattice& lattice, const DisorderSample* disorder = nullptr) const;
    double blockade_radius_over_a() const;
    bool decoherence_enabled() const { return decoherence.mode != "off"; }
    bool disorder_enabled() const;
    JumpParams jump_params() const;
    StepControl step_control() const;
    double postselect_radius() const;
    FitOptions fit_options() const;
};

/// Parses a YAML document. Unknown keys, wrong types and out-of-range values
/// raise a config error naming the offending path.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rydcrit
