#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "rydcrit/dynamics.hpp"
#include "rydcrit/measurement.hpp"
#include "rydcrit/observables.hpp"

namespace rydcrit {

/// Ising CFT reference scaling dimensions.
inline constexpr double kDeltaSigma1D = 0.125;
inline constexpr double kDeltaSigma2D = 0.518149;
inline constexpr double kDeltaEpsilon1D = 1.0;
inline constexpr double kDeltaEpsilon2D = 1.4;

// ---------------------------------------------------------------------------
// Susceptibility

/// Savitzky-Golay smoothing; the edges use the polynomial fitted to the first
/// and last full window.
std::vector<double> savitzky_golay(const std::vector<double>& y, int window, int order);

struct SusceptibilityOptions {
    int window = 5;  // step 1, grid points
    int order = 2;
    int chi_window = 11;  // step 4, in units of the input grid spacing
    int chi_order = 2;
    int refine = 10;  // interpolation density factor
};

struct SusceptibilityScan {
    std::vector<double> delta_grid;
    std::vector<double> mean_n;
    std::vector<double> smoothed;
    std::vector<double> fine_grid;
    std::vector<double> interpolated;
    std::vector<double> chi_raw;
    std::vector<double> chi;
    double delta_max = 0.0;
    double chi_max = 0.0;
    /// False when chi is flat to within numerical noise.
    bool unique_peak = true;
    SusceptibilityOptions options;
    int fine_window = 0;

    std::string coarse_csv() const;
    std::string fine_csv() const;
    nlohmann::json to_json() const;
};

/// Smooth, cubic-spline interpolate, central-difference, smooth again, take
/// the maximum.
SusceptibilityScan susceptibility_peak(const std::vector<double>& delta_grid, const std::vector<double>& mean_n,
                                       const SusceptibilityOptions& options = {});

// ---------------------------------------------------------------------------
// Correlator fits

enum class FitModel { Power, Exponential, PowerTimesExponential, FiniteTCFT };
enum class FitMode { Auto, Log, Direct };

const char* to_string(FitModel m);
FitModel fit_model_from_string(const std::string& s);

struct FitRange {
    double min_distance = 1.5;
    double max_distance = std::numeric_limits<double>::infinity();
    /// Drop the largest-distance bin when fewer than `sparse_count` pairs
    /// support it.
    bool drop_sparse_last_bin = true;
    int sparse_count = 4;
};

struct FitOptions {
    FitRange range;
    FitMode mode = FitMode::Auto;
    /// Inverse-variance weights from the series' standard errors when all of
    /// them are positive.
    bool use_stderr_weights = true;
    double tolerance = 1e-14;
    int max_evaluations = 4000;
};

struct FitParams {
    double amplitude = 0.0;
    double scaling_dim = 0.0;
    double xi = std::numeric_limits<double>::infinity();
    double temperature = 0.0;
};

struct FitResult {
    FitModel model = FitModel::Power;
    FitParams params;
    FitParams stderr;
    /// Covariance of the internal parameters (log amplitude, scaling
    /// dimension, inverse length or temperature).
    Eigen::MatrixXd covariance;
    double rss = 0.0;
    int n_points = 0;
    int n_params = 0;
    double bic = 0.0;
    bool log_mode = true;
    bool direct_fallback = false;
    /// Fitted inverse length was <= 0; xi is reported as infinite.
    bool xi_unbounded = false;
    std::vector<double> distances;
    std::vector<double> residuals;

    double exponent() const { return 2.0 * params.scaling_dim; }
    nlohmann::json to_json() const;
};

/// Model value at distance d.
double evaluate_model(FitModel model, const FitParams& p, double d);

FitResult fit_correlator(const CorrelatorSeries& series, FitModel model, const FitOptions& options = {});

struct JointFitResult {
    FitModel model = FitModel::PowerTimesExponential;
    double scaling_dim = 0.0;
    double scaling_dim_stderr = 0.0;
    std::vector<FitParams> per_series;
    std::vector<FitParams> per_series_stderr;
    double rss = 0.0;
    double single_rss_sum = 0.0;
    bool large_residual = false;
    int n_points = 0;

    nlohmann::json to_json() const;
};

/// Shared scaling dimension, independent amplitude and length (or
/// temperature) per series.
JointFitResult joint_fit(const std::vector<CorrelatorSeries>& series, FitModel model, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapSummary {
    double estimate = 0.0;  // plug-in value on the full data
    double mean = 0.0;
    double std = 0.0;
    double median = 0.0;
    double p158 = 0.0;
    double p84 = 0.0;
    double skewness = 0.0;
    /// |skewness| above the threshold: report median with the percentile
    /// interval instead of mean and std.
    bool asymmetric = false;
    int replicates = 0;
    int failed = 0;

    double central() const { return asymmetric ? median : mean; }
    double lower_error() const { return asymmetric ? median - p158 : std; }
    double upper_error() const { return asymmetric ? p84 - median : std; }
    nlohmann::json to_json() const;
};

BootstrapSummary summarize_samples(std::vector<double> samples, double estimate, int failed,
                                   double skew_threshold = 0.5);

using Estimator = std::function<std::vector<double>(const SnapshotSet&)>;

struct BootstrapOptions {
    int replicates = 1000;
    std::uint64_t seed = 0;
    double max_failure_fraction = 0.1;
    double skew_threshold = 0.5;
};

/// Resamples shots with replacement and re-runs the estimator per replicate.
/// Replicates whose estimator throws a library error are dropped.
std::vector<BootstrapSummary> bootstrap(const SnapshotSet& snaps, const Estimator& estimator,
                                        const BootstrapOptions& options);

/// Per-replicate output vectors (failed replicates absent) alongside the
/// summaries; used when downstream statistics need the raw draws.
struct BootstrapDraws {
    std::vector<std::vector<double>> draws;
    std::vector<BootstrapSummary> summaries;
};
BootstrapDraws bootstrap_draws(const SnapshotSet& snaps, const Estimator& estimator, const BootstrapOptions& options);

// ---------------------------------------------------------------------------
// Kibble-Zurek rate scan

/// Returns <n> at each requested detuning during a sweep at the given rate.
/// `backward` sweeps from high to low detuning; the returned values are in
/// the order of `deltas` (ascending) either way.
using SweepSimulator =
    std::function<std::vector<double>(double rate, bool backward, const std::vector<double>& deltas)>;

struct KzOptions {
    std::vector<double> deltas;  // ascending measurement grid
    bool backward = false;
    SusceptibilityOptions susceptibility;
    /// Slack for the monotonicity verdicts.
    double monotone_tolerance = 0.0;
    double plateau_tolerance = 0.0;
};

struct KzPoint {
    double rate = 0.0;
    SusceptibilityScan forward;
    std::optional<SusceptibilityScan> backward;
};

struct KzScanResult {
    std::vector<KzPoint> points;  // fastest rate first
    /// Forward Delta_max non-increasing as the rate decreases.
    bool forward_monotone = true;
    /// Backward Delta_max non-decreasing as the rate decreases.
    bool backward_inverse = true;
    bool plateau_reached = false;

    std::string to_csv() const;
    nlohmann::json to_json() const;
};

KzScanResult kz_rate_scan(const SweepSimulator& simulator, std::vector<double> rates, const KzOptions& options);

/// Exact unitary linear sweeps of a closed system starting from the ground
/// state at the sweep's first detuning.
SweepSimulator unitary_sweep_simulator(const HamiltonianSpec& spec_template, double delta_low, double delta_high,
                                       const EigenOptions& eigen = {}, const StepControl& control = {});

}  // namespace rydcrit
