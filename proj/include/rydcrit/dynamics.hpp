#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "rydcrit/hamiltonian.hpp"
#include "rydcrit/spectrum.hpp"

namespace rydcrit {

// ---------------------------------------------------------------------------
// Ramps

/// Piecewise-linear schedule of detuning and Rabi frequency.
struct RampProfile {
    std::vector<double> times;   // us, starts at 0
    std::vector<double> deltas;  // rad/us
    std::vector<double> omegas;  // rad/us
    /// E_g^2 / |dDelta/dt| at each knot where the synthesis defines it.
    std::vector<double> gamma;
    /// dDelta/dt at each knot when known in closed form (otherwise empty).
    std::vector<double> rates;

    double duration() const { return times.empty() ? 0.0 : times.back(); }
    double delta_at(double t) const;
    double omega_at(double t) const;
    /// Time-reversed schedule t -> T - t.
    RampProfile reversed() const;
    /// Throws a domain error unless times increase strictly from 0 and all
    /// series have matching lengths.
    void validate() const;
    std::string to_csv() const;
};

/// Equal detuning spacing, time per interval proportional to 1 / E_g^2 at the
/// interval midpoint.
RampProfile lila_ramp_discrete(const GapProfile& profile, double delta0, double delta_target, double total_time,
                               int n_points, double omega);

/// Closed-form schedule for a gap that varies linearly from e0 (at t = 0) to
/// ec (at t = T).
RampProfile lila_ramp_analytic(double e0, double ec, double delta0, double delta_c, double total_time, int n_points,
                               double omega);
double lila_analytic_delta(double e0, double ec, double delta0, double delta_c, double total_time, double t);
double lila_analytic_rate(double e0, double ec, double delta0, double delta_c, double total_time, double t);

/// Constant sweep rate (rad/us^2).
RampProfile linear_ramp(double delta0, double delta1, double rate, double omega);

/// Prepends a linear Rabi turn-on from 0 to the ramp's initial Omega at the
/// initial detuning.
RampProfile with_omega_turn_on(const RampProfile& ramp, double turn_on_time);

struct AdiabaticityReport {
    std::vector<double> times;
    std::vector<double> gamma;      // NaN where excluded
    std::vector<bool> excluded;     // zero sweep rate
    double min_gamma = 0.0;
    double max_gamma = 0.0;
    double argmin_time = 0.0;
    std::vector<std::string> warnings;
};

/// gamma(t_k) = E_g(Delta(t_k))^2 / |dDelta/dt|, from closed-form rates when the
/// ramp carries them and central differences otherwise. With `samples > 0`
/// the ramp is evaluated on that many uniform times instead of its knots.
AdiabaticityReport adiabaticity_check(const RampProfile& ramp, const GapProfile& profile, int samples = 0);

// ---------------------------------------------------------------------------
// Decoherence

/// Rates in 1/us, Rabi frequencies and detunings in rad/us.
struct JumpParams {
    double gamma_decay = 0.0;
    double gamma_e = 0.0;
    double omega_blue = 0.0;
    double omega_ir = 0.0;
    double delta_int = 1.0;

    /// Cs 54S two-photon excitation scheme used in the experiment.
    static JumpParams measured();
    /// Decay and intermediate-state linewidth multiplied by k.
    JumpParams scaled(double k) const;
};

enum class JumpChannel { Decay = 0, Scatter = 1 };

/// Per-site jump operators c_decay = sqrt(gamma_decay)|g><r| and
/// c_scatt = sqrt(kappa)(Omega_blue|g><g| + Omega_IR|g><r|), kappa = gamma_e / (4 delta_int^2).
struct JumpOperatorSet {
    JumpParams params;
    double kappa = 0.0;
    double gamma_scatt = 0.0;       // kappa (Omega_blue^2 + Omega_IR^2)
    double two_photon_omega = 0.0;  // Omega_blue Omega_IR / (2 delta_int)

    bool empty() const { return params.gamma_decay == 0.0 && kappa == 0.0; }
    std::vector<JumpChannel> channels() const;
    /// Single-site operator in the (g, r) basis.
    Eigen::Matrix2cd site_operator(JumpChannel c) const;
    /// -(i/2) sum_j c_j^dag c_j written in the flip/occupation/constant form.
    HamiltonianOperator::Coefficients anti_hermitian_part(int n_sites) const;
};

JumpOperatorSet make_jump_set(const JumpParams& params);

// ---------------------------------------------------------------------------
// Time evolution

enum class Integrator { CommutatorFree4, Midpoint };

struct StepControl {
    double tol = 1e-8;  // local error per unit time
    double dt_initial = 1e-2;
    double dt_min = 1e-10;
    double dt_max = 0.25;
    Integrator integrator = Integrator::CommutatorFree4;
    int krylov_dim = 30;
    double krylov_tol = 1e-12;
    /// Fixed step instead of adaptive control (0 = adaptive).
    double fixed_dt = 0.0;
};

struct EvolutionStats {
    long steps = 0;
    long rejected = 0;
    double max_error = 0.0;
};

using SampleCallback = std::function<void(double t, const StateVector& psi)>;

/// i dpsi/dt = H(t) psi with the ramp's piecewise-linear Delta(t), Omega(t).
/// Steps never straddle ramp knots or requested sample times.
StateVector evolve_unitary(const HamiltonianSpec& spec_template, const RampProfile& ramp, const StateVector& psi0,
                           const StepControl& control = {}, const std::vector<double>& sample_times = {},
                           const SampleCallback& on_sample = {}, EvolutionStats* stats = nullptr);

/// Evolution under H_eff = H - (i/2) sum_j c_j^dag c_j without jumps; the
/// returned state is not renormalized.
StateVector evolve_no_jump(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                           const JumpOperatorSet& jumps, const StateVector& psi0, const StepControl& control = {});

struct JumpEvent {
    double time = 0.0;
    int site = 0;
    JumpChannel channel = JumpChannel::Decay;
    friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

struct TrajectoryResult {
    StateVector final_state;
    std::vector<JumpEvent> jumps;
    std::uint64_t seed = 0;
};

/// Waiting-time quantum trajectory: integrate H_eff until |psi|^2 drops to a
/// uniform draw, jump, renormalize, redraw.
TrajectoryResult evolve_trajectory(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                   const JumpOperatorSet& jumps, const StateVector& psi0, std::uint64_t seed,
                                   const StepControl& control = {});

/// <psi| c^dag c |psi> for one channel on one site.
double jump_weight(const JumpOperatorSet& jumps, JumpChannel channel, int site, const StateVector& psi);
/// c|psi> (not renormalized).
StateVector apply_jump(const JumpOperatorSet& jumps, JumpChannel channel, int site, const StateVector& psi);

struct TrajectoryEnsemble {
    std::vector<TrajectoryResult> runs;
    std::uint64_t master_seed = 0;

    Eigen::VectorXd mean_occupation() const;
    Eigen::VectorXd stderr_occupation() const;
    nlohmann::json summary() const;
};

/// Trajectory k uses seed derive_seed(master_seed, k). Runs in parallel;
/// the result does not depend on the worker count.
TrajectoryEnsemble run_trajectories(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                    const JumpOperatorSet& jumps, const StateVector& psi0, int count,
                                    std::uint64_t master_seed, const StepControl& control = {});

Eigen::VectorXd site_occupations(const StateVector& psi);

// ---------------------------------------------------------------------------
// Dense master-equation reference

inline constexpr int kMaxLindbladSites = 6;

/// Integrates d rho/dt = -i[H, rho] + sum_j (c_j rho c_j^dag - {c_j^dag c_j, rho}/2)
/// in the full basis with an adaptive Dormand-Prince scheme.
Eigen::MatrixXcd lindblad_exact(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                const JumpOperatorSet& jumps, const Eigen::MatrixXcd& rho0, double rel_tol = 1e-10,
                                double abs_tol = 1e-12);

/// <n_i> for every site of a full-basis density matrix.
Eigen::VectorXd density_occupations(const Eigen::MatrixXcd& rho);

}  // namespace rydcrit
