#include "rydcrit/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/numeric/odeint.hpp>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/krylov.hpp"
#include "rydcrit/parallel.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

using Coefficients = HamiltonianOperator::Coefficients;

// ---------------------------------------------------------------------------
// Ramps

namespace {

std::size_t segment_index(const std::vector<double>& times, double t) {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0;
    const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
    return std::min(k, times.size() - 2);
}

double interpolate(const std::vector<double>& times, const std::vector<double>& values, double t) {
    if (values.size() == 1 || t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const std::size_t k = segment_index(times, t);
    const double f = (t - times[k]) / (times[k + 1] - times[k]);
    return values[k] + f * (values[k + 1] - values[k]);
}

}  // namespace

double RampProfile::delta_at(double t) const { return interpolate(times, deltas, t); }
double RampProfile::omega_at(double t) const { return interpolate(times, omegas, t); }

RampProfile RampProfile::reversed() const {
    RampProfile r;
    const double T = duration();
    for (auto it = times.rbegin(); it != times.rend(); ++it) r.times.push_back(T - *it);
    r.times.front() = 0.0;
    r.deltas.assign(deltas.rbegin(), deltas.rend());
    r.omegas.assign(omegas.rbegin(), omegas.rend());
    r.gamma.assign(gamma.rbegin(), gamma.rend());
    for (auto it = rates.rbegin(); it != rates.rend(); ++it) r.rates.push_back(-*it);
    return r;
}

void RampProfile::validate() const {
    require(!times.empty(), ErrorKind::Domain, "ramp has no points");
    require(times.front() == 0.0, ErrorKind::Domain, "ramp must start at t = 0");
    require(deltas.size() == times.size() && omegas.size() == times.size(), ErrorKind::Domain,
            "ramp series lengths differ");
    require(gamma.empty() || gamma.size() == times.size(), ErrorKind::Domain, "gamma series length mismatch");
    require(rates.empty() || rates.size() == times.size(), ErrorKind::Domain, "rate series length mismatch");
    for (std::size_t k = 1; k < times.size(); ++k)
        require(times[k] > times[k - 1], ErrorKind::Domain, "ramp times must increase strictly");
}

std::string RampProfile::to_csv() const {
    std::string out = "t,delta,omega,gamma\n";
    for (std::size_t k = 0; k < times.size(); ++k)
        out += csv_row({format_double(times[k]), format_double(deltas[k]), format_double(omegas[k]),
                        gamma.empty() ? std::string() : format_double(gamma[k])});
    return out;
}

RampProfile lila_ramp_discrete(const GapProfile& profile, double delta0, double delta_target, double total_time,
                               int n_points, double omega) {
    require(n_points >= 2, ErrorKind::Domain, "LILA ramp needs at least 2 points");
    require(total_time > 0, ErrorKind::Domain, "ramp duration must be positive");
    require(delta0 != delta_target, ErrorKind::Domain, "LILA ramp needs distinct endpoints");
    require(!profile.delta_grid.empty(), ErrorKind::Domain, "empty gap profile");
    const double lo = profile.delta_grid.front();
    const double hi = profile.delta_grid.back();
    const double slack = 1e-9 * std::max(1.0, hi - lo);
    for (double d : {delta0, delta_target})
        require(d >= lo - slack && d <= hi + slack, ErrorKind::Domain,
                "ramp endpoint " + format_double(d) + " outside the gap profile span");

    const double step = (delta_target - delta0) / (n_points - 1);
    std::vector<double> knots(n_points);
    for (int k = 0; k < n_points; ++k) knots[k] = delta0 + k * step;
    knots.back() = delta_target;

    std::vector<double> inv_sq(n_points - 1);
    double sum = 0.0;
    for (int k = 0; k + 1 < n_points; ++k) {
        const double e = profile.gap_at(0.5 * (knots[k] + knots[k + 1]));
        require(e > 0, ErrorKind::Domain, "gap profile has a non-positive gap inside the ramp range");
        inv_sq[k] = 1.0 / (e * e);
        sum += inv_sq[k];
    }

    RampProfile r;
    r.times.push_back(0.0);
    for (int k = 0; k + 1 < n_points; ++k) r.times.push_back(r.times.back() + total_time * inv_sq[k] / sum);
    r.times.back() = total_time;
    r.deltas = knots;
    r.omegas.assign(n_points, omega);
    r.gamma.assign(n_points, total_time / (std::abs(step) * sum));
    return r;
}

double lila_analytic_delta(double e0, double ec, double delta0, double delta_c, double total_time, double t) {
    return (e0 * delta_c * t + ec * delta0 * (total_time - t)) / (e0 * t + ec * (total_time - t));
}

double lila_analytic_rate(double e0, double ec, double delta0, double delta_c, double total_time, double t) {
    const double d = e0 * t + ec * (total_time - t);
    return e0 * ec * total_time * (delta_c - delta0) / (d * d);
}

RampProfile lila_ramp_analytic(double e0, double ec, double delta0, double delta_c, double total_time, int n_points,
                               double omega) {
    require(e0 > 0 && ec > 0, ErrorKind::Domain, "analytic LILA ramp needs positive gaps");
    require(total_time > 0, ErrorKind::Domain, "ramp duration must be positive");
    require(n_points >= 2, ErrorKind::Domain, "LILA ramp needs at least 2 points");
    require(delta0 != delta_c, ErrorKind::Domain, "LILA ramp needs distinct endpoints");
    RampProfile r;
    const double g = e0 * ec * total_time / std::abs(delta_c - delta0);
    for (int k = 0; k < n_points; ++k) {
        const double t = total_time * k / (n_points - 1);
        r.times.push_back(t);
        r.deltas.push_back(lila_analytic_delta(e0, ec, delta0, delta_c, total_time, t));
        r.rates.push_back(lila_analytic_rate(e0, ec, delta0, delta_c, total_time, t));
    }
    r.times.back() = total_time;
    r.deltas.front() = delta0;
    r.deltas.back() = delta_c;
    r.omegas.assign(n_points, omega);
    r.gamma.assign(n_points, g);
    return r;
}

RampProfile linear_ramp(double delta0, double delta1, double rate, double omega) {
    require(rate > 0, ErrorKind::Domain, "sweep rate must be positive");
    RampProfile r;
    const double T = std::abs(delta1 - delta0) / rate;
    if (T == 0.0) {
        r.times = {0.0};
        r.deltas = {delta0};
        r.omegas = {omega};
        r.rates = {0.0};
        return r;
    }
    const double signed_rate = delta1 > delta0 ? rate : -rate;
    r.times = {0.0, T};
    r.deltas = {delta0, delta1};
    r.omegas = {omega, omega};
    r.rates = {signed_rate, signed_rate};
    return r;
}

RampProfile with_omega_turn_on(const RampProfile& ramp, double turn_on_time) {
    require(turn_on_time >= 0, ErrorKind::Domain, "turn-on time must be non-negative");
    ramp.validate();
    if (turn_on_time == 0.0) return ramp;
    RampProfile r;
    r.times.push_back(0.0);
    for (double t : ramp.times) r.times.push_back(t + turn_on_time);
    r.deltas.push_back(ramp.deltas.front());
    r.deltas.insert(r.deltas.end(), ramp.deltas.begin(), ramp.deltas.end());
    r.omegas.push_back(0.0);
    r.omegas.insert(r.omegas.end(), ramp.omegas.begin(), ramp.omegas.end());
    if (!ramp.gamma.empty()) {
        r.gamma.push_back(std::numeric_limits<double>::quiet_NaN());
        r.gamma.insert(r.gamma.end(), ramp.gamma.begin(), ramp.gamma.end());
    }
    if (!ramp.rates.empty()) {
        r.rates.push_back(0.0);
        r.rates.insert(r.rates.end(), ramp.rates.begin(), ramp.rates.end());
    }
    return r;
}

AdiabaticityReport adiabaticity_check(const RampProfile& ramp, const GapProfile& profile, int samples) {
    ramp.validate();
    require(ramp.times.size() >= 2, ErrorKind::Domain, "adiabaticity check needs a ramp with duration");
    AdiabaticityReport rep;
    std::vector<double> rate;
    if (samples > 0) {
        require(samples >= 2, ErrorKind::Domain, "need at least 2 samples");
        const double T = ramp.duration();
        const double h = T / (samples - 1);
        for (int k = 0; k < samples; ++k) {
            const double t = h * k;
            const double a = std::max(0.0, t - h);
            const double b = std::min(T, t + h);
            rep.times.push_back(t);
            rate.push_back((ramp.delta_at(b) - ramp.delta_at(a)) / (b - a));
        }
    } else {
        rep.times = ramp.times;
        const std::size_t n = ramp.times.size();
        for (std::size_t k = 0; k < n; ++k) {
            if (!ramp.rates.empty()) {
                rate.push_back(ramp.rates[k]);
                continue;
            }
            const std::size_t a = k == 0 ? 0 : k - 1;
            const std::size_t b = k + 1 == n ? n - 1 : k + 1;
            rate.push_back((ramp.deltas[b] - ramp.deltas[a]) / (ramp.times[b] - ramp.times[a]));
        }
    }
    rep.min_gamma = std::numeric_limits<double>::infinity();
    rep.max_gamma = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        const double e = profile.gap_at(ramp.delta_at(rep.times[k]));
        if (rate[k] == 0.0) {
            rep.gamma.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.excluded.push_back(true);
            rep.warnings.push_back("zero sweep rate at t = " + format_double(rep.times[k]) + "; point excluded");
            continue;
        }
        const double g = e * e / std::abs(rate[k]);
        rep.gamma.push_back(g);
        rep.excluded.push_back(false);
        if (g < rep.min_gamma) {
            rep.min_gamma = g;
            rep.argmin_time = rep.times[k];
        }
        rep.max_gamma = std::max(rep.max_gamma, g);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Jump operators

JumpParams JumpParams::measured() {
    constexpr double two_pi = 2 * std::numbers::pi;
    JumpParams p;
    p.gamma_decay = 1.0 / 71.44;
    p.gamma_e = two_pi * 1.23;
    p.omega_blue = two_pi * 80.04;
    p.omega_ir = two_pi * 42.3;
    p.delta_int = two_pi * 1058.0;
    return p;
}

JumpParams JumpParams::scaled(double k) const {
    require(k >= 0, ErrorKind::Domain, "rate scale must be non-negative");
    JumpParams p = *this;
    p.gamma_decay *= k;
    p.gamma_e *= k;
    return p;
}

JumpOperatorSet make_jump_set(const JumpParams& params) {
    require(params.gamma_decay >= 0 && params.gamma_e >= 0, ErrorKind::Domain, "rates must be non-negative");
    require(params.delta_int != 0.0, ErrorKind::Domain, "intermediate detuning must be non-zero");
    JumpOperatorSet s;
    s.params = params;
    s.kappa = params.gamma_e / (4.0 * params.delta_int * params.delta_int);
    s.gamma_scatt = s.kappa * (params.omega_blue * params.omega_blue + params.omega_ir * params.omega_ir);
    s.two_photon_omega = params.omega_blue * params.omega_ir / (2.0 * params.delta_int);
    return s;
}

std::vector<JumpChannel> JumpOperatorSet::channels() const {
    std::vector<JumpChannel> c;
    if (params.gamma_decay > 0) c.push_back(JumpChannel::Decay);
    if (kappa > 0 && (params.omega_blue != 0 || params.omega_ir != 0)) c.push_back(JumpChannel::Scatter);
    return c;
}

Eigen::Matrix2cd JumpOperatorSet::site_operator(JumpChannel c) const {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
    if (c == JumpChannel::Decay) {
        m(0, 1) = std::sqrt(params.gamma_decay);
    } else {
        const double s = std::sqrt(kappa);
        m(0, 0) = s * params.omega_blue;
        m(0, 1) = s * params.omega_ir;
    }
    return m;
}

Coefficients JumpOperatorSet::anti_hermitian_part(int n_sites) const {
    // c_s^dag c_s = kappa (Ob^2 (1 - n) + Ob Oir X + Oir^2 n);  c_d^dag c_d = gamma_d n
    const cd mi(0.0, -0.5);
    const double ob = params.omega_blue;
    const double oi = params.omega_ir;
    Coefficients c;
    c.interaction = 0.0;
    c.flip = mi * kappa * ob * oi;
    c.occupation = mi * (params.gamma_decay + kappa * (oi * oi - ob * ob));
    c.constant = mi * (kappa * ob * ob * n_sites);
    return c;
}

double jump_weight(const JumpOperatorSet& jumps, JumpChannel channel, int site, const StateVector& psi) {
    const BasisSpace& b = *psi.basis;
    const std::uint64_t bit = std::uint64_t{1} << site;
    const auto& a = psi.amplitudes;
    double acc = 0.0;
    if (channel == JumpChannel::Decay) {
        for (std::size_t k = 0; k < b.dim(); ++k)
            if (b.state(k) & bit) acc += std::norm(a[static_cast<Eigen::Index>(k)]);
        return jumps.params.gamma_decay * acc;
    }
    const double ob = jumps.params.omega_blue;
    const double oi = jumps.params.omega_ir;
    for (std::size_t k = 0; k < b.dim(); ++k) {
        const std::uint64_t s = b.state(k);
        if (s & bit) continue;
        cd v = ob * a[static_cast<Eigen::Index>(k)];
        if (auto up = b.index_of(s | bit)) v += oi * a[static_cast<Eigen::Index>(*up)];
        acc += std::norm(v);
    }
    return jumps.kappa * acc;
}

StateVector apply_jump(const JumpOperatorSet& jumps, JumpChannel channel, int site, const StateVector& psi) {
    const BasisSpace& b = *psi.basis;
    const std::uint64_t bit = std::uint64_t{1} << site;
    StateVector out = StateVector::zeros(psi.basis);
    const auto& a = psi.amplitudes;
    const Eigen::Matrix2cd c = jumps.site_operator(channel);
    for (std::size_t k = 0; k < b.dim(); ++k) {
        const std::uint64_t s = b.state(k);
        if (s & bit) continue;
        cd v = c(0, 0) * a[static_cast<Eigen::Index>(k)];
        if (auto up = b.index_of(s | bit)) v += c(0, 1) * a[static_cast<Eigen::Index>(*up)];
        out.amplitudes[static_cast<Eigen::Index>(k)] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Propagation

namespace {

const double kSqrt3 = std::sqrt(3.0);
const double kNodeLo = 0.5 - kSqrt3 / 6.0;
const double kNodeHi = 0.5 + kSqrt3 / 6.0;
const double kWeightBig = 0.25 + kSqrt3 / 6.0;
const double kWeightSmall = 0.25 - kSqrt3 / 6.0;

class Stepper {
   public:
    Stepper(const HamiltonianOperator& op, const RampProfile& ramp, Coefficients extra, const StepControl& ctl)
        : op_(op), ramp_(ramp), extra_(extra), ctl_(ctl), dt_(ctl.dt_initial) {}

    Coefficients generator(double t) const {
        return Coefficients::rydberg(ramp_.omega_at(t), ramp_.delta_at(t)) + extra_;
    }

    void exp_step(Eigen::VectorXcd& psi, const Coefficients& c, double h) const {
        auto a = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& out) { op_.apply(c, in, out); };
        expmv(a, cd(0.0, -h), psi, std::min(ctl_.krylov_tol, 1e-2 * ctl_.tol * h), ctl_.krylov_dim);
    }

    void step(Eigen::VectorXcd& psi, double t, double h) const {
        if (ctl_.integrator == Integrator::Midpoint) {
            exp_step(psi, generator(t + 0.5 * h), h);
            return;
        }
        const Coefficients g1 = generator(t + kNodeLo * h);
        const Coefficients g2 = generator(t + kNodeHi * h);
        exp_step(psi, g1 * kWeightBig + g2 * kWeightSmall, h);
        exp_step(psi, g1 * kWeightSmall + g2 * kWeightBig, h);
    }

    void double_step(Eigen::VectorXcd& psi, double t, double h) const {
        step(psi, t, 0.5 * h);
        step(psi, t + 0.5 * h, 0.5 * h);
    }

    int order() const { return ctl_.integrator == Integrator::Midpoint ? 2 : 4; }

    /// Moves psi from t to t_end. After each accepted step `hook(t, h, before, psi)`
    /// may modify psi and returns the time the integration resumes from.
    template <class Hook>
    void advance(Eigen::VectorXcd& psi, double t, double t_end, Hook&& hook) {
        const double span_eps = 1e-13 * std::max(1.0, std::abs(t_end));
        Eigen::VectorXcd full, half, before;
        while (t_end - t > span_eps) {
            double h = ctl_.fixed_dt > 0 ? ctl_.fixed_dt : std::min(dt_, ctl_.dt_max);
            const bool clipped = h >= t_end - t - span_eps;
            if (clipped) h = t_end - t;
            if (ctl_.fixed_dt > 0) {
                before = psi;
                step(psi, t, h);
                ++stats.steps;
                t = hook(t, h, before, psi);
                continue;
            }
            full = psi;
            step(full, t, h);
            half = psi;
            double_step(half, t, h);
            const double scale = std::max(std::sqrt(squared_norm(psi)), 1e-300);
            const double err = std::sqrt(squared_norm(full - half)) / scale / ((1 << order()) - 1);
            const double allowed = ctl_.tol * h;
            const double p = order();
            if (err > allowed) {
                ++stats.rejected;
                dt_ = h * std::max(0.2, 0.9 * std::pow(allowed / err, 1.0 / p));
                if (dt_ < ctl_.dt_min)
                    throw IntegrationError("step size fell below " + format_double(ctl_.dt_min) + " at t = " +
                                               format_double(t) + " (error per unit time " +
                                               format_double(err / h) + ")",
                                           err / h);
                continue;
            }
            ++stats.steps;
            stats.max_error = std::max(stats.max_error, err);
            const double grow = err == 0.0 ? 4.0 : std::min(4.0, 0.9 * std::pow(allowed / err, 1.0 / p));
            const double proposal = h * grow;
            dt_ = clipped ? std::max(dt_, proposal) : proposal;
            before.swap(psi);
            psi.swap(half);
            t = hook(t, h, before, psi);
        }
    }

    EvolutionStats stats;

   private:
    const HamiltonianOperator& op_;
    const RampProfile& ramp_;
    Coefficients extra_;
    StepControl ctl_;
    double dt_;
};

std::vector<double> breakpoints(const RampProfile& ramp, const std::vector<double>& extra) {
    std::vector<double> pts = ramp.times;
    for (double t : extra)
        if (t >= 0.0 && t <= ramp.duration()) pts.push_back(t);
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    for (double t : pts)
        if (out.empty() || t - out.back() > 1e-12 * std::max(1.0, ramp.duration())) out.push_back(t);
    return out;
}

void check_inputs(const HamiltonianSpec& spec, const RampProfile& ramp, const StateVector& psi0) {
    ramp.validate();
    require(psi0.basis != nullptr, ErrorKind::Dimension, "initial state has no basis");
    require(spec.n_sites() == psi0.basis->n_sites(), ErrorKind::Dimension,
            "initial state and Hamiltonian site counts differ");
    require(static_cast<std::size_t>(psi0.amplitudes.size()) == psi0.basis->dim(), ErrorKind::Dimension,
            "state length does not match its basis");
}

}  // namespace

StateVector evolve_unitary(const HamiltonianSpec& spec_template, const RampProfile& ramp, const StateVector& psi0,
                           const StepControl& control, const std::vector<double>& sample_times,
                           const SampleCallback& on_sample, EvolutionStats* stats) {
    check_inputs(spec_template, ramp, psi0);
    require(std::abs(psi0.norm() - 1.0) < 1e-8, ErrorKind::Domain, "initial state must be normalized");
    HamiltonianOperator op(spec_template, psi0.basis);
    Stepper stepper(op, ramp, Coefficients{0.0, 0.0, 0.0, 0.0}, control);
    const auto pts = breakpoints(ramp, sample_times);
    auto is_sample = [&](double t) {
        for (double s : sample_times)
            if (std::abs(s - t) <= 1e-12 * std::max(1.0, ramp.duration())) return true;
        return false;
    };
    StateVector psi = psi0;
    if (on_sample && is_sample(pts.front())) on_sample(pts.front(), psi);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        stepper.advance(psi.amplitudes, pts[k], pts[k + 1],
                        [](double t, double h, const Eigen::VectorXcd&, Eigen::VectorXcd&) { return t + h; });
        if (on_sample && is_sample(pts[k + 1])) on_sample(pts[k + 1], psi);
    }
    if (stats) *stats = stepper.stats;
    return psi;
}

StateVector evolve_no_jump(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                           const JumpOperatorSet& jumps, const StateVector& psi0, const StepControl& control) {
    check_inputs(spec_template, ramp, psi0);
    HamiltonianOperator op(spec_template, psi0.basis);
    Stepper stepper(op, ramp, jumps.anti_hermitian_part(spec_template.n_sites()), control);
    StateVector psi = psi0;
    for (std::size_t k = 0; k + 1 < ramp.times.size(); ++k)
        stepper.advance(psi.amplitudes, ramp.times[k], ramp.times[k + 1],
                        [](double t, double h, const Eigen::VectorXcd&, Eigen::VectorXcd&) { return t + h; });
    return psi;
}

TrajectoryResult evolve_trajectory(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                   const JumpOperatorSet& jumps, const StateVector& psi0, std::uint64_t seed,
                                   const StepControl& control) {
    check_inputs(spec_template, ramp, psi0);
    require(std::abs(psi0.norm() - 1.0) < 1e-8, ErrorKind::Domain, "initial state must be normalized");
    const int n = spec_template.n_sites();
    HamiltonianOperator op(spec_template, psi0.basis);
    Stepper stepper(op, ramp, jumps.anti_hermitian_part(n), control);
    Rng rng(seed);
    TrajectoryResult result;
    result.seed = seed;
    const auto channels = jumps.channels();
    double threshold = uniform_open(rng);
    StateVector psi = psi0;

    auto hook = [&](double t, double h, const Eigen::VectorXcd& before, Eigen::VectorXcd& after) -> double {
        if (channels.empty() || squared_norm(after) > threshold) return t + h;
        // Locate the crossing |psi(t + tau)|^2 = threshold by Illinois regula falsi.
        double a = 0.0, fa = squared_norm(before) - threshold;
        double b = h, fb = squared_norm(after) - threshold;
        Eigen::VectorXcd trial;
        Eigen::VectorXcd at_b = after;
        for (int iter = 0; iter < 100 && fa > 0 && fb < 0; ++iter) {
            const double c = b - fb * (b - a) / (fb - fa);
            trial = before;
            stepper.double_step(trial, t, c);
            const double fc = squared_norm(trial) - threshold;
            if (fc * fb < 0) {
                a = b;
                fa = fb;
            } else {
                fa *= 0.5;
            }
            b = c;
            fb = fc;
            at_b = trial;
            if (std::abs(fc) <= 1e-12 * threshold || std::abs(b - a) <= 1e-14 * std::max(1.0, h)) break;
        }
        const double tau = b;
        StateVector cur{psi.basis, std::move(at_b)};

        std::vector<double> w;
        std::vector<std::pair<int, JumpChannel>> which;
        double total = 0.0;
        for (int site = 0; site < n; ++site)
            for (JumpChannel ch : channels) {
                const double x = jump_weight(jumps, ch, site, cur);
                w.push_back(x);
                which.emplace_back(site, ch);
                total += x;
            }
        double u = uniform_open(rng) * total;
        std::size_t pick = w.size() - 1;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (u < w[k]) {
                pick = k;
                break;
            }
            u -= w[k];
        }
        StateVector jumped = apply_jump(jumps, which[pick].second, which[pick].first, cur);
        after = jumped.amplitudes / jumped.norm();
        result.jumps.push_back({t + tau, which[pick].first, which[pick].second});
        threshold = uniform_open(rng);
        return t + tau;
    };

    for (std::size_t k = 0; k + 1 < ramp.times.size(); ++k)
        stepper.advance(psi.amplitudes, ramp.times[k], ramp.times[k + 1], hook);
    result.final_state = psi.normalized();
    return result;
}

Eigen::VectorXd site_occupations(const StateVector& psi) {
    const BasisSpace& b = *psi.basis;
    const int n = b.n_sites();
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(n);
    double norm = 0.0;
    for (std::size_t k = 0; k < b.dim(); ++k) {
        const double p = std::norm(psi.amplitudes[static_cast<Eigen::Index>(k)]);
        norm += p;
        for (std::uint64_t s = b.state(k); s; s &= s - 1) occ[std::countr_zero(s)] += p;
    }
    return occ / norm;
}

TrajectoryEnsemble run_trajectories(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                    const JumpOperatorSet& jumps, const StateVector& psi0, int count,
                                    std::uint64_t master_seed, const StepControl& control) {
    require(count >= 1, ErrorKind::Domain, "need at least one trajectory");
    TrajectoryEnsemble ens;
    ens.master_seed = master_seed;
    ens.runs.resize(count);
    std::vector<std::string> errors(count);
    std::vector<double> achieved(count, -1.0);
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < count; ++k) {
        try {
            ens.runs[k] = evolve_trajectory(spec_template, ramp, jumps, psi0,
                                            derive_seed(master_seed, static_cast<std::uint64_t>(k)), control);
        } catch (const IntegrationError& e) {
            errors[k] = e.what();
            achieved[k] = e.achieved_tolerance();
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (int k = 0; k < count; ++k) {
        if (errors[k].empty()) continue;
        const std::string msg = "trajectory " + std::to_string(k) + ": " + errors[k];
        if (achieved[k] >= 0) throw IntegrationError(msg, achieved[k]);
        fail(ErrorKind::Integration, msg);
    }
    return ens;
}

Eigen::VectorXd TrajectoryEnsemble::mean_occupation() const {
    require(!runs.empty(), ErrorKind::Domain, "empty ensemble");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(runs.front().final_state.basis->n_sites());
    for (const auto& r : runs) acc += site_occupations(r.final_state);
    return acc / static_cast<double>(runs.size());
}

Eigen::VectorXd TrajectoryEnsemble::stderr_occupation() const {
    const Eigen::VectorXd mean = mean_occupation();
    const auto m = static_cast<double>(runs.size());
    if (runs.size() < 2) return Eigen::VectorXd::Zero(mean.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
    for (const auto& r : runs) var += (site_occupations(r.final_state) - mean).array().square().matrix();
    return (var / (m - 1) / m).cwiseSqrt();
}

nlohmann::json TrajectoryEnsemble::summary() const {
    nlohmann::json j;
    const Eigen::VectorXd mean = mean_occupation();
    const Eigen::VectorXd se = stderr_occupation();
    j["trajectories"] = runs.size();
    j["master_seed"] = master_seed;
    j["mean_occupation"] = std::vector<double>(mean.data(), mean.data() + mean.size());
    j["stderr_occupation"] = std::vector<double>(se.data(), se.data() + se.size());
    std::size_t decay = 0, scatter = 0;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : runs) {
        seeds.push_back(r.seed);
        for (const auto& e : r.jumps) (e.channel == JumpChannel::Decay ? decay : scatter) += 1;
    }
    j["jumps"] = {{"decay", decay},
                  {"scatter", scatter},
                  {"mean_per_trajectory", static_cast<double>(decay + scatter) / static_cast<double>(runs.size())}};
    j["seeds"] = seeds;
    return j;
}

// ---------------------------------------------------------------------------
// Lindblad reference

Eigen::VectorXd density_occupations(const Eigen::MatrixXcd& rho) {
    const auto d = rho.rows();
    const int n = std::countr_zero(static_cast<std::uint64_t>(d));
    require((Eigen::Index{1} << n) == d, ErrorKind::Dimension, "density matrix dimension is not a power of two");
    Eigen::VectorXd occ = Eigen::VectorXd::Zero(n);
    for (Eigen::Index s = 0; s < d; ++s)
        for (int i = 0; i < n; ++i)
            if ((s >> i) & 1) occ[i] += rho(s, s).real();
    return occ;
}

Eigen::MatrixXcd lindblad_exact(const HamiltonianSpec& spec_template, const RampProfile& ramp,
                                const JumpOperatorSet& jumps, const Eigen::MatrixXcd& rho0, double rel_tol,
                                double abs_tol) {
    const int n = spec_template.n_sites();
    require(n >= 1 && n <= kMaxLindbladSites, ErrorKind::Capacity,
            "dense master equation limited to " + std::to_string(kMaxLindbladSites) + " sites, got " +
                std::to_string(n));
    ramp.validate();
    const Eigen::Index d = Eigen::Index{1} << n;
    require(rho0.rows() == d && rho0.cols() == d, ErrorKind::Dimension, "rho0 dimension mismatch");

    Eigen::Matrix2cd x;
    x << 0.0, 1.0, 1.0, 0.0;
    Eigen::MatrixXcd x_sum = Eigen::MatrixXcd::Zero(d, d);
    Eigen::VectorXd n_sum = Eigen::VectorXd::Zero(d);
    std::vector<Eigen::MatrixXcd> ops;
    Eigen::MatrixXcd loss = Eigen::MatrixXcd::Zero(d, d);
    for (int i = 0; i < n; ++i) {
        x_sum += embed_site_operator(n, i, x);
        n_sum += occupation_diagonal(n, i);
        for (JumpChannel ch : jumps.channels()) {
            ops.push_back(embed_site_operator(n, i, jumps.site_operator(ch)));
            loss += ops.back().adjoint() * ops.back();
        }
    }
    const Eigen::VectorXd v_diag = dense_hamiltonian(spec_template.with_omega(0.0).with_delta(0.0)).diagonal();

    using State = std::vector<double>;
    auto rhs = [&](const State& s, State& ds, double t) {
        Eigen::Map<const Eigen::MatrixXcd> rho(reinterpret_cast<const cd*>(s.data()), d, d);
        Eigen::Map<Eigen::MatrixXcd> drho(reinterpret_cast<cd*>(ds.data()), d, d);
        Eigen::MatrixXcd h = (0.5 * ramp.omega_at(t)) * x_sum;
        h.diagonal() += (v_diag - ramp.delta_at(t) * n_sum).cast<cd>();
        const Eigen::MatrixXcd heff = h - cd(0.0, 0.5) * loss;
        Eigen::MatrixXcd out = cd(0.0, -1.0) * (heff * rho - rho * heff.adjoint());
        for (const auto& c : ops) out += c * rho * c.adjoint();
        drho = out;
    };

    State state(static_cast<std::size_t>(2 * d * d));
    Eigen::Map<Eigen::MatrixXcd>(reinterpret_cast<cd*>(state.data()), d, d) = rho0;
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(abs_tol, rel_tol);
    for (std::size_t k = 0; k + 1 < ramp.times.size(); ++k) {
        const double t0 = ramp.times[k];
        const double t1 = ramp.times[k + 1];
        ode::integrate_adaptive(stepper, rhs, state, t0, t1, std::min(1e-3, t1 - t0));
    }
    return Eigen::Map<Eigen::MatrixXcd>(reinterpret_cast<cd*>(state.data()), d, d);
}

}  // namespace rydcrit
