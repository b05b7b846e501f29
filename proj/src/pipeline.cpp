#include "rydcrit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <map>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/parallel.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

using nlohmann::json;

PipelineSeeds PipelineSeeds::from_master(std::uint64_t master) {
    return {derive_seed(master, 1), derive_seed(master, 2), derive_seed(master, 3),
            derive_seed(master, 4), derive_seed(master, 5), derive_seed(master, 6)};
}

json PipelineSeeds::to_json() const {
    return {{"trajectories", trajectories}, {"sampling", sampling}, {"detection", detection},
            {"holes", holes},               {"disorder", disorder}, {"bootstrap", bootstrap}};
}

namespace {

constexpr const char* kBlockadeApprox = "blockade_truncated_basis";

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = n == 1 ? lo : lo + (hi - lo) * k / (n - 1);
    return v;
}

DisorderSample restrict_disorder(const DisorderSample& d, const std::vector<bool>& removed) {
    std::vector<int> keep;
    for (std::size_t i = 0; i < removed.size(); ++i)
        if (!removed[i]) keep.push_back(static_cast<int>(i));
    DisorderSample out;
    out.v_scale_factors.resize(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a) {
        out.displaced_coords.push_back(d.displaced_coords[keep[a]]);
        for (std::size_t b = 0; b < keep.size(); ++b) out.v_scale_factors(a, b) = d.v_scale_factors(keep[a], keep[b]);
    }
    return out;
}

bool has_detection_errors(const DetectionModel& m) { return m.eta0 < 1.0 || m.eps_det > 0.0; }

/// Shared state of one CLI invocation; products are computed lazily so each
/// command pulls in exactly its prerequisites.
class Run {
   public:
    Run(const ExperimentConfig& config, const RunOptions& options, std::string command)
        : cfg_(config),
          opt_(options),
          command_(std::move(command)),
          hash_(config.hash()),
          seeds_(PipelineSeeds::from_master(config.seed)),
          lattice_(config.build_lattice()),
          template_(config.build_template(lattice_)),
          started_(std::chrono::steady_clock::now()) {
        std::filesystem::create_directories(opt_.out_dir);
    }

    template <class F>
    auto stage(const char* name, F&& f) -> decltype(f()) {
        try {
            return f();
        } catch (const Error& e) {
            const std::string msg = e.what();
            if (msg.rfind("stage ", 0) == 0) throw;
            throw Error(e.kind(), std::string("stage ") + name + ": " + msg);
        }
    }

    const GapProfile& gap() {
        if (!gap_) stage("gap-scan", [&] { compute_gap(); });
        return *gap_;
    }

    const RampProfile& ramp() {
        if (!ramp_) stage("ramp", [&] { compute_ramp(); });
        return *ramp_;
    }

    const SnapshotSet& snapshots() {
        if (!snaps_) stage("prepare", [&] { compute_snapshots(); });
        return *snaps_;
    }

    json analyze() {
        return stage("analyze", [&] { return compute_analysis(); });
    }

    json kz() {
        return stage("kz", [&] { return compute_kz(); });
    }

    RunReport finish(json summary) {
        write_json("config.json", cfg_.to_json());
        if (opt_.plot_data) {
            std::string body = "dataset,series,x,y\n";
            for (const auto& r : plot_rows_) body += r;
            write_csv("plot_data.csv", body);
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
        json files = json::array();
        for (const auto& [name, digest] : files_) files.push_back({{"path", name}, {"sha256", digest.first}, {"bytes", digest.second}});
        char stamp[32];
        const std::time_t now = std::time(nullptr);
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        const json manifest{{"tool", "rydcrit"},
                            {"version", kToolVersion},
                            {"command", command_},
                            {"config_name", cfg_.name},
                            {"config_hash", hash_},
                            {"master_seed", cfg_.seed},
                            {"seeds", seeds_.to_json()},
                            {"threads", max_threads()},
                            {"files", files},
                            {"wall_time_s", wall},
                            {"finished_utc", stamp}};
        write_text_file(opt_.out_dir / "manifest.json", manifest.dump(2) + "\n");

        RunReport report;
        report.command = command_;
        report.config_hash = hash_;
        for (const auto& f : files_) report.files.push_back(f.first);
        report.summary = std::move(summary);
        return report;
    }

   private:
    // -- output -------------------------------------------------------------

    void write(const std::string& name, const std::string& body) {
        write_text_file(opt_.out_dir / name, body);
        files_[name] = {sha256_hex(body), body.size()};
    }

    void write_json(const std::string& name, json j) {
        j["config_hash"] = hash_;
        if (blockade_basis()) j["approximations"] = {kBlockadeApprox};
        write(name, j.dump(2) + "\n");
    }

    void write_csv(const std::string& name, const std::string& body) {
        std::string head = "# config_hash " + hash_ + "\n";
        if (blockade_basis()) head += std::string("# approximation ") + kBlockadeApprox + "\n";
        write(name, head + body);
    }

    void plot(const std::string& dataset, const std::string& series, double x, double y) {
        plot_rows_.push_back(csv_row({dataset, series, format_double(x), format_double(y)}));
    }

    // -- shared helpers -------------------------------------------------------

    bool blockade_basis() const { return cfg_.hamiltonian.basis == "blockade"; }

    BasisPtr basis_for(const Lattice& lat) const {
        if (cfg_.hamiltonian.basis == "blockade")
            return BasisSpace::blockade_truncated(lat, cfg_.blockade_radius_over_a() * cfg_.lattice.spacing);
        return BasisSpace::full(lat.n_sites());
    }

    StateVector initial_state(const HamiltonianSpec& spec, const BasisPtr& basis, const RampProfile& r) const {
        if (cfg_.ramp.omega_turn_on_us > 0) return StateVector::basis_state(basis, 0);
        EigenOptions eo;
        eo.basis = basis;
        return ground_state(spec.with_delta(r.deltas.front()).with_omega(r.omegas.front()), eo).state;
    }

    // -- gap scan -------------------------------------------------------------

    void compute_gap() {
        const double w = cfg_.omega();
        EigenOptions eo;
        eo.basis = basis_for(lattice_);
        if (cfg_.gap_scan.symmetric_sector) eo.symmetries = lattice_.symmetry_permutations();
        gap_ = gap_profile(template_, linspace(cfg_.gap_scan.delta_min * w, cfg_.gap_scan.delta_max * w,
                                               cfg_.gap_scan.points),
                           eo);
        const double dmin = gap_->minimum_location();
        write_csv("gap_profile.csv", gap_->to_csv());
        write_json("gap_scan.json", {{"omega", w},
                                     {"minimum_location", dmin},
                                     {"minimum_location_over_omega", dmin / w},
                                     {"gap_at_minimum", gap_->gap_at(dmin)},
                                     {"interior_minimum", gap_->has_interior_minimum()},
                                     {"symmetric_sector", cfg_.gap_scan.symmetric_sector},
                                     {"basis_dim", eo.basis->dim()}});
        for (std::size_t k = 0; k < gap_->size(); ++k) plot("gap", "gap", gap_->delta_grid[k], gap_->gaps[k]);
    }

    // -- ramp -----------------------------------------------------------------

    void compute_ramp() {
        const auto& rc = cfg_.ramp;
        const double w = cfg_.omega();
        const double d0 = rc.delta_start * w;
        const GapProfile& prof = gap();
        const double target = rc.delta_end ? *rc.delta_end * w : prof.minimum_location();
        RampProfile r;
        if (rc.kind == "lila_discrete") {
            r = lila_ramp_discrete(prof, d0, target, rc.total_time_us, rc.points, w);
        } else if (rc.kind == "lila_analytic") {
            r = lila_ramp_analytic(prof.gap_at(d0), prof.gap_at(target), d0, target, rc.total_time_us, rc.points, w);
        } else {
            r = linear_ramp(d0, target, cfg_.rate_to_rad(rc.rate_mhz_per_us), w);
        }
        if (rc.omega_turn_on_us > 0) r = with_omega_turn_on(r, rc.omega_turn_on_us);
        ramp_ = r;

        json adiab = nullptr;
        const double lo = prof.delta_grid.front(), hi = prof.delta_grid.back();
        if (std::min(d0, target) >= lo && std::max(d0, target) <= hi) {
            const auto rep = adiabaticity_check(r, prof);
            adiab = {{"min_gamma", rep.min_gamma},
                     {"max_gamma", rep.max_gamma},
                     {"argmin_time", rep.argmin_time},
                     {"warnings", rep.warnings}};
        }
        write_csv("ramp.csv", r.to_csv());
        write_json("ramp.json", {{"kind", rc.kind},
                                 {"delta_start", d0},
                                 {"delta_target", target},
                                 {"delta_target_over_omega", target / w},
                                 {"duration", r.duration()},
                                 {"knots", r.times.size()},
                                 {"adiabaticity", adiab}});
        for (std::size_t k = 0; k < r.times.size(); ++k) plot("ramp", "delta", r.times[k], r.deltas[k]);
    }

    // -- preparation ----------------------------------------------------------

    void compute_snapshots() {
        const RampProfile& r = ramp();
        const auto& mc = cfg_.measurement;
        const int spt = mc.shots_per_trajectory;
        const int units = mc.shots / spt;
        const StepControl ctl = cfg_.step_control();
        const JumpOperatorSet jumps = make_jump_set(cfg_.jump_params());
        const bool open = cfg_.decoherence_enabled();
        json info{{"shots_requested", mc.shots},
                  {"shots_per_trajectory", spt},
                  {"decoherence", cfg_.decoherence.mode},
                  {"gamma_scatt", jumps.gamma_scatt},
                  {"gamma_decay", jumps.params.gamma_decay}};

        std::optional<SnapshotSet> raw;
        if (mc.loss_probability == 0.0 && !cfg_.disorder_enabled()) {
            const BasisPtr basis = basis_for(lattice_);
            const StateVector psi0 = initial_state(template_, basis, r);
            if (!open) {
                EvolutionStats st;
                const StateVector psi = evolve_unitary(template_, r, psi0, ctl, {}, {}, &st);
                const Eigen::VectorXd occ = site_occupations(psi);
                info["exact_occupation"] = std::vector<double>(occ.data(), occ.data() + occ.size());
                info["evolution_steps"] = st.steps;
                if (cfg_.lattice.geometry == "ring" && cfg_.analysis.field == "sigma") exact_state_ = psi;
                raw = sample_snapshots(psi, lattice_, mc.shots, seeds_.sampling);
            } else {
                const auto ens = run_trajectories(template_, r, jumps, psi0, units, seeds_.trajectories, ctl);
                info["ensemble"] = ens.summary();
                if (cfg_.decoherence.lindblad_check) lindblad_check(ens, jumps, psi0, r);
                raw = sample_snapshots(ens, lattice_, seeds_.sampling, spt);
            }
            info["distinct_evolutions"] = 1;
        } else {
            raw = prepare_realizations(r, jumps, units, spt, info);
        }

        SnapshotSet s = *raw;
        if (blockade_basis()) {
            SnapshotProvenance p = s.provenance();
            p.approximations.push_back(kBlockadeApprox);
            s = SnapshotSet(s.lattice(), s.records(), std::move(p));
        }
        if (has_detection_errors(mc.detection)) s = apply_detection_errors(s, mc.detection, seeds_.detection);
        if (mc.postselect) s = postselect_blockade(s, cfg_.postselect_radius());
        info["shots"] = s.shots();
        info["rejection_fraction"] = s.rejection_fraction();
        const auto dens = rydberg_density(s);
        info["mean_density"] = dens.global;
        info["mean_density_stderr"] = dens.global_stderr;
        std::string dcsv = "site,mean_n,stderr\n";
        for (int i = 0; i < s.n_sites(); ++i)
            dcsv += csv_row({std::to_string(i), format_double(dens.per_site[i]), format_double(dens.per_site_stderr[i])});
        write("snapshots.txt", s.to_text());
        write_csv("density.csv", dcsv);
        write_json("prepare.json", info);
        snaps_ = std::move(s);
    }

    /// Per-unit hole patterns and disorder draws. Units sharing a pattern and
    /// draw share one closed-system evolution.
    SnapshotSet prepare_realizations(const RampProfile& r, const JumpOperatorSet& jumps, int units, int spt,
                                     json& info) {
        const auto& mc = cfg_.measurement;
        const int n = lattice_.n_sites();
        const bool open = cfg_.decoherence_enabled();
        const StepControl ctl = cfg_.step_control();

        std::vector<std::vector<bool>> removed(units, std::vector<bool>(n, false));
        std::vector<int> draw(units, 0);
        std::map<std::pair<std::vector<bool>, int>, int> slot_of;
        std::vector<int> slot(units);
        std::vector<std::pair<std::vector<bool>, int>> keys;
        for (int u = 0; u < units; ++u) {
            if (mc.loss_probability > 0) removed[u] = sample_holes(n, mc.loss_probability, derive_seed(seeds_.holes, u));
            if (cfg_.disorder_enabled()) draw[u] = u % cfg_.disorder.realizations;
            auto key = std::make_pair(removed[u], draw[u]);
            auto it = slot_of.find(key);
            if (it == slot_of.end()) {
                it = slot_of.emplace(key, static_cast<int>(keys.size())).first;
                keys.push_back(key);
            }
            slot[u] = it->second;
        }

        std::vector<DisorderSample> draws;
        if (cfg_.disorder_enabled())
            for (int k = 0; k < cfg_.disorder.realizations; ++k)
                draws.push_back(sample_disorder(lattice_, cfg_.disorder.coupling_sigma, cfg_.disorder.thermal,
                                                derive_seed(seeds_.disorder, k)));

        const int n_slots = static_cast<int>(keys.size());
        std::vector<std::optional<Lattice>> lats(n_slots);
        std::vector<std::optional<HamiltonianSpec>> specs(n_slots);
        std::vector<std::optional<StateVector>> initial(n_slots), final(n_slots);
        std::vector<std::exception_ptr> errors(std::max(n_slots, units));

#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < n_slots; ++k) {
            try {
                const auto& [mask, d] = keys[k];
                if (std::count(mask.begin(), mask.end(), false) == 0) continue;
                const Lattice lat = lattice_.without_sites(mask);
                std::optional<DisorderSample> ds;
                if (!draws.empty()) ds = restrict_disorder(draws[d], mask);
                const HamiltonianSpec spec = cfg_.build_template(lat, ds ? &*ds : nullptr);
                const StateVector psi0 = initial_state(spec, basis_for(lat), r);
                if (!open) final[k] = evolve_unitary(spec, r, psi0, ctl);
                lats[k] = lat;
                specs[k] = spec;
                initial[k] = psi0;
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        BitMatrix rec(static_cast<Eigen::Index>(units) * spt, n);
        long total_jumps = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : total_jumps)
        for (int u = 0; u < units; ++u) {
            try {
                const int k = slot[u];
                std::vector<std::uint8_t> reduced;
                if (!lats[k]) {
                    for (int m = 0; m < spt; ++m)
                        for (int i = 0; i < n; ++i) rec(u * spt + m, i) = 1;
                    continue;
                }
                StateVector psi;
                if (open) {
                    auto tr = evolve_trajectory(*specs[k], r, jumps, *initial[k], derive_seed(seeds_.trajectories, u), ctl);
                    total_jumps += static_cast<long>(tr.jumps.size());
                    psi = std::move(tr.final_state);
                } else {
                    psi = *final[k];
                }
                const SnapshotSet sub = sample_snapshots(psi, *lats[k], spt, derive_seed(seeds_.sampling, u));
                for (int m = 0; m < spt; ++m) {
                    reduced.assign(sub.records().row(m).data(), sub.records().row(m).data() + sub.n_sites());
                    const auto full = embed_hole_shot(reduced, removed[u]);
                    for (int i = 0; i < n; ++i) rec(u * spt + m, i) = full[i];
                }
            } catch (...) {
                errors[u] = std::current_exception();
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        info["distinct_evolutions"] = n_slots;
        if (open) info["total_jumps"] = total_jumps;
        SnapshotProvenance p;
        p.source = open ? "ensemble" : "state";
        p.seed = seeds_.sampling;
        p.shots_per_trajectory = spt;
        p.loss_probability = mc.loss_probability;
        return SnapshotSet(lattice_, std::move(rec), p);
    }

    void lindblad_check(const TrajectoryEnsemble& ens, const JumpOperatorSet& jumps, const StateVector& psi0,
                        const RampProfile& r) {
        if (!psi0.basis->is_full()) fail(ErrorKind::Capacity, "lindblad_check needs the full basis");
        const Eigen::MatrixXcd rho0 = psi0.amplitudes * psi0.amplitudes.adjoint();
        const Eigen::VectorXd exact = density_occupations(lindblad_exact(template_, r, jumps, rho0));
        const Eigen::VectorXd mean = ens.mean_occupation();
        const Eigen::VectorXd se = ens.stderr_occupation();
        std::vector<double> z(exact.size());
        bool ok = true;
        for (Eigen::Index i = 0; i < exact.size(); ++i) {
            z[i] = se[i] > 0 ? (mean[i] - exact[i]) / se[i] : (mean[i] == exact[i] ? 0.0 : INFINITY);
            ok = ok && std::abs(z[i]) <= 3.0;
        }
        write_json("lindblad_check.json",
                   {{"trajectories", ens.runs.size()},
                    {"trajectory_mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                    {"trajectory_stderr", std::vector<double>(se.data(), se.data() + se.size())},
                    {"lindblad", std::vector<double>(exact.data(), exact.data() + exact.size())},
                    {"z_scores", z},
                    {"within_3_sigma", ok}});
    }

    // -- analysis -------------------------------------------------------------

    json compute_analysis() {
        std::optional<SnapshotSet> loaded;
        if (opt_.snapshots) {
            loaded = SnapshotSet::from_text(read_text_file(*opt_.snapshots));
            if (loaded->lattice().hash() != lattice_.hash())
                fail(ErrorKind::Config, "snapshot lattice does not match the configured lattice");
        }
        const SnapshotSet& s = loaded ? *loaded : snapshots();
        const auto& ac = cfg_.analysis;
        const Field field = field_from_string(ac.field);
        const FitOptions fopt = cfg_.fit_options();
        const DensityEstimate dens = rydberg_density(s);

        json out{{"field", ac.field},
                 {"connected", ac.connected},
                 {"shots", s.shots()},
                 {"mean_n", dens.global},
                 {"bootstrap_replicates", ac.bootstrap}};
        if (exact_state_ && !loaded) {
            const auto ex = two_point(*exact_state_, lattice_, field, Region::All, {}, ac.connected);
            write_csv("correlator_exact.csv", ex.to_csv());
        }
        json regions = json::array();
        std::uint64_t stream = 0;
        for (const auto& rname : ac.regions) {
            const Region region = region_from_string(rname);
            CorrelatorSeries series = two_point(s, field, region, {}, ac.connected);
            BootstrapOptions bo;
            bo.replicates = ac.bootstrap;
            bo.seed = derive_seed(seeds_.bootstrap, stream++);
            if (ac.bootstrap > 0) {
                const auto corr_boot = bootstrap(
                    s, [&](const SnapshotSet& x) { return two_point(x, field, region, {}, ac.connected).values; }, bo);
                for (std::size_t k = 0; k < series.size(); ++k) series.stderr[k] = corr_boot[k].std;
            }
            write_csv("correlator_" + rname + ".csv", series.to_csv());
            for (std::size_t k = 0; k < series.size(); ++k)
                plot("correlator", rname, series.distances[k], series.values[k]);

            const ScalarEstimate order = order_parameter(s, field, region);
            json rj{{"region", rname},
                    {"order_parameter", order.value},
                    {"order_parameter_stderr", order.stderr},
                    {"correlator_file", "correlator_" + rname + ".csv"}};
            json fits = json::array();
            std::string best;
            double best_bic = INFINITY;
            for (const auto& mname : ac.models) {
                const FitModel model = fit_model_from_string(mname);
                json fj{{"model", mname}};
                try {
                    const FitResult fit = fit_correlator(series, model, fopt);
                    fj["fit"] = fit.to_json();
                    if (fit.bic < best_bic) best_bic = fit.bic, best = mname;
                    for (double d : fit.distances) plot("fit_" + mname, rname, d, evaluate_model(model, fit.params, d));
                    if (ac.bootstrap > 0) {
                        bo.seed = derive_seed(seeds_.bootstrap, stream++);
                        const std::vector<double> weights = series.stderr;
                        const auto boot = bootstrap(
                            s,
                            [&](const SnapshotSet& x) {
                                CorrelatorSeries cs = two_point(x, field, region, {}, ac.connected);
                                cs.stderr = weights;
                                const FitResult f = fit_correlator(cs, model, fopt);
                                return std::vector<double>{f.params.scaling_dim,
                                                           std::isfinite(f.params.xi) ? 1.0 / f.params.xi : 0.0,
                                                           f.params.temperature};
                            },
                            bo);
                        fj["bootstrap"] = {{"scaling_dim", boot[0].to_json()},
                                           {"inverse_xi", boot[1].to_json()},
                                           {"temperature", boot[2].to_json()}};
                        const double sd_boot = 0.5 * (boot[0].lower_error() + boot[0].upper_error());
                        fj["scaling_dim_total_error"] = std::hypot(fit.stderr.scaling_dim, sd_boot);
                    } else {
                        fj["scaling_dim_total_error"] = fit.stderr.scaling_dim;
                    }
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::DegenerateFit) throw;
                    fj["error"] = e.what();
                }
                fits.push_back(fj);
            }
            rj["fits"] = fits;
            rj["best_model_by_bic"] = best.empty() ? json(nullptr) : json(best);
            regions.push_back(rj);
        }
        out["regions"] = regions;
        write_json("fits.json", out);
        return out;
    }

    // -- rate scan ------------------------------------------------------------

    json compute_kz() {
        const auto& kc = cfg_.kz;
        const double w = cfg_.omega();
        const double lo = kc.delta_min * w, hi = kc.delta_max * w;
        const double sweep_lo = kc.sweep_min.value_or(kc.delta_min) * w;
        const double sweep_hi = kc.sweep_max.value_or(kc.delta_max) * w;
        std::vector<double> rates;
        for (double r : kc.rates_mhz_per_us) rates.push_back(cfg_.rate_to_rad(r));
        require(rates.size() >= 2, ErrorKind::Config, "kz.rates_mhz_per_us: needs at least two rates");

        EigenOptions eo;
        eo.basis = basis_for(lattice_);
        const SweepSimulator sim = unitary_sweep_simulator(template_, sweep_lo, sweep_hi, eo, cfg_.step_control());
        KzOptions ko;
        ko.deltas = linspace(lo, hi, kc.points);
        ko.backward = kc.backward;
        ko.susceptibility = kc.susceptibility;
        ko.monotone_tolerance = kc.monotone_tolerance * w;
        ko.plateau_tolerance = kc.plateau_tolerance * w;

        // All sweeps are independent; run them up front in parallel.
        const int dirs = kc.backward ? 2 : 1;
        const int tasks = static_cast<int>(rates.size()) * dirs;
        std::vector<std::vector<double>> curves(tasks);
        std::vector<std::exception_ptr> errors(tasks);
#pragma omp parallel for schedule(dynamic)
        for (int t = 0; t < tasks; ++t) {
            try {
                curves[t] = sim(rates[t / dirs], t % dirs == 1, ko.deltas);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
        for (std::size_t t = 0; t < errors.size(); ++t)
            if (errors[t]) {
                try {
                    std::rethrow_exception(errors[t]);
                } catch (const Error& e) {
                    throw Error(e.kind(), "rate " + format_double(rates[t / dirs]) + ": " + e.what());
                }
            }
        const SweepSimulator cached = [&](double rate, bool backward, const std::vector<double>&) {
            for (std::size_t k = 0; k < rates.size(); ++k)
                if (rates[k] == rate) return curves[k * dirs + (backward ? 1 : 0)];
            fail(ErrorKind::Domain, "rate not precomputed");
        };
        const KzScanResult res = kz_rate_scan(cached, rates, ko);

        const double gmin = gap().minimum_location();
        const double slow = res.points.back().forward.delta_max;
        json j = res.to_json();
        j["rates_mhz_per_us"] = kc.rates_mhz_per_us;
        j["omega"] = w;
        j["gap_minimum"] = gmin;
        j["slowest_forward_delta_max"] = slow;
        j["slowest_minus_gap_minimum_over_omega"] = (slow - gmin) / w;
        write_csv("kz_scan.csv", res.to_csv());
        write_json("kz_scan.json", j);

        std::string curves_csv = "rate,direction,delta,mean_n,smoothed\n";
        std::string chi_csv = "rate,direction,delta,interpolated,chi_raw,chi\n";
        auto append = [](std::string& dst, const std::string& body, const std::string& prefix) {
            std::size_t pos = body.find('\n') + 1;
            while (pos < body.size()) {
                const std::size_t end = body.find('\n', pos);
                dst += prefix + body.substr(pos, end - pos + 1);
                pos = end + 1;
            }
        };
        for (const auto& p : res.points) {
            const std::string rate = format_double(p.rate) + ",";
            append(curves_csv, p.forward.coarse_csv(), rate + "forward,");
            append(chi_csv, p.forward.fine_csv(), rate + "forward,");
            plot("kz_delta_max", "forward", p.rate, p.forward.delta_max);
            if (p.backward) {
                append(curves_csv, p.backward->coarse_csv(), rate + "backward,");
                append(chi_csv, p.backward->fine_csv(), rate + "backward,");
                plot("kz_delta_max", "backward", p.rate, p.backward->delta_max);
            }
        }
        write_csv("kz_density.csv", curves_csv);
        write_csv("kz_susceptibility.csv", chi_csv);
        return j;
    }

    const ExperimentConfig& cfg_;
    RunOptions opt_;
    std::string command_;
    std::string hash_;
    PipelineSeeds seeds_;
    Lattice lattice_;
    HamiltonianSpec template_;
    std::chrono::steady_clock::time_point started_;

    std::optional<GapProfile> gap_;
    std::optional<RampProfile> ramp_;
    std::optional<SnapshotSet> snaps_;
    std::optional<StateVector> exact_state_;
    std::map<std::string, std::pair<std::string, std::size_t>> files_;
    std::vector<std::string> plot_rows_;
};

}  // namespace

RunReport run_gap_scan(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "gap-scan");
    const GapProfile& g = run.gap();
    return run.finish({{"minimum_location", g.minimum_location()}, {"points", g.size()}});
}

RunReport run_ramp(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "ramp");
    const RampProfile& r = run.ramp();
    return run.finish({{"duration", r.duration()}, {"knots", r.times.size()}});
}

RunReport run_prepare(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "prepare");
    const SnapshotSet& s = run.snapshots();
    return run.finish({{"shots", s.shots()}, {"rejection_fraction", s.rejection_fraction()}});
}

RunReport run_analyze(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "analyze");
    json a = run.analyze();
    return run.finish(std::move(a));
}

RunReport run_kz(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "kz");
    json k = run.kz();
    return run.finish({{"forward_monotone", k["forward_monotone"]},
                       {"backward_inverse", k["backward_inverse"]},
                       {"plateau_reached", k["plateau_reached"]}});
}

RunReport run_pipeline(const ExperimentConfig& config, const RunOptions& options) {
    Run run(config, options, "pipeline");
    json summary;
    summary["gap_minimum"] = run.gap().minimum_location();
    summary["ramp_duration"] = run.ramp().duration();
    summary["shots"] = run.snapshots().shots();
    summary["analysis"] = run.analyze();
    if (config.kz.enabled) {
        json k = run.kz();
        summary["kz"] = {{"forward_monotone", k["forward_monotone"]},
                         {"backward_inverse", k["backward_inverse"]},
                         {"plateau_reached", k["plateau_reached"]}};
    }
    return run.finish(summary);
}

}  // namespace rydcrit
