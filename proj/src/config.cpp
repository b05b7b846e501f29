#include "rydcrit/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <yaml-cpp/yaml.h>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"

namespace rydcrit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
    fail(ErrorKind::Config, path + ": " + msg);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// A YAML mapping whose keys must all be consumed by `finish`.
class Section {
   public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) config_error(display(), "expected a mapping");
    }

    bool has(const std::string& key) {
        allowed_.insert(key);
        return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        out = convert<T>(node_[key], child(key));
    }

    template <class T>
    void read(const std::string& key, std::optional<T>& out) {
        allowed_.insert(key);
        if (!node_ || !node_.IsMap() || !node_[key]) return;
        if (node_[key].IsNull()) {
            out.reset();
            return;
        }
        out = convert<T>(node_[key], child(key));
    }

    template <class T>
    void read(const std::string& key, std::vector<T>& out) {
        if (!has(key)) return;
        const YAML::Node seq = node_[key];
        if (!seq.IsSequence()) config_error(child(key), "expected a list");
        out.clear();
        for (std::size_t i = 0; i < seq.size(); ++i)
            out.push_back(convert<T>(seq[i], child(key) + "[" + std::to_string(i) + "]"));
    }

    Section sub(const std::string& key) {
        allowed_.insert(key);
        return Section(node_ && node_.IsMap() ? node_[key] : YAML::Node(), child(key));
    }

    YAML::Node raw(const std::string& key) {
        allowed_.insert(key);
        return node_ && node_.IsMap() ? node_[key] : YAML::Node();
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    /// Rejects keys that were never asked for.
    void finish() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (allowed_.count(key)) continue;
            std::string msg = "unknown key";
            std::string best;
            std::size_t best_d = 3;
            for (const auto& a : allowed_) {
                const std::size_t d = edit_distance(key, a);
                if (d < best_d) best_d = d, best = a;
            }
            if (!best.empty()) msg += " (did you mean '" + child(best) + "'?)";
            config_error(child(key), msg);
        }
    }

   private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    template <class T>
    static T convert(const YAML::Node& n, const std::string& path) {
        if (!n.IsScalar()) config_error(path, "expected a scalar");
        try {
            if constexpr (std::is_same_v<T, bool>) {
                const std::string s = n.Scalar();
                if (s == "true" || s == "True" || s == "yes") return true;
                if (s == "false" || s == "False" || s == "no") return false;
                config_error(path, "expected true or false, got '" + s + "'");
            } else if constexpr (std::is_same_v<T, std::string>) {
                return n.Scalar();
            } else if constexpr (std::is_integral_v<T>) {
                const std::string s = n.Scalar();
                if (s.find_first_of(".eE") != std::string::npos) config_error(path, "expected an integer");
                return n.as<T>();
            } else {
                const std::string s = n.Scalar();
                if (s == "inf" || s == ".inf") return std::numeric_limits<T>::infinity();
                return n.as<T>();
            }
        } catch (const YAML::Exception&) {
            config_error(path, "cannot convert '" + n.Scalar() + "'");
        }
    }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> allowed_;
};

void check(bool cond, const std::string& path, const std::string& msg) {
    if (!cond) config_error(path, msg);
}

void check_one_of(const std::string& value, std::initializer_list<const char*> options, const std::string& path) {
    std::string list;
    for (const char* o : options) {
        if (value == o) return;
        list += list.empty() ? o : std::string(", ") + o;
    }
    config_error(path, "'" + value + "' is not one of: " + list);
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::Config, std::string("YAML syntax error: ") + e.what());
    }
    if (!root || root.IsNull()) fail(ErrorKind::Config, "empty config");

    ExperimentConfig c;
    Section top(root, "");

    int version = 0;
    if (!top.has("schema_version")) config_error("schema_version", "missing");
    top.read("schema_version", version);
    check(version == kConfigSchemaVersion, "schema_version",
          "unsupported version " + std::to_string(version) + " (expected " + std::to_string(kConfigSchemaVersion) + ")");
    top.read("name", c.name);
    top.read("seed", c.seed);

    {
        auto s = top.sub("lattice");
        s.read("geometry", c.lattice.geometry);
        s.read("sites", c.lattice.sites);
        s.read("nx", c.lattice.nx);
        s.read("ny", c.lattice.ny);
        s.read("spacing", c.lattice.spacing);
        s.finish();
    }
    {
        auto s = top.sub("hamiltonian");
        s.read("omega_mhz", c.hamiltonian.omega_mhz);
        const bool has_rb = s.has("blockade_radius");
        const bool has_c6 = s.has("c6");
        if (has_rb && has_c6) config_error(s.child("c6"), "give either blockade_radius or c6, not both");
        if (has_c6) {
            c.hamiltonian.blockade_radius.reset();
            s.read("c6", c.hamiltonian.c6);
        } else {
            s.read("blockade_radius", c.hamiltonian.blockade_radius);
        }
        s.read("interaction_cutoff", c.hamiltonian.interaction_cutoff);
        s.read("basis", c.hamiltonian.basis);
        s.read("max_full_sites", c.hamiltonian.max_full_sites);
        s.finish();
    }
    {
        auto s = top.sub("gap_scan");
        s.read("delta_min", c.gap_scan.delta_min);
        s.read("delta_max", c.gap_scan.delta_max);
        s.read("points", c.gap_scan.points);
        s.read("symmetric_sector", c.gap_scan.symmetric_sector);
        s.finish();
    }
    {
        auto s = top.sub("ramp");
        s.read("kind", c.ramp.kind);
        s.read("delta_start", c.ramp.delta_start);
        if (s.has("delta_end")) {
            const YAML::Node n = s.raw("delta_end");
            if (n.IsScalar() && n.Scalar() == "gap_minimum")
                c.ramp.delta_end.reset();
            else
                s.read("delta_end", c.ramp.delta_end);
        }
        s.read("total_time_us", c.ramp.total_time_us);
        s.read("points", c.ramp.points);
        s.read("rate_mhz_per_us", c.ramp.rate_mhz_per_us);
        s.read("omega_turn_on_us", c.ramp.omega_turn_on_us);
        s.finish();
    }
    {
        auto s = top.sub("decoherence");
        s.read("mode", c.decoherence.mode);
        s.read("scale", c.decoherence.scale);
        s.read("lindblad_check", c.decoherence.lindblad_check);
        auto cu = s.sub("custom");
        double omega_blue_mhz = c.decoherence.custom.omega_blue / kTwoPi;
        double omega_ir_mhz = c.decoherence.custom.omega_ir / kTwoPi;
        double delta_int_mhz = c.decoherence.custom.delta_int / kTwoPi;
        double gamma_e_mhz = c.decoherence.custom.gamma_e / kTwoPi;
        cu.read("gamma_decay_per_us", c.decoherence.custom.gamma_decay);
        cu.read("gamma_e_mhz", gamma_e_mhz);
        cu.read("omega_blue_mhz", omega_blue_mhz);
        cu.read("omega_ir_mhz", omega_ir_mhz);
        cu.read("delta_int_mhz", delta_int_mhz);
        cu.finish();
        c.decoherence.custom.gamma_e = kTwoPi * gamma_e_mhz;
        c.decoherence.custom.omega_blue = kTwoPi * omega_blue_mhz;
        c.decoherence.custom.omega_ir = kTwoPi * omega_ir_mhz;
        c.decoherence.custom.delta_int = kTwoPi * delta_int_mhz;
        s.finish();
    }
    {
        auto s = top.sub("disorder");
        s.read("coupling_sigma", c.disorder.coupling_sigma);
        s.read("position_sigma", c.disorder.thermal.sigma_r);
        s.read("velocity_sigma", c.disorder.thermal.sigma_v);
        s.read("flight_time_us", c.disorder.thermal.t_evolve);
        s.read("realizations", c.disorder.realizations);
        s.finish();
    }
    {
        auto s = top.sub("measurement");
        s.read("shots", c.measurement.shots);
        s.read("shots_per_trajectory", c.measurement.shots_per_trajectory);
        auto d = s.sub("detection");
        d.read("eta0", c.measurement.detection.eta0);
        d.read("eps_det", c.measurement.detection.eps_det);
        d.read("p_pi", c.measurement.detection.p_pi);
        d.finish();
        s.read("postselect", c.measurement.postselect);
        s.read("postselect_radius", c.measurement.postselect_radius);
        s.read("loss_probability", c.measurement.loss_probability);
        s.finish();
    }
    {
        auto s = top.sub("analysis");
        s.read("field", c.analysis.field);
        s.read("regions", c.analysis.regions);
        s.read("models", c.analysis.models);
        s.read("fit_min_distance", c.analysis.fit_min_distance);
        s.read("fit_max_distance", c.analysis.fit_max_distance);
        s.read("bootstrap", c.analysis.bootstrap);
        s.read("connected", c.analysis.connected);
        s.finish();
    }
    {
        auto s = top.sub("kz");
        s.read("enabled", c.kz.enabled);
        s.read("rates_mhz_per_us", c.kz.rates_mhz_per_us);
        s.read("delta_min", c.kz.delta_min);
        s.read("delta_max", c.kz.delta_max);
        s.read("sweep_min", c.kz.sweep_min);
        s.read("sweep_max", c.kz.sweep_max);
        s.read("points", c.kz.points);
        s.read("backward", c.kz.backward);
        s.read("plateau_tolerance", c.kz.plateau_tolerance);
        s.read("monotone_tolerance", c.kz.monotone_tolerance);
        auto sm = s.sub("smoothing");
        sm.read("window", c.kz.susceptibility.window);
        sm.read("order", c.kz.susceptibility.order);
        sm.read("chi_window", c.kz.susceptibility.chi_window);
        sm.read("chi_order", c.kz.susceptibility.chi_order);
        sm.read("refine", c.kz.susceptibility.refine);
        sm.finish();
        s.finish();
    }
    {
        auto s = top.sub("evolution");
        s.read("tolerance", c.evolution.tolerance);
        s.read("integrator", c.evolution.integrator);
        s.read("dt_max_us", c.evolution.dt_max_us);
        s.finish();
    }
    top.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::Config, "cannot read config " + path.string() + ": " + e.what());
    }
    return parse_config(text);
}

void ExperimentConfig::validate() const {
    check(!name.empty(), "name", "must not be empty");

    check_one_of(lattice.geometry, {"ring", "square"}, "lattice.geometry");
    if (lattice.geometry == "ring") check(lattice.sites >= 3, "lattice.sites", "a ring needs at least 3 sites");
    if (lattice.geometry == "square") {
        check(lattice.nx >= 2, "lattice.nx", "must be at least 2");
        check(lattice.ny >= 2, "lattice.ny", "must be at least 2");
    }
    check(lattice.spacing > 0, "lattice.spacing", "must be positive");

    check(hamiltonian.omega_mhz > 0 && std::isfinite(hamiltonian.omega_mhz), "hamiltonian.omega_mhz",
          "must be positive");
    check(hamiltonian.blockade_radius.has_value() != hamiltonian.c6.has_value(), "hamiltonian",
          "exactly one of blockade_radius or c6 is required");
    if (hamiltonian.blockade_radius)
        check(*hamiltonian.blockade_radius > 0, "hamiltonian.blockade_radius", "must be positive");
    if (hamiltonian.c6) check(*hamiltonian.c6 > 0, "hamiltonian.c6", "must be positive");
    if (hamiltonian.interaction_cutoff)
        check(*hamiltonian.interaction_cutoff > 0, "hamiltonian.interaction_cutoff", "must be positive");
    check_one_of(hamiltonian.basis, {"full", "blockade"}, "hamiltonian.basis");
    check(hamiltonian.max_full_sites >= 1 && hamiltonian.max_full_sites <= 62, "hamiltonian.max_full_sites",
          "must lie in [1, 62]");

    check(gap_scan.delta_max > gap_scan.delta_min, "gap_scan.delta_max", "must exceed delta_min");
    check(gap_scan.points >= 3, "gap_scan.points", "must be at least 3");

    check_one_of(ramp.kind, {"lila_discrete", "lila_analytic", "linear"}, "ramp.kind");
    check(ramp.total_time_us > 0, "ramp.total_time_us", "must be positive");
    check(ramp.points >= 2, "ramp.points", "must be at least 2");
    check(ramp.rate_mhz_per_us > 0, "ramp.rate_mhz_per_us", "must be positive");
    check(ramp.omega_turn_on_us >= 0, "ramp.omega_turn_on_us", "must be non-negative");
    if (ramp.kind != "linear") {
        check(ramp.delta_start >= gap_scan.delta_min && ramp.delta_start <= gap_scan.delta_max, "ramp.delta_start",
              "must lie inside the gap_scan range");
        if (ramp.delta_end)
            check(*ramp.delta_end >= gap_scan.delta_min && *ramp.delta_end <= gap_scan.delta_max, "ramp.delta_end",
                  "must lie inside the gap_scan range");
    }
    if (ramp.delta_end) check(*ramp.delta_end != ramp.delta_start, "ramp.delta_end", "must differ from delta_start");

    check_one_of(decoherence.mode, {"off", "measured", "scaled", "custom"}, "decoherence.mode");
    check(decoherence.scale >= 0, "decoherence.scale", "must be non-negative");
    if (decoherence.mode == "custom") {
        const auto& p = decoherence.custom;
        check(p.gamma_decay >= 0 && p.gamma_e >= 0, "decoherence.custom", "rates must be non-negative");
        check(p.delta_int > 0, "decoherence.custom.delta_int_mhz", "must be positive");
    }

    check(disorder.coupling_sigma >= 0, "disorder.coupling_sigma", "must be non-negative");
    check(disorder.thermal.sigma_r >= 0, "disorder.position_sigma", "must be non-negative");
    check(disorder.thermal.sigma_v >= 0, "disorder.velocity_sigma", "must be non-negative");
    check(disorder.thermal.t_evolve >= 0, "disorder.flight_time_us", "must be non-negative");
    check(disorder.realizations >= 1, "disorder.realizations", "must be at least 1");

    check(measurement.shots >= 1, "measurement.shots", "must be at least 1");
    check(measurement.shots_per_trajectory >= 1, "measurement.shots_per_trajectory", "must be at least 1");
    check(measurement.shots % measurement.shots_per_trajectory == 0, "measurement.shots",
          "must be a multiple of shots_per_trajectory");
    try {
        measurement.detection.validate();
    } catch (const Error& e) {
        config_error("measurement.detection", e.what());
    }
    if (measurement.postselect_radius)
        check(*measurement.postselect_radius > 0, "measurement.postselect_radius", "must be positive");
    check(measurement.loss_probability >= 0 && measurement.loss_probability < 1, "measurement.loss_probability",
          "must lie in [0, 1)");

    check_one_of(analysis.field, {"sigma", "epsilon"}, "analysis.field");
    check(!analysis.regions.empty(), "analysis.regions", "must not be empty");
    for (std::size_t i = 0; i < analysis.regions.size(); ++i)
        check_one_of(analysis.regions[i], {"all", "bulk", "boundary"}, "analysis.regions[" + std::to_string(i) + "]");
    check(!analysis.models.empty(), "analysis.models", "must not be empty");
    for (std::size_t i = 0; i < analysis.models.size(); ++i)
        check_one_of(analysis.models[i], {"power", "exponential", "power_exponential", "finite_t_cft"},
                     "analysis.models[" + std::to_string(i) + "]");
    check(analysis.fit_min_distance >= 0, "analysis.fit_min_distance", "must be non-negative");
    if (analysis.fit_max_distance)
        check(*analysis.fit_max_distance > analysis.fit_min_distance, "analysis.fit_max_distance",
              "must exceed fit_min_distance");
    check(analysis.bootstrap >= 0, "analysis.bootstrap", "must be non-negative");
    if (lattice.geometry == "ring")
        for (std::size_t i = 0; i < analysis.regions.size(); ++i)
            check(analysis.regions[i] == "all", "analysis.regions[" + std::to_string(i) + "]",
                  "rings have no boundary; use 'all'");
    if (lattice.geometry == "square")
        check(analysis.field == "sigma", "analysis.field", "square lattices support the sigma bond field only");

    if (kz.enabled) {
        check(kz.rates_mhz_per_us.size() >= 2, "kz.rates_mhz_per_us", "needs at least two rates");
        for (std::size_t i = 0; i < kz.rates_mhz_per_us.size(); ++i)
            check(kz.rates_mhz_per_us[i] > 0, "kz.rates_mhz_per_us[" + std::to_string(i) + "]", "must be positive");
    }
    check(kz.delta_max > kz.delta_min, "kz.delta_max", "must exceed delta_min");
    if (kz.sweep_min) check(*kz.sweep_min <= kz.delta_min, "kz.sweep_min", "must not exceed delta_min");
    if (kz.sweep_max) check(*kz.sweep_max >= kz.delta_max, "kz.sweep_max", "must not be below delta_max");
    check(kz.points >= kz.susceptibility.window, "kz.points", "must be at least the smoothing window");
    check(kz.plateau_tolerance >= 0, "kz.plateau_tolerance", "must be non-negative");
    check(kz.monotone_tolerance >= 0, "kz.monotone_tolerance", "must be non-negative");
    const auto& so = kz.susceptibility;
    check(so.window >= 3 && so.window % 2 == 1, "kz.smoothing.window", "must be odd and at least 3");
    check(so.order >= 0 && so.order < so.window, "kz.smoothing.order", "must be below the window");
    check(so.chi_window >= 3 && so.chi_window % 2 == 1, "kz.smoothing.chi_window", "must be odd and at least 3");
    check(so.chi_order >= 0 && so.chi_order < so.chi_window, "kz.smoothing.chi_order", "must be below chi_window");
    check(so.refine >= 1, "kz.smoothing.refine", "must be at least 1");

    check(evolution.tolerance > 0, "evolution.tolerance", "must be positive");
    check_one_of(evolution.integrator, {"cf4", "midpoint"}, "evolution.integrator");
    check(evolution.dt_max_us > 0, "evolution.dt_max_us", "must be positive");

    const int n = lattice.geometry == "ring" ? lattice.sites : lattice.nx * lattice.ny;
    if (hamiltonian.basis == "full" && n > hamiltonian.max_full_sites)
        fail(ErrorKind::Capacity, "lattice has " + std::to_string(n) + " sites; the full basis is capped at " +
                                      std::to_string(hamiltonian.max_full_sites) +
                                      " (raise hamiltonian.max_full_sites or use basis: blockade)");
    if (decoherence.lindblad_check && n > kMaxLindbladSites)
        fail(ErrorKind::Capacity, "decoherence.lindblad_check supports at most " +
                                      std::to_string(kMaxLindbladSites) + " sites");
}

nlohmann::json ExperimentConfig::to_json() const {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["name"] = name;
    j["seed"] = seed;
    j["lattice"] = {{"geometry", lattice.geometry},
                    {"sites", lattice.sites},
                    {"nx", lattice.nx},
                    {"ny", lattice.ny},
                    {"spacing", lattice.spacing}};
    j["hamiltonian"] = {{"omega_mhz", hamiltonian.omega_mhz},
                        {"blockade_radius", opt(hamiltonian.blockade_radius)},
                        {"c6", opt(hamiltonian.c6)},
                        {"interaction_cutoff", opt(hamiltonian.interaction_cutoff)},
                        {"basis", hamiltonian.basis},
                        {"max_full_sites", hamiltonian.max_full_sites}};
    j["gap_scan"] = {{"delta_min", gap_scan.delta_min},
                     {"delta_max", gap_scan.delta_max},
                     {"points", gap_scan.points},
                     {"symmetric_sector", gap_scan.symmetric_sector}};
    j["ramp"] = {{"kind", ramp.kind},
                 {"delta_start", ramp.delta_start},
                 {"delta_end", ramp.delta_end ? json(*ramp.delta_end) : json("gap_minimum")},
                 {"total_time_us", ramp.total_time_us},
                 {"points", ramp.points},
                 {"rate_mhz_per_us", ramp.rate_mhz_per_us},
                 {"omega_turn_on_us", ramp.omega_turn_on_us}};
    const auto& cu = decoherence.custom;
    j["decoherence"] = {{"mode", decoherence.mode},
                        {"scale", decoherence.scale},
                        {"lindblad_check", decoherence.lindblad_check},
                        {"custom",
                         {{"gamma_decay_per_us", cu.gamma_decay},
                          {"gamma_e_mhz", cu.gamma_e / kTwoPi},
                          {"omega_blue_mhz", cu.omega_blue / kTwoPi},
                          {"omega_ir_mhz", cu.omega_ir / kTwoPi},
                          {"delta_int_mhz", cu.delta_int / kTwoPi}}}};
    j["disorder"] = {{"coupling_sigma", disorder.coupling_sigma},
                     {"position_sigma", disorder.thermal.sigma_r},
                     {"velocity_sigma", disorder.thermal.sigma_v},
                     {"flight_time_us", disorder.thermal.t_evolve},
                     {"realizations", disorder.realizations}};
    j["measurement"] = {{"shots", measurement.shots},
                        {"shots_per_trajectory", measurement.shots_per_trajectory},
                        {"detection", measurement.detection.to_json()},
                        {"postselect", measurement.postselect},
                        {"postselect_radius", opt(measurement.postselect_radius)},
                        {"loss_probability", measurement.loss_probability}};
    j["analysis"] = {{"field", analysis.field},
                     {"regions", analysis.regions},
                     {"models", analysis.models},
                     {"fit_min_distance", analysis.fit_min_distance},
                     {"fit_max_distance", opt(analysis.fit_max_distance)},
                     {"bootstrap", analysis.bootstrap},
                     {"connected", analysis.connected}};
    j["kz"] = {{"enabled", kz.enabled},
               {"rates_mhz_per_us", kz.rates_mhz_per_us},
               {"delta_min", kz.delta_min},
               {"delta_max", kz.delta_max},
               {"sweep_min", opt(kz.sweep_min)},
               {"sweep_max", opt(kz.sweep_max)},
               {"points", kz.points},
               {"backward", kz.backward},
               {"plateau_tolerance", kz.plateau_tolerance},
               {"monotone_tolerance", kz.monotone_tolerance},
               {"smoothing",
                {{"window", kz.susceptibility.window},
                 {"order", kz.susceptibility.order},
                 {"chi_window", kz.susceptibility.chi_window},
                 {"chi_order", kz.susceptibility.chi_order},
                 {"refine", kz.susceptibility.refine}}}};
    j["evolution"] = {{"tolerance", evolution.tolerance},
                      {"integrator", evolution.integrator},
                      {"dt_max_us", evolution.dt_max_us}};
    return j;
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

double ExperimentConfig::omega() const { return kTwoPi * hamiltonian.omega_mhz; }

double ExperimentConfig::rate_to_rad(double mhz_per_us) const { return kTwoPi * mhz_per_us; }

Lattice ExperimentConfig::build_lattice() const {
    if (lattice.geometry == "ring") return Lattice::ring(lattice.sites, lattice.spacing);
    return Lattice::square(lattice.nx, lattice.ny, lattice.spacing);
}

double ExperimentConfig::blockade_radius_over_a() const {
    if (hamiltonian.blockade_radius) return *hamiltonian.blockade_radius;
    return rydcrit::blockade_radius(*hamiltonian.c6, omega()) / lattice.spacing;
}

HamiltonianSpec ExperimentConfig::build_template(const Lattice& lat, const DisorderSample* disorder) const {
    if (hamiltonian.blockade_radius)
        return HamiltonianSpec::from_blockade_radius(lat, omega(), 0.0, *hamiltonian.blockade_radius, disorder,
                                                     hamiltonian.interaction_cutoff);
    return HamiltonianSpec::from_lattice(lat, omega(), 0.0, *hamiltonian.c6, disorder, hamiltonian.interaction_cutoff);
}

bool ExperimentConfig::disorder_enabled() const {
    return disorder.coupling_sigma > 0 || disorder.thermal.sigma_r > 0 ||
           (disorder.thermal.sigma_v > 0 && disorder.thermal.t_evolve > 0);
}

JumpParams ExperimentConfig::jump_params() const {
    if (decoherence.mode == "measured") return JumpParams::measured();
    if (decoherence.mode == "scaled") return JumpParams::measured().scaled(decoherence.scale);
    if (decoherence.mode == "custom") return decoherence.custom;
    return JumpParams{};
}

StepControl ExperimentConfig::step_control() const {
    StepControl s;
    s.tol = evolution.tolerance;
    s.dt_max = evolution.dt_max_us;
    s.integrator = evolution.integrator == "midpoint" ? Integrator::Midpoint : Integrator::CommutatorFree4;
    return s;
}

double ExperimentConfig::postselect_radius() const {
    return measurement.postselect_radius.value_or(blockade_radius_over_a()) * lattice.spacing;
}

FitOptions ExperimentConfig::fit_options() const {
    FitOptions o;
    o.range.min_distance = analysis.fit_min_distance;
    if (analysis.fit_max_distance) o.range.max_distance = *analysis.fit_max_distance;
    return o;
}

}  // namespace rydcrit
