#include "rydcrit/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rydcrit/errors.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::vector<double> cumulative_probabilities(const Eigen::VectorXcd& amps) {
    std::vector<double> cdf(static_cast<std::size_t>(amps.size()));
    double acc = 0.0;
    for (Eigen::Index k = 0; k < amps.size(); ++k) {
        acc += std::norm(amps[k]);
        cdf[k] = acc;
    }
    return cdf;
}

std::size_t draw_index(const std::vector<double>& cdf, Rng& rng) {
    const double r = uniform_open(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    return std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
}

void write_bits(BitMatrix& out, int row, std::uint64_t bits) {
    for (int i = 0; i < out.cols(); ++i) out(row, i) = static_cast<std::uint8_t>((bits >> i) & 1u);
}

void require_normalized(const StateVector& psi) {
    require(psi.basis != nullptr, ErrorKind::Domain, "state has no basis");
    require(std::abs(psi.norm() - 1.0) < 1e-8, ErrorKind::Domain, "sampling requires a normalized state");
}

}  // namespace

void DetectionModel::validate() const {
    require(in_unit(eta0), ErrorKind::Domain, "eta0 must lie in [0, 1]");
    require(in_unit(p_pi), ErrorKind::Domain, "p_pi must lie in [0, 1]");
    require(std::isfinite(eps_det), ErrorKind::Domain, "eps_det must be finite");
}

nlohmann::json DetectionModel::to_json() const { return {{"eta0", eta0}, {"eps_det", eps_det}, {"p_pi", p_pi}}; }

DetectionModel DetectionModel::from_json(const nlohmann::json& j) {
    DetectionModel m;
    m.eta0 = j.value("eta0", 1.0);
    m.eps_det = j.value("eps_det", 0.0);
    m.p_pi = j.value("p_pi", 1.0);
    return m;
}

nlohmann::json SnapshotProvenance::to_json() const {
    nlohmann::json j{{"source", source},
                     {"seed", seed},
                     {"shots_per_trajectory", shots_per_trajectory},
                     {"postselect_radius", postselect_radius},
                     {"loss_probability", loss_probability}};
    j["detection"] = detection ? detection->to_json() : nlohmann::json(nullptr);
    std::string mask;
    for (bool b : postselect_mask) mask.push_back(b ? '1' : '0');
    j["postselect_mask"] = mask;
    if (!approximations.empty()) j["approximations"] = approximations;
    return j;
}

SnapshotProvenance SnapshotProvenance::from_json(const nlohmann::json& j) {
    SnapshotProvenance p;
    p.source = j.value("source", std::string("file"));
    p.seed = j.value("seed", std::uint64_t{0});
    p.shots_per_trajectory = j.value("shots_per_trajectory", 1);
    p.postselect_radius = j.value("postselect_radius", 0.0);
    p.loss_probability = j.value("loss_probability", 0.0);
    if (j.contains("detection") && !j["detection"].is_null()) p.detection = DetectionModel::from_json(j["detection"]);
    for (char c : j.value("postselect_mask", std::string())) p.postselect_mask.push_back(c == '1');
    if (j.contains("approximations")) p.approximations = j["approximations"].get<std::vector<std::string>>();
    return p;
}

SnapshotSet::SnapshotSet(Lattice lattice, BitMatrix records, SnapshotProvenance provenance)
    : lattice_(std::move(lattice)), records_(std::move(records)), provenance_(std::move(provenance)) {
    require(records_.cols() == lattice_.n_sites() || records_.rows() == 0, ErrorKind::Dimension,
            "snapshot width does not match the lattice");
    require((records_.array() <= 1).all(), ErrorKind::Domain, "snapshot entries must be 0 or 1");
    if (!provenance_.postselect_mask.empty()) {
        const auto kept = std::count(provenance_.postselect_mask.begin(), provenance_.postselect_mask.end(), true);
        require(kept == records_.rows(), ErrorKind::Dimension, "post-selection mask does not match shot count");
    }
}

SnapshotSet SnapshotSet::resample(const std::vector<int>& rows) const {
    BitMatrix out(static_cast<Eigen::Index>(rows.size()), records_.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(k) = records_.row(rows[k]);
    SnapshotProvenance p = provenance_;
    p.postselect_mask.clear();
    return SnapshotSet(lattice_, std::move(out), std::move(p));
}

double SnapshotSet::rejection_fraction() const {
    const auto& mask = provenance_.postselect_mask;
    if (mask.empty()) return 0.0;
    return 1.0 - static_cast<double>(shots()) / static_cast<double>(mask.size());
}

nlohmann::json SnapshotSet::header() const {
    return {{"format", "rydcrit-snapshots"},
            {"version", 1},
            {"shots", shots()},
            {"n_sites", n_sites()},
            {"lattice_hash", lattice_.hash()},
            {"lattice", lattice_.to_json()},
            {"provenance", provenance_.to_json()}};
}

std::string SnapshotSet::to_text() const {
    std::string out = header().dump() + "\n";
    out.reserve(out.size() + static_cast<std::size_t>(shots()) * (2 * n_sites()));
    for (int m = 0; m < shots(); ++m) {
        for (int i = 0; i < n_sites(); ++i) {
            if (i) out.push_back(',');
            out.push_back(records_(m, i) ? '1' : '0');
        }
        out.push_back('\n');
    }
    return out;
}

SnapshotSet SnapshotSet::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io, "empty snapshot file");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, std::string("bad snapshot header: ") + e.what());
    }
    require(h.value("format", std::string()) == "rydcrit-snapshots", ErrorKind::Io, "not a snapshot file");
    const Lattice lattice = Lattice::from_json(h.at("lattice"));
    const int shots = h.at("shots").get<int>();
    const int n = h.at("n_sites").get<int>();
    BitMatrix rec(shots, n);
    for (int m = 0; m < shots; ++m) {
        require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io, "snapshot file truncated");
        int i = 0;
        for (char c : line) {
            if (c == ',') continue;
            require((c == '0' || c == '1') && i < n, ErrorKind::Io, "bad snapshot row " + std::to_string(m));
            rec(m, i++) = static_cast<std::uint8_t>(c - '0');
        }
        require(i == n, ErrorKind::Io, "short snapshot row " + std::to_string(m));
    }
    return SnapshotSet(lattice, std::move(rec), SnapshotProvenance::from_json(h.at("provenance")));
}

SnapshotSet sample_snapshots(const StateVector& psi, const Lattice& lattice, int shots, std::uint64_t seed) {
    require(shots >= 1, ErrorKind::Domain, "need at least one shot");
    require_normalized(psi);
    require(psi.basis->n_sites() == lattice.n_sites(), ErrorKind::Dimension, "state and lattice sizes differ");
    const auto cdf = cumulative_probabilities(psi.amplitudes);
    BitMatrix rec(shots, lattice.n_sites());
#pragma omp parallel for schedule(static)
    for (int m = 0; m < shots; ++m) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(m));
        write_bits(rec, m, psi.basis->state(draw_index(cdf, rng)));
    }
    SnapshotProvenance p;
    p.source = "state";
    p.seed = seed;
    return SnapshotSet(lattice, std::move(rec), std::move(p));
}

SnapshotSet sample_snapshots(const TrajectoryEnsemble& ensemble, const Lattice& lattice, std::uint64_t seed,
                             int shots_per_trajectory) {
    require(!ensemble.runs.empty(), ErrorKind::Domain, "empty trajectory ensemble");
    require(shots_per_trajectory >= 1, ErrorKind::Domain, "shots_per_trajectory must be >= 1");
    const int runs = static_cast<int>(ensemble.runs.size());
    for (const auto& run : ensemble.runs) require_normalized(run.final_state);
    BitMatrix rec(runs * shots_per_trajectory, lattice.n_sites());
#pragma omp parallel for schedule(static)
    for (int r = 0; r < runs; ++r) {
        const StateVector& psi = ensemble.runs[r].final_state;
        const auto cdf = cumulative_probabilities(psi.amplitudes);
        for (int s = 0; s < shots_per_trajectory; ++s) {
            const int m = r * shots_per_trajectory + s;
            Rng rng = make_stream(seed, static_cast<std::uint64_t>(m));
            write_bits(rec, m, psi.basis->state(draw_index(cdf, rng)));
        }
    }
    SnapshotProvenance p;
    p.source = "ensemble";
    p.seed = seed;
    p.shots_per_trajectory = shots_per_trajectory;
    return SnapshotSet(lattice, std::move(rec), std::move(p));
}

SnapshotSet apply_detection_errors(const SnapshotSet& snaps, const DetectionModel& model, std::uint64_t seed) {
    model.validate();
    const double p_false_pos = 1.0 - model.eta0;
    const double p_false_neg = std::clamp(model.eps_det, 0.0, 1.0);
    BitMatrix rec = snaps.records();
#pragma omp parallel for schedule(static)
    for (int m = 0; m < static_cast<int>(rec.rows()); ++m) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(m));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index i = 0; i < rec.cols(); ++i) {
            const double r = u(rng);
            if (rec(m, i) == 0 && r < p_false_pos) rec(m, i) = 1;
            else if (rec(m, i) == 1 && r < p_false_neg) rec(m, i) = 0;
        }
    }
    SnapshotProvenance p = snaps.provenance();
    p.detection = model;
    return SnapshotSet(snaps.lattice(), std::move(rec), std::move(p));
}

std::pair<double, double> detection_forward(double eta0, double p, double eps) {
    const double q = 1.0 - p;
    return {eta0 * q + eps * p, eta0 * (p * p + q * q) + 2.0 * eps * p * q};
}

DetectionInversion infer_detection_error(double eta0, double n_g1, double n_g2, double eta0_std, double n_g1_std,
                                         double n_g2_std) {
    require(in_unit(eta0) && in_unit(n_g1) && in_unit(n_g2), ErrorKind::Domain,
            "detection calibration inputs must lie in [0, 1]");
    const double d = 2.0 * (eta0 - n_g1);
    require(std::abs(d) > 1e-15, ErrorKind::Domain, "eta0 equals n_g1; inversion is degenerate");
    DetectionInversion r;
    r.p_pi = (n_g2 + eta0 - 2.0 * n_g1) / d;
    require(std::abs(r.p_pi) > 1e-15, ErrorKind::Domain, "inverted pulse fidelity is zero");
    r.eps_det = (n_g1 - eta0 * (1.0 - r.p_pi)) / r.p_pi;
    r.p_in_range = in_unit(r.p_pi);

    const double p = r.p_pi;
    const double dp_deta = (1.0 - 2.0 * p) / d;
    const double dp_dn1 = (2.0 * p - 2.0) / d;
    const double dp_dn2 = 1.0 / d;
    const double de_dp = (eta0 - r.eps_det) / p;
    const double de_deta = -(1.0 - p) / p + de_dp * dp_deta;
    const double de_dn1 = 1.0 / p + de_dp * dp_dn1;
    const double de_dn2 = de_dp * dp_dn2;
    r.p_pi_std = std::hypot(dp_deta * eta0_std, dp_dn1 * n_g1_std, dp_dn2 * n_g2_std);
    r.eps_det_std = std::hypot(de_deta * eta0_std, de_dn1 * n_g1_std, de_dn2 * n_g2_std);
    return r;
}

SnapshotSet postselect_blockade(const SnapshotSet& snaps, double radius) {
    require(radius > 0.0, ErrorKind::Domain, "post-selection radius must be positive");
    const Lattice& lat = snaps.lattice();
    const int n = lat.n_sites();
    std::vector<std::pair<int, int>> close;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (lat.site_distance(i, j) <= radius * (1.0 + 1e-12)) close.emplace_back(i, j);

    const BitMatrix& rec = snaps.records();
    std::vector<bool> keep(static_cast<std::size_t>(rec.rows()));
    for (Eigen::Index m = 0; m < rec.rows(); ++m) {
        bool ok = true;
        for (const auto& [i, j] : close)
            if (rec(m, i) && rec(m, j)) {
                ok = false;
                break;
            }
        keep[m] = ok;
    }
    std::vector<int> rows;
    for (std::size_t m = 0; m < keep.size(); ++m)
        if (keep[m]) rows.push_back(static_cast<int>(m));

    BitMatrix out(static_cast<Eigen::Index>(rows.size()), rec.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(k) = rec.row(rows[k]);

    SnapshotProvenance p = snaps.provenance();
    if (p.postselect_mask.empty()) {
        p.postselect_mask = keep;
    } else {
        // Compose with the earlier selection.
        std::size_t k = 0;
        for (auto&& bit : p.postselect_mask)
            if (bit) bit = keep[k++];
    }
    p.postselect_radius = radius;
    return SnapshotSet(lat, std::move(out), std::move(p));
}

std::vector<bool> sample_holes(int n_sites, double loss_probability, std::uint64_t seed) {
    require(in_unit(loss_probability), ErrorKind::Domain, "loss probability must lie in [0, 1]");
    Rng rng(derive_seed(seed, 0));
    std::bernoulli_distribution lost(loss_probability);
    std::vector<bool> out(static_cast<std::size_t>(n_sites));
    for (int i = 0; i < n_sites; ++i) out[i] = lost(rng);
    return out;
}

std::vector<std::uint8_t> embed_hole_shot(const std::vector<std::uint8_t>& reduced, const std::vector<bool>& removed) {
    std::vector<std::uint8_t> full(removed.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < removed.size(); ++i) {
        if (removed[i]) {
            full[i] = 1;
        } else {
            require(k < reduced.size(), ErrorKind::Dimension, "reduced shot too short for hole pattern");
            full[i] = reduced[k++];
        }
    }
    require(k == reduced.size(), ErrorKind::Dimension, "reduced shot too long for hole pattern");
    return full;
}

}  // namespace rydcrit
