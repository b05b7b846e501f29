#include "rydcrit/observables.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"

namespace rydcrit {

namespace {

constexpr double kBinTolerance = 1e-6;

void require_ring(const Lattice& lattice) {
    require(lattice.geometry() == GeometryKind::Ring, ErrorKind::InvalidGeometry, "field requires a ring lattice");
}

void require_square(const Lattice& lattice) {
    require(lattice.geometry() == GeometryKind::Square, ErrorKind::InvalidGeometry,
            "bond field requires a square lattice");
}

double global_mean(const OccupationMoments& m) { return m.first.size() ? m.first.mean() : 0.0; }

/// Correlations of an affine field from occupation moments.
Eigen::MatrixXd field_correlations(const FieldLayout& f, const OccupationMoments& m, bool connected) {
    const Eigen::VectorXd mean = f.weights * m.first + f.offsets;
    Eigen::MatrixXd c = f.weights * m.second * f.weights.transpose();
    const Eigen::VectorXd wn = f.weights * m.first;
    c += wn * f.offsets.transpose() + f.offsets * wn.transpose() + f.offsets * f.offsets.transpose();
    if (connected) c -= mean * mean.transpose();
    return c;
}

struct Binning {
    std::vector<double> distances;
    std::vector<std::vector<std::pair<int, int>>> pairs;
};

Binning bin_pairs(const FieldLayout& f, const std::vector<int>& carriers) {
    std::vector<std::tuple<double, int, int>> all;
    for (std::size_t x = 0; x < carriers.size(); ++x)
        for (std::size_t y = x; y < carriers.size(); ++y)
            all.emplace_back(f.distance(carriers[x], carriers[y]), carriers[x], carriers[y]);
    std::sort(all.begin(), all.end());
    Binning b;
    for (const auto& [d, a, c] : all) {
        if (b.distances.empty() || d - b.distances.back() > kBinTolerance) {
            b.distances.push_back(d);
            b.pairs.emplace_back();
        }
        b.pairs.back().emplace_back(a, c);
    }
    return b;
}

/// Per-shot field values, shots x carriers.
Eigen::MatrixXd field_samples(const SnapshotSet& snaps, const FieldLayout& f) {
    const Eigen::MatrixXd n = snaps.records().cast<double>();
    Eigen::MatrixXd out = n * f.weights.transpose();
    out.rowwise() += f.offsets.transpose();
    return out;
}

std::vector<int> checked_region(const FieldLayout& f, Region r) {
    auto idx = f.region(r);
    require(!idx.empty(), ErrorKind::Domain, std::string("region '") + to_string(r) + "' is empty");
    return idx;
}

double resolve_mean(std::optional<double> mean_n, const OccupationMoments& m) {
    const double v = mean_n ? *mean_n : global_mean(m);
    require(v >= 0.0 && v <= 1.0, ErrorKind::Domain, "mean density must lie in [0, 1]");
    return v;
}

double std_error(const Eigen::VectorXd& x) {
    const Eigen::Index m = x.size();
    if (m < 2) return 0.0;
    const double mean = x.mean();
    return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(m - 1) / static_cast<double>(m));
}

}  // namespace

const char* to_string(Field f) { return f == Field::Sigma ? "sigma" : "epsilon"; }

const char* to_string(Region r) {
    switch (r) {
        case Region::All: return "all";
        case Region::Bulk: return "bulk";
        case Region::Boundary: return "boundary";
    }
    return "?";
}

Field field_from_string(const std::string& s) {
    if (s == "sigma") return Field::Sigma;
    if (s == "epsilon") return Field::Epsilon;
    fail(ErrorKind::Config, "unknown field '" + s + "'");
}

Region region_from_string(const std::string& s) {
    if (s == "all") return Region::All;
    if (s == "bulk") return Region::Bulk;
    if (s == "boundary") return Region::Boundary;
    fail(ErrorKind::Config, "unknown region '" + s + "'");
}

std::vector<double> sigma_1d(std::span<const std::uint8_t> shot, const Lattice& lattice, double mean_n) {
    require_ring(lattice);
    require(static_cast<int>(shot.size()) == lattice.n_sites(), ErrorKind::Dimension, "shot length mismatch");
    std::vector<double> out(shot.size());
    for (std::size_t i = 0; i < shot.size(); ++i) out[i] = (i % 2 ? -1.0 : 1.0) * (shot[i] - mean_n);
    return out;
}

std::vector<double> sigma_2d_bonds(std::span<const std::uint8_t> shot, const Lattice& lattice) {
    require_square(lattice);
    require(static_cast<int>(shot.size()) == lattice.n_sites(), ErrorKind::Dimension, "shot length mismatch");
    std::vector<double> out;
    out.reserve(lattice.bonds().size());
    for (const auto& b : lattice.bonds())
        out.push_back(b.parity * (static_cast<double>(shot[b.i]) - static_cast<double>(shot[b.j])));
    return out;
}

std::vector<double> epsilon_1d(std::span<const std::uint8_t> shot, const Lattice& lattice, double mean_n) {
    require_ring(lattice);
    const std::size_t n = shot.size();
    require(static_cast<int>(n) == lattice.n_sites(), ErrorKind::Dimension, "shot length mismatch");
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = shot[k] + shot[(k + 1) % n] - mean_n;
    return out;
}

double FieldLayout::distance(int a, int b) const {
    if (ring_period > 0) {
        const int j = std::abs(a - b) % ring_period;
        return chord_distance(ring_period, std::min(j, ring_period - j));
    }
    return rydcrit::distance(positions[a], positions[b]);
}

std::vector<int> FieldLayout::region(Region r) const {
    std::vector<int> out;
    for (int a = 0; a < carriers(); ++a) {
        const bool keep = r == Region::All || (r == Region::Bulk && !boundary[a]) ||
                          (r == Region::Boundary && boundary[a]);
        if (keep) out.push_back(a);
    }
    return out;
}

FieldLayout field_layout(const Lattice& lattice, Field field, double mean_n) {
    const int n = lattice.n_sites();
    FieldLayout f;
    if (lattice.geometry() == GeometryKind::Ring) {
        f.weights = Eigen::MatrixXd::Zero(n, n);
        f.offsets = Eigen::VectorXd::Constant(n, -mean_n);
        f.boundary.assign(n, false);
        f.ring_period = n;
        for (int k = 0; k < n; ++k) {
            if (field == Field::Sigma) {
                const double s = k % 2 ? -1.0 : 1.0;
                f.weights(k, k) = s;
                f.offsets[k] = -s * mean_n;
                f.positions.push_back(lattice.coords()[k]);
            } else {
                const int k1 = (k + 1) % n;
                f.weights(k, k) += 1.0;
                f.weights(k, k1) += 1.0;
                const auto& a = lattice.coords()[k];
                const auto& b = lattice.coords()[k1];
                f.positions.push_back({(a.x + b.x) / 2, (a.y + b.y) / 2});
            }
        }
        return f;
    }
    require(field == Field::Sigma, ErrorKind::InvalidGeometry, "epsilon field is defined on rings only");
    const auto& bonds = lattice.bonds();
    const int nb = static_cast<int>(bonds.size());
    f.weights = Eigen::MatrixXd::Zero(nb, n);
    f.offsets = Eigen::VectorXd::Zero(nb);
    for (int k = 0; k < nb; ++k) {
        f.weights(k, bonds[k].i) = bonds[k].parity;
        f.weights(k, bonds[k].j) = -bonds[k].parity;
        f.positions.push_back(bonds[k].center);
        f.boundary.push_back(lattice.boundary_bond_mask()[k]);
    }
    return f;
}

OccupationMoments occupation_moments(const StateVector& psi) {
    require(psi.basis != nullptr, ErrorKind::Domain, "state has no basis");
    const int n = psi.basis->n_sites();
    const double norm2 = psi.amplitudes.squaredNorm();
    require(norm2 > 0.0, ErrorKind::Domain, "zero state");
    OccupationMoments m{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
    for (std::size_t k = 0; k < psi.dim(); ++k) {
        const double p = std::norm(psi.amplitudes[k]);
        if (p == 0.0) continue;
        std::uint64_t bits = psi.basis->state(k);
        while (bits) {
            const int i = std::countr_zero(bits);
            bits &= bits - 1;
            m.first[i] += p;
            std::uint64_t rest = bits;
            while (rest) {
                const int j = std::countr_zero(rest);
                rest &= rest - 1;
                m.second(i, j) += p;
            }
        }
    }
    m.first /= norm2;
    m.second /= norm2;
    m.second += m.second.transpose().eval();
    m.second.diagonal() = m.first;
    return m;
}

OccupationMoments occupation_moments(const SnapshotSet& snaps) {
    require(snaps.shots() > 0, ErrorKind::Domain, "no snapshots");
    const Eigen::MatrixXd n = snaps.records().cast<double>();
    const double m = snaps.shots();
    return {n.colwise().sum().transpose() / m, n.transpose() * n / m};
}

DensityEstimate rydberg_density(const SnapshotSet& snaps) {
    const auto m = occupation_moments(snaps);
    DensityEstimate d;
    d.per_site = m.first;
    const double shots = snaps.shots();
    d.per_site_stderr = (m.first.array() * (1.0 - m.first.array()) / shots).sqrt();
    d.global = m.first.mean();
    const Eigen::VectorXd per_shot = snaps.records().cast<double>().rowwise().mean();
    d.global_stderr = std_error(per_shot);
    return d;
}

DensityEstimate rydberg_density(const StateVector& psi) {
    const auto m = occupation_moments(psi);
    DensityEstimate d;
    d.per_site = m.first;
    d.per_site_stderr = Eigen::VectorXd::Zero(m.first.size());
    d.global = m.first.mean();
    return d;
}

Eigen::MatrixXd correlation_matrix(const StateVector& psi, const Lattice& lattice, Field field,
                                   std::optional<double> mean_n, bool connected) {
    require(psi.basis && psi.basis->n_sites() == lattice.n_sites(), ErrorKind::Dimension,
            "state and lattice sizes differ");
    const auto m = occupation_moments(psi);
    return field_correlations(field_layout(lattice, field, resolve_mean(mean_n, m)), m, connected);
}

Eigen::MatrixXd correlation_matrix(const SnapshotSet& snaps, Field field, std::optional<double> mean_n,
                                   bool connected) {
    const auto m = occupation_moments(snaps);
    return field_correlations(field_layout(snaps.lattice(), field, resolve_mean(mean_n, m)), m, connected);
}

std::string CorrelatorSeries::to_csv() const {
    std::string out = "distance,value,stderr,count\n";
    for (std::size_t k = 0; k < size(); ++k)
        out += csv_row({format_double(distances[k]), format_double(values[k]), format_double(stderr[k]),
                        std::to_string(counts[k])});
    return out;
}

CorrelatorSeries two_point(const SnapshotSet& snaps, Field field, Region region, std::optional<double> mean_n,
                           bool connected) {
    const auto m = occupation_moments(snaps);
    const FieldLayout f = field_layout(snaps.lattice(), field, resolve_mean(mean_n, m));
    const auto carriers = checked_region(f, region);
    const Binning bins = bin_pairs(f, carriers);
    const Eigen::MatrixXd samples = field_samples(snaps, f);
    const Eigen::VectorXd mean = samples.colwise().mean();

    CorrelatorSeries s;
    s.connected = connected;
    for (std::size_t b = 0; b < bins.distances.size(); ++b) {
        const auto& pairs = bins.pairs[b];
        Eigen::VectorXd per_shot = Eigen::VectorXd::Zero(samples.rows());
        double shift = 0.0;
        for (const auto& [x, y] : pairs) {
            per_shot += samples.col(x).cwiseProduct(samples.col(y));
            if (connected) shift += mean[x] * mean[y];
        }
        per_shot /= static_cast<double>(pairs.size());
        s.distances.push_back(bins.distances[b]);
        s.values.push_back(per_shot.mean() - shift / pairs.size());
        s.stderr.push_back(std_error(per_shot));
        s.counts.push_back(static_cast<int>(pairs.size()));
    }
    return s;
}

CorrelatorSeries two_point(const StateVector& psi, const Lattice& lattice, Field field, Region region,
                           std::optional<double> mean_n, bool connected) {
    const auto m = occupation_moments(psi);
    const FieldLayout f = field_layout(lattice, field, resolve_mean(mean_n, m));
    const Eigen::MatrixXd c = field_correlations(f, m, connected);
    const Binning bins = bin_pairs(f, checked_region(f, region));
    CorrelatorSeries s;
    s.connected = connected;
    for (std::size_t b = 0; b < bins.distances.size(); ++b) {
        double acc = 0.0;
        for (const auto& [x, y] : bins.pairs[b]) acc += c(x, y);
        s.distances.push_back(bins.distances[b]);
        s.values.push_back(acc / bins.pairs[b].size());
        s.stderr.push_back(0.0);
        s.counts.push_back(static_cast<int>(bins.pairs[b].size()));
    }
    return s;
}

ScalarEstimate order_parameter(const SnapshotSet& snaps, Field field, Region region, std::optional<double> mean_n) {
    const auto m = occupation_moments(snaps);
    const FieldLayout f = field_layout(snaps.lattice(), field, resolve_mean(mean_n, m));
    const auto carriers = checked_region(f, region);
    const Eigen::MatrixXd samples = field_samples(snaps, f);
    Eigen::VectorXd per_shot = Eigen::VectorXd::Zero(samples.rows());
    for (int a : carriers) per_shot += samples.col(a);
    const double nc = static_cast<double>(carriers.size());
    per_shot = per_shot.array().square() / (nc * nc);
    return {per_shot.mean(), std_error(per_shot)};
}

ScalarEstimate order_parameter(const StateVector& psi, const Lattice& lattice, Field field, Region region,
                               std::optional<double> mean_n) {
    const auto m = occupation_moments(psi);
    const FieldLayout f = field_layout(lattice, field, resolve_mean(mean_n, m));
    const auto carriers = checked_region(f, region);
    const Eigen::MatrixXd c = field_correlations(f, m, false);
    double acc = 0.0;
    for (int a : carriers)
        for (int b : carriers) acc += c(a, b);
    const double nc = static_cast<double>(carriers.size());
    return {acc / (nc * nc), 0.0};
}

ScalarEstimate one_point(const SnapshotSet& snaps, Field field, Region region, std::optional<double> mean_n) {
    const auto m = occupation_moments(snaps);
    const FieldLayout f = field_layout(snaps.lattice(), field, resolve_mean(mean_n, m));
    const auto carriers = checked_region(f, region);
    const Eigen::MatrixXd samples = field_samples(snaps, f);
    Eigen::VectorXd per_shot = Eigen::VectorXd::Zero(samples.rows());
    for (int a : carriers) per_shot += samples.col(a);
    per_shot /= static_cast<double>(carriers.size());
    return {per_shot.mean(), std_error(per_shot)};
}

}  // namespace rydcrit
