#include "rydcrit/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

double distance(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

namespace {

Vec2 midpoint(const Vec2& a, const Vec2& b) { return {(a.x + b.x) / 2, (a.y + b.y) / 2}; }

std::vector<int> identity_permutation(int n) {
    std::vector<int> id(n);
    for (int i = 0; i < n; ++i) id[i] = i;
    return id;
}

}  // namespace

Lattice Lattice::ring(int n_sites, double spacing) {
    require(n_sites >= 3, ErrorKind::InvalidGeometry,
            "ring needs at least 3 sites, got " + std::to_string(n_sites));
    require(spacing > 0, ErrorKind::InvalidGeometry, "spacing must be positive");
    Lattice lat;
    lat.geometry_ = GeometryKind::Ring;
    lat.nx_ = n_sites;
    lat.ny_ = 1;
    lat.spacing_ = spacing;
    const double radius = spacing / (2.0 * std::sin(std::numbers::pi / n_sites));
    for (int i = 0; i < n_sites; ++i) {
        const double theta = 2.0 * std::numbers::pi * i / n_sites;
        lat.coords_.push_back({radius * std::cos(theta), radius * std::sin(theta)});
    }
    for (int i = 0; i < n_sites; ++i) {
        const int j = (i + 1) % n_sites;
        lat.bonds_.push_back({i, j, midpoint(lat.coords_[i], lat.coords_[j]), i % 2 == 0 ? 1 : -1});
    }
    lat.boundary_mask_.assign(lat.bonds_.size(), false);
    return lat;
}

Lattice Lattice::square(int nx, int ny, double spacing) {
    require(nx >= 2 && ny >= 2, ErrorKind::InvalidGeometry,
            "square lattice needs nx, ny >= 2, got " + std::to_string(nx) + "x" + std::to_string(ny));
    require(spacing > 0, ErrorKind::InvalidGeometry, "spacing must be positive");
    Lattice lat;
    lat.geometry_ = GeometryKind::Square;
    lat.nx_ = nx;
    lat.ny_ = ny;
    lat.spacing_ = spacing;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) lat.coords_.push_back({x * spacing, y * spacing});

    auto add_bond = [&](int x, int y, int x2, int y2) {
        const int i = x + nx * y;
        const int j = x2 + nx * y2;
        const int parity = (x + y) % 2 == 0 ? 1 : -1;
        lat.bonds_.push_back({i, j, midpoint(lat.coords_[i], lat.coords_[j]), parity});
        lat.boundary_mask_.push_back(lat.on_perimeter(i) && lat.on_perimeter(j));
    };
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            if (x + 1 < nx) add_bond(x, y, x + 1, y);
            if (y + 1 < ny) add_bond(x, y, x, y + 1);
        }
    }
    return lat;
}

std::pair<int, int> Lattice::grid_position(int site) const {
    if (geometry_ == GeometryKind::Ring) return {site, 0};
    return {site % nx_, site / nx_};
}

bool Lattice::on_perimeter(int site) const {
    if (geometry_ == GeometryKind::Ring) return false;
    const auto [x, y] = grid_position(site);
    return x == 0 || y == 0 || x == nx_ - 1 || y == ny_ - 1;
}

double Lattice::ring_radius() const {
    require(geometry_ == GeometryKind::Ring, ErrorKind::InvalidGeometry, "not a ring");
    return spacing_ / (2.0 * std::sin(std::numbers::pi / nx_));
}

double Lattice::site_distance(int i, int j) const { return distance(coords_[i], coords_[j]); }

Lattice Lattice::without_sites(const std::vector<bool>& removed) const {
    require(static_cast<int>(removed.size()) == n_sites(), ErrorKind::Dimension,
            "removal mask length mismatch");
    std::vector<int> new_index(coords_.size(), -1);
    Lattice out;
    out.geometry_ = geometry_;
    out.nx_ = nx_;
    out.ny_ = ny_;
    out.spacing_ = spacing_;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        if (removed[i]) continue;
        new_index[i] = static_cast<int>(out.coords_.size());
        out.coords_.push_back(coords_[i]);
    }
    for (std::size_t b = 0; b < bonds_.size(); ++b) {
        const Bond& bond = bonds_[b];
        if (new_index[bond.i] < 0 || new_index[bond.j] < 0) continue;
        out.bonds_.push_back({new_index[bond.i], new_index[bond.j], bond.center, bond.parity});
        out.boundary_mask_.push_back(boundary_mask_[b]);
    }
    return out;
}

Lattice Lattice::with_coords(std::vector<Vec2> coords) const {
    require(coords.size() == coords_.size(), ErrorKind::Dimension, "coordinate count mismatch");
    Lattice out = *this;
    out.coords_ = std::move(coords);
    for (auto& bond : out.bonds_) bond.center = midpoint(out.coords_[bond.i], out.coords_[bond.j]);
    return out;
}

std::vector<std::vector<int>> Lattice::symmetry_permutations() const {
    std::vector<std::vector<int>> perms;
    const int n = n_sites();
    if (geometry_ == GeometryKind::Ring) {
        if (n != nx_) return {identity_permutation(n)};
        for (int shift = 0; shift < n; ++shift) {
            std::vector<int> rot(n), refl(n);
            for (int i = 0; i < n; ++i) {
                rot[i] = (i + shift) % n;
                refl[i] = ((shift - i) % n + n) % n;
            }
            perms.push_back(std::move(rot));
            perms.push_back(std::move(refl));
        }
    } else {
        if (n != nx_ * ny_) return {identity_permutation(n)};
        // (x, y) -> transforms of the grid; transposes only when square.
        std::vector<std::function<std::pair<int, int>(int, int)>> maps = {
            [](int x, int y) { return std::pair{x, y}; },
            [&](int x, int y) { return std::pair{nx_ - 1 - x, y}; },
            [&](int x, int y) { return std::pair{x, ny_ - 1 - y}; },
            [&](int x, int y) { return std::pair{nx_ - 1 - x, ny_ - 1 - y}; },
        };
        if (nx_ == ny_) {
            maps.push_back([](int x, int y) { return std::pair{y, x}; });
            maps.push_back([&](int x, int y) { return std::pair{nx_ - 1 - y, x}; });
            maps.push_back([&](int x, int y) { return std::pair{y, nx_ - 1 - x}; });
            maps.push_back([&](int x, int y) { return std::pair{nx_ - 1 - y, nx_ - 1 - x}; });
        }
        for (const auto& m : maps) {
            std::vector<int> p(n);
            for (int s = 0; s < n; ++s) {
                const auto [x, y] = grid_position(s);
                const auto [x2, y2] = m(x, y);
                p[s] = x2 + nx_ * y2;
            }
            perms.push_back(std::move(p));
        }
    }
    return perms;
}

nlohmann::json Lattice::to_json() const {
    nlohmann::json j;
    j["geometry"] = geometry_ == GeometryKind::Ring ? "ring" : "square";
    j["nx"] = nx_;
    j["ny"] = ny_;
    j["spacing"] = spacing_;
    auto coords = nlohmann::json::array();
    for (const auto& c : coords_) coords.push_back({c.x, c.y});
    j["coords"] = std::move(coords);
    auto bonds = nlohmann::json::array();
    for (const auto& b : bonds_) bonds.push_back({b.i, b.j, b.parity});
    j["bonds"] = std::move(bonds);
    j["boundary_mask"] = boundary_mask_;
    return j;
}

Lattice Lattice::from_json(const nlohmann::json& j) {
    try {
        Lattice lat;
        const std::string geom = j.at("geometry").get<std::string>();
        require(geom == "ring" || geom == "square", ErrorKind::InvalidGeometry,
                "unknown geometry '" + geom + "'");
        lat.geometry_ = geom == "ring" ? GeometryKind::Ring : GeometryKind::Square;
        lat.nx_ = j.at("nx").get<int>();
        lat.ny_ = j.at("ny").get<int>();
        lat.spacing_ = j.at("spacing").get<double>();
        for (const auto& c : j.at("coords")) lat.coords_.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        for (const auto& b : j.at("bonds")) {
            const int i = b.at(0).get<int>();
            const int k = b.at(1).get<int>();
            require(i >= 0 && k >= 0 && i < lat.n_sites() && k < lat.n_sites(), ErrorKind::InvalidGeometry,
                    "bond index out of range");
            lat.bonds_.push_back({i, k, midpoint(lat.coords_[i], lat.coords_[k]), b.at(2).get<int>()});
        }
        lat.boundary_mask_ = j.at("boundary_mask").get<std::vector<bool>>();
        require(lat.boundary_mask_.size() == lat.bonds_.size(), ErrorKind::InvalidGeometry,
                "boundary mask length mismatch");
        return lat;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, std::string("malformed lattice document: ") + e.what());
    }
}

std::string Lattice::hash() const { return sha256_hex(to_json().dump()); }

double chord_distance(int n_sites, int separation) {
    require(n_sites >= 1, ErrorKind::Domain, "chord distance needs n_sites >= 1");
    require(separation >= 0 && separation <= n_sites, ErrorKind::Domain,
            "separation " + std::to_string(separation) + " outside [0, " + std::to_string(n_sites) + "]");
    return n_sites / std::numbers::pi * std::sin(std::numbers::pi * separation / n_sites);
}

DisorderSample identity_disorder(const Lattice& lattice) {
    const int n = lattice.n_sites();
    return {lattice.coords(), Eigen::MatrixXd::Ones(n, n)};
}

DisorderSample sample_disorder(const Lattice& lattice, double static_v_sigma, const ThermalMotion& thermal,
                               std::uint64_t seed) {
    require(static_v_sigma >= 0 && thermal.sigma_r >= 0 && thermal.sigma_v >= 0 && thermal.t_evolve >= 0,
            ErrorKind::Domain, "disorder magnitudes must be non-negative");
    DisorderSample sample = identity_disorder(lattice);
    const int n = lattice.n_sites();
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    if (static_v_sigma > 0) {
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double f = std::max(kMinCouplingFactor, 1.0 + static_v_sigma * gauss(rng));
                sample.v_scale_factors(i, j) = f;
                sample.v_scale_factors(j, i) = f;
            }
        }
    }
    if (thermal.sigma_r > 0 || (thermal.sigma_v > 0 && thermal.t_evolve > 0)) {
        for (auto& c : sample.displaced_coords) {
            const double dx = thermal.sigma_r * gauss(rng) + thermal.sigma_v * gauss(rng) * thermal.t_evolve;
            const double dy = thermal.sigma_r * gauss(rng) + thermal.sigma_v * gauss(rng) * thermal.t_evolve;
            c.x += dx;
            c.y += dy;
        }
    }
    return sample;
}

}  // namespace rydcrit
