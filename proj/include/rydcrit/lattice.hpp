#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace rydcrit {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(const Vec2& a, const Vec2& b);

enum class GeometryKind { Ring, Square };

/// Nearest-neighbour pair. `parity` is (-1)^(x_i + y_i) of the first site
/// (site index parity on rings); the first site fixes the sign of the 2D
/// bond field.
struct Bond {
    int i = 0;
    int j = 0;
    Vec2 center;
    int parity = 1;
};

/// Ring or open square array in units of the lattice spacing. Immutable once
/// built.
class Lattice {
   public:
    static Lattice ring(int n_sites, double spacing = 1.0);
    static Lattice square(int nx, int ny, double spacing = 1.0);

    int n_sites() const { return static_cast<int>(coords_.size()); }
    GeometryKind geometry() const { return geometry_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double spacing() const { return spacing_; }
    const std::vector<Vec2>& coords() const { return coords_; }
    const std::vector<Bond>& bonds() const { return bonds_; }
    /// Per-bond flag, square lattices only (all false on rings).
    const std::vector<bool>& boundary_bond_mask() const { return boundary_mask_; }

    /// Grid position of a square-lattice site (site = x + nx * y).
    std::pair<int, int> grid_position(int site) const;
    bool on_perimeter(int site) const;
    double ring_radius() const;

    double site_distance(int i, int j) const;

    /// Same lattice with the given sites removed (atom loss). Coordinates of
    /// surviving sites are unchanged; bonds touching removed sites are dropped.
    /// The returned lattice keeps the parent geometry tag for bookkeeping only.
    Lattice without_sites(const std::vector<bool>& removed) const;

    /// Copy with replaced coordinates (disorder displacements).
    Lattice with_coords(std::vector<Vec2> coords) const;

    /// Site permutations mapping the ideal geometry onto itself (dihedral group
    /// of the ring, D4 or D2 of the square grid). Identity included.
    std::vector<std::vector<int>> symmetry_permutations() const;

    nlohmann::json to_json() const;
    static Lattice from_json(const nlohmann::json& j);
    /// Hex digest of the canonical JSON form.
    std::string hash() const;

   private:
    Lattice() = default;
    GeometryKind geometry_ = GeometryKind::Ring;
    int nx_ = 0;
    int ny_ = 0;
    double spacing_ = 1.0;
    std::vector<Vec2> coords_;
    std::vector<Bond> bonds_;
    std::vector<bool> boundary_mask_;
};

/// Conformal distance on a periodic chain, (N/pi) sin(pi j / N), in units of a.
double chord_distance(int n_sites, int separation);

struct ThermalMotion {
    double sigma_r = 0.0;   // initial position spread (a)
    double sigma_v = 0.0;   // velocity spread (a / us)
    double t_evolve = 0.0;  // free-flight time (us)
};

struct DisorderSample {
    std::vector<Vec2> displaced_coords;
    /// Symmetric per-pair factors on V_ij; diagonal is 1.
    Eigen::MatrixXd v_scale_factors;
};

/// Smallest allowed multiplicative factor on a coupling.
inline constexpr double kMinCouplingFactor = 0.05;

DisorderSample sample_disorder(const Lattice& lattice, double static_v_sigma,
                               const ThermalMotion& thermal, std::uint64_t seed);

DisorderSample identity_disorder(const Lattice& lattice);

}  // namespace rydcrit
