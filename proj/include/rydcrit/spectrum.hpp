#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydcrit/hamiltonian.hpp"

namespace rydcrit {

/// Site permutations under which the Hamiltonian is invariant, restricted to
/// the fully symmetric sector. Vectors in the sector are stored as one
/// coefficient per orbit of basis states (normalized orbit states).
class SymmetricSector {
   public:
    /// Keeps only the permutations that map `spec.v_matrix` onto itself and
    /// the basis onto itself. The identity is always retained.
    SymmetricSector(const BasisPtr& basis, const HamiltonianSpec& spec,
                    const std::vector<std::vector<int>>& permutations);

    std::size_t dim() const { return orbit_size_.size(); }
    std::size_t group_order() const { return group_order_; }

    /// Full-basis amplitudes of a sector vector.
    void expand(const Eigen::VectorXd& reduced, Eigen::VectorXd& full) const;
    /// Projection of a symmetric full-basis vector onto the orbit states.
    void reduce(const Eigen::VectorXd& full, Eigen::VectorXd& reduced) const;

   private:
    std::vector<std::uint32_t> orbit_of_;
    std::vector<double> orbit_size_;
    std::size_t group_order_ = 1;
};

struct EigenOptions {
    double rel_tol = 1e-8;         // residual bound relative to the operator norm estimate
    int krylov_dim = 24;
    int max_restarts = 2000;
    std::uint64_t seed = 0x5eed5eedULL;
    /// Site permutations for sector restriction; empty means the whole space.
    std::vector<std::vector<int>> symmetries;
    BasisPtr basis;  // defaults to the full basis
};

struct GroundState {
    double energy = 0.0;
    StateVector state;
    double residual = 0.0;
};

struct GapResult {
    double e0 = 0.0;
    double e1 = 0.0;
    double gap = 0.0;
    bool degenerate = false;  // gap below 1e-8 * omega
    double residual = 0.0;
    StateVector ground;
};

/// Lowest `count` eigenpairs of a real symmetric operator given by `apply`,
/// found by thick-restart Lanczos with full re-orthogonalization. Small
/// problems are diagonalized densely.
struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    double residual = 0.0;
    int restarts = 0;
};
using RealOperator = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
EigenPairs lowest_eigenpairs(const RealOperator& apply, std::size_t dim, int count, double abs_tol,
                             const EigenOptions& options);

GroundState ground_state(const HamiltonianSpec& spec, const EigenOptions& options = {});

/// E1 - E0. With symmetries supplied both levels come from the symmetric
/// sector, which always contains the ground state.
GapResult gap(const HamiltonianSpec& spec, const EigenOptions& options = {});

struct GapProfile {
    std::vector<double> delta_grid;
    std::vector<double> gaps;
    std::vector<double> ground_energies;
    std::vector<bool> degenerate;
    HamiltonianSpec spec_template;

    std::size_t size() const { return delta_grid.size(); }
    /// Linear interpolation of the gap; domain error outside the grid.
    double gap_at(double delta) const;
    /// Grid point with the smallest gap, refined by a parabola through its
    /// neighbours when it is interior.
    double minimum_location() const;
    bool has_interior_minimum() const;
    std::string to_csv() const;
};

GapProfile gap_profile(const HamiltonianSpec& spec_template, const std::vector<double>& delta_grid,
                       const EigenOptions& options = {});

}  // namespace rydcrit
