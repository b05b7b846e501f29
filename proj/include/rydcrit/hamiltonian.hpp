#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rydcrit/lattice.hpp"

namespace rydcrit {

using cd = std::complex<double>;

/// Rydberg drive and interaction parameters. Units: rad/us for omega, delta
/// and v_matrix; rad/us * a^6 for c6.
struct HamiltonianSpec {
    double omega = 0.0;
    double delta = 0.0;
    double c6 = 0.0;
    Eigen::MatrixXd v_matrix;  // symmetric, zero diagonal
    std::optional<double> interaction_cutoff;

    int n_sites() const { return static_cast<int>(v_matrix.rows()); }
    double blockade_radius() const;

    /// V_ij = c6 / R_ij^6 from (optionally displaced) coordinates, times the
    /// disorder factors. Pairs beyond the cutoff are dropped.
    static HamiltonianSpec from_lattice(const Lattice& lattice, double omega, double delta, double c6,
                                        const DisorderSample* disorder = nullptr,
                                        std::optional<double> cutoff = std::nullopt);
    /// Same, parameterized by R_b / a (c6 = omega * rb^6).
    static HamiltonianSpec from_blockade_radius(const Lattice& lattice, double omega, double delta,
                                                double rb_over_a, const DisorderSample* disorder = nullptr,
                                                std::optional<double> cutoff = std::nullopt);
    HamiltonianSpec with_delta(double d) const;
    HamiltonianSpec with_omega(double w) const;
};

double blockade_radius(double c6, double omega);
double c6_for_blockade_radius(double rb, double omega);

enum class Truncation { Full, BlockadeTruncated };

/// Occupation basis. Site i is bit i, n_i is the bit value and |g...g> is
/// index 0. The truncated variant keeps only bitstrings without two
/// excitations within the radius; its states are sorted ascending.
class BasisSpace {
   public:
    static std::shared_ptr<const BasisSpace> full(int n_sites);
    static std::shared_ptr<const BasisSpace> blockade_truncated(const Lattice& lattice, double radius);

    int n_sites() const { return n_sites_; }
    Truncation truncation() const { return truncation_; }
    double radius() const { return radius_; }
    std::size_t dim() const;
    bool is_full() const { return truncation_ == Truncation::Full; }

    std::uint64_t state(std::size_t index) const { return is_full() ? index : states_[index]; }
    std::optional<std::size_t> index_of(std::uint64_t bits) const;

    /// Indices reachable by one site flip, truncated bases only (CSR layout).
    std::span<const std::uint32_t> flip_neighbours(std::size_t index) const;

    bool operator==(const BasisSpace& other) const;

   private:
    BasisSpace() = default;
    int n_sites_ = 0;
    Truncation truncation_ = Truncation::Full;
    double radius_ = 0.0;
    std::vector<std::uint64_t> states_;
    std::vector<std::uint32_t> nb_offsets_;
    std::vector<std::uint32_t> nb_indices_;
};

using BasisPtr = std::shared_ptr<const BasisSpace>;

struct StateVector {
    BasisPtr basis;
    Eigen::VectorXcd amplitudes;

    static StateVector basis_state(BasisPtr basis, std::uint64_t bits);
    static StateVector zeros(BasisPtr basis);

    std::size_t dim() const { return static_cast<std::size_t>(amplitudes.size()); }
    double norm() const;
    StateVector normalized() const;
    bool compatible_with(const BasisSpace& b) const { return basis && *basis == b; }
};

double fidelity(const StateVector& a, const StateVector& b);

/// Matrix-free operator of the form
///   G = c_flip * sum_i X_i + c_occ * sum_i n_i + c_int * sum_{i<j} V_ij n_i n_j + c_const
/// over a fixed basis. With c_flip = omega/2, c_occ = -delta, c_int = 1 this is
/// the Rydberg Hamiltonian; complex coefficients carry the anti-Hermitian part
/// of the no-jump generator during open evolution. Diagonal pieces are
/// precomputed per basis state.
class HamiltonianOperator {
   public:
    struct Coefficients {
        cd flip = 0.0;
        cd occupation = 0.0;
        cd interaction = 1.0;
        cd constant = 0.0;

        static Coefficients rydberg(double omega, double delta) { return {omega / 2.0, -delta, 1.0, 0.0}; }
        Coefficients operator*(cd s) const { return {flip * s, occupation * s, interaction * s, constant * s}; }
        Coefficients operator+(const Coefficients& o) const {
            return {flip + o.flip, occupation + o.occupation, interaction + o.interaction, constant + o.constant};
        }
    };

    HamiltonianOperator(const HamiltonianSpec& spec, BasisPtr basis);

    const BasisPtr& basis() const { return basis_; }
    std::size_t dim() const { return basis_->dim(); }
    int n_sites() const { return basis_->n_sites(); }

    void apply(const Coefficients& c, const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const;
    void apply_real(double omega, double delta, const Eigen::VectorXd& in, Eigen::VectorXd& out) const;

    const std::vector<double>& interaction_energy() const { return interaction_; }
    const std::vector<std::uint8_t>& occupation_count() const { return popcount_; }

    /// Upper bound on the spectral radius (Gershgorin).
    double norm_bound(double omega, double delta) const;

   private:
    BasisPtr basis_;
    std::vector<double> interaction_;
    std::vector<std::uint8_t> popcount_;
    double max_interaction_ = 0.0;
};

StateVector apply_h(const HamiltonianSpec& spec, const StateVector& psi);
StateVector apply_h_shifted(const HamiltonianSpec& spec, double shift, const StateVector& psi);
double expectation_energy(const HamiltonianSpec& spec, const StateVector& psi);

/// Dense full-basis matrices assembled from Kronecker products of single-site
/// operators; independent of the matrix-free gather path. n_sites <= 12.
inline constexpr int kMaxDenseSites = 12;
Eigen::MatrixXd dense_hamiltonian(const HamiltonianSpec& spec);
Eigen::MatrixXcd embed_site_operator(int n_sites, int site, const Eigen::Matrix2cd& op);
/// Diagonal of n_i in the full basis.
Eigen::VectorXd occupation_diagonal(int n_sites, int site);

}  // namespace rydcrit
