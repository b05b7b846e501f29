#include "rydcrit/hamiltonian.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <unsupported/Eigen/KroneckerProduct>

#include "rydcrit/errors.hpp"
#include "rydcrit/parallel.hpp"

namespace rydcrit {

namespace {

constexpr std::ptrdiff_t kParallelDim = 1 << 12;
constexpr int kMaxFullSites = 30;

}  // namespace

double blockade_radius(double c6, double omega) {
    require(c6 > 0 && omega > 0, ErrorKind::Domain, "blockade radius needs c6 > 0 and omega > 0");
    return std::pow(c6 / omega, 1.0 / 6.0);
}

double c6_for_blockade_radius(double rb, double omega) {
    require(rb > 0 && omega > 0, ErrorKind::Domain, "need rb > 0 and omega > 0");
    return omega * std::pow(rb, 6);
}

double HamiltonianSpec::blockade_radius() const { return rydcrit::blockade_radius(c6, omega); }

HamiltonianSpec HamiltonianSpec::from_lattice(const Lattice& lattice, double omega, double delta, double c6,
                                              const DisorderSample* disorder, std::optional<double> cutoff) {
    const int n = lattice.n_sites();
    HamiltonianSpec spec;
    spec.omega = omega;
    spec.delta = delta;
    spec.c6 = c6;
    spec.interaction_cutoff = cutoff;
    spec.v_matrix = Eigen::MatrixXd::Zero(n, n);
    const auto& coords = disorder ? disorder->displaced_coords : lattice.coords();
    require(static_cast<int>(coords.size()) == n, ErrorKind::Dimension, "disorder sample size mismatch");
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double r = distance(coords[i], coords[j]);
            if (cutoff && r > *cutoff) continue;
            double v = c6 / std::pow(r, 6);
            if (disorder) v *= disorder->v_scale_factors(i, j);
            spec.v_matrix(i, j) = v;
            spec.v_matrix(j, i) = v;
        }
    }
    return spec;
}

HamiltonianSpec HamiltonianSpec::from_blockade_radius(const Lattice& lattice, double omega, double delta,
                                                      double rb_over_a, const DisorderSample* disorder,
                                                      std::optional<double> cutoff) {
    return from_lattice(lattice, omega, delta, c6_for_blockade_radius(rb_over_a * lattice.spacing(), omega),
                        disorder, cutoff);
}

HamiltonianSpec HamiltonianSpec::with_delta(double d) const {
    HamiltonianSpec s = *this;
    s.delta = d;
    return s;
}

HamiltonianSpec HamiltonianSpec::with_omega(double w) const {
    HamiltonianSpec s = *this;
    s.omega = w;
    return s;
}

// ---------------------------------------------------------------------------
// BasisSpace

std::shared_ptr<const BasisSpace> BasisSpace::full(int n_sites) {
    require(n_sites >= 1 && n_sites <= kMaxFullSites, ErrorKind::Capacity,
            "full basis supports 1.." + std::to_string(kMaxFullSites) + " sites");
    auto b = std::shared_ptr<BasisSpace>(new BasisSpace());
    b->n_sites_ = n_sites;
    b->truncation_ = Truncation::Full;
    return b;
}

std::shared_ptr<const BasisSpace> BasisSpace::blockade_truncated(const Lattice& lattice, double radius) {
    require(radius > 0, ErrorKind::Domain, "truncation radius must be positive");
    const int n = lattice.n_sites();
    require(n >= 1 && n <= 63, ErrorKind::Capacity, "truncated basis supports up to 63 sites");
    std::vector<std::uint64_t> conflict(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && lattice.site_distance(i, j) <= radius) conflict[i] |= std::uint64_t{1} << j;

    auto b = std::shared_ptr<BasisSpace>(new BasisSpace());
    b->n_sites_ = n;
    b->truncation_ = Truncation::BlockadeTruncated;
    b->radius_ = radius;

    // Depth-first enumeration of independent sets of the blockade graph.
    std::vector<std::pair<int, std::uint64_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [site, bits] = stack.back();
        stack.pop_back();
        if (site == n) {
            b->states_.push_back(bits);
            continue;
        }
        stack.push_back({site + 1, bits});
        if ((conflict[site] & bits) == 0) stack.push_back({site + 1, bits | (std::uint64_t{1} << site)});
    }
    std::sort(b->states_.begin(), b->states_.end());
    require(b->states_.size() < (std::size_t{1} << 32), ErrorKind::Capacity, "truncated basis too large");

    b->nb_offsets_.reserve(b->states_.size() + 1);
    b->nb_offsets_.push_back(0);
    for (std::uint64_t s : b->states_) {
        for (int i = 0; i < n; ++i) {
            const std::uint64_t t = s ^ (std::uint64_t{1} << i);
            auto it = std::lower_bound(b->states_.begin(), b->states_.end(), t);
            if (it != b->states_.end() && *it == t)
                b->nb_indices_.push_back(static_cast<std::uint32_t>(it - b->states_.begin()));
        }
        b->nb_offsets_.push_back(static_cast<std::uint32_t>(b->nb_indices_.size()));
    }
    return b;
}

std::size_t BasisSpace::dim() const { return is_full() ? (std::size_t{1} << n_sites_) : states_.size(); }

std::optional<std::size_t> BasisSpace::index_of(std::uint64_t bits) const {
    if (is_full()) {
        if (bits >> n_sites_) return std::nullopt;
        return static_cast<std::size_t>(bits);
    }
    auto it = std::lower_bound(states_.begin(), states_.end(), bits);
    if (it == states_.end() || *it != bits) return std::nullopt;
    return static_cast<std::size_t>(it - states_.begin());
}

std::span<const std::uint32_t> BasisSpace::flip_neighbours(std::size_t index) const {
    require(!is_full(), ErrorKind::Domain, "flip table exists only for truncated bases");
    return {nb_indices_.data() + nb_offsets_[index], nb_offsets_[index + 1] - nb_offsets_[index]};
}

bool BasisSpace::operator==(const BasisSpace& other) const {
    if (this == &other) return true;
    return n_sites_ == other.n_sites_ && truncation_ == other.truncation_ && radius_ == other.radius_ &&
           states_ == other.states_;
}

// ---------------------------------------------------------------------------
// StateVector

StateVector StateVector::basis_state(BasisPtr basis, std::uint64_t bits) {
    auto idx = basis->index_of(bits);
    require(idx.has_value(), ErrorKind::Domain, "bitstring not in basis");
    StateVector s = zeros(std::move(basis));
    s.amplitudes[static_cast<Eigen::Index>(*idx)] = 1.0;
    return s;
}

StateVector StateVector::zeros(BasisPtr basis) {
    const auto d = static_cast<Eigen::Index>(basis->dim());
    return {std::move(basis), Eigen::VectorXcd::Zero(d)};
}

double StateVector::norm() const { return std::sqrt(squared_norm(amplitudes)); }

StateVector StateVector::normalized() const {
    const double n = norm();
    require(n > 0, ErrorKind::Domain, "cannot normalize the zero vector");
    return {basis, amplitudes / n};
}

double fidelity(const StateVector& a, const StateVector& b) {
    require(a.basis && b.basis && *a.basis == *b.basis, ErrorKind::Dimension, "basis mismatch");
    return std::norm(dot(a.amplitudes, b.amplitudes));
}

// ---------------------------------------------------------------------------
// HamiltonianOperator

HamiltonianOperator::HamiltonianOperator(const HamiltonianSpec& spec, BasisPtr basis) : basis_(std::move(basis)) {
    require(basis_ != nullptr, ErrorKind::Dimension, "null basis");
    const int n = basis_->n_sites();
    require(spec.n_sites() == n, ErrorKind::Dimension,
            "spec has " + std::to_string(spec.n_sites()) + " sites, basis has " + std::to_string(n));
    const std::size_t d = basis_->dim();
    interaction_.assign(d, 0.0);
    popcount_.assign(d, 0);
    const Eigen::MatrixXd& v = spec.v_matrix;
    if (basis_->is_full()) {
        // I(s) = I(s without lowest bit l) + sum_{j in rest} V_lj
        for (std::size_t s = 1; s < d; ++s) {
            const int low = std::countr_zero(s);
            std::size_t rest = s & (s - 1);
            double e = interaction_[rest];
            for (std::size_t r = rest; r; r &= r - 1) e += v(low, std::countr_zero(r));
            interaction_[s] = e;
            popcount_[s] = static_cast<std::uint8_t>(std::popcount(s));
        }
    } else {
        for (std::size_t k = 0; k < d; ++k) {
            const std::uint64_t s = basis_->state(k);
            double e = 0.0;
            for (std::uint64_t a = s; a; a &= a - 1) {
                const int i = std::countr_zero(a);
                for (std::uint64_t b = a & (a - 1); b; b &= b - 1) e += v(i, std::countr_zero(b));
            }
            interaction_[k] = e;
            popcount_[k] = static_cast<std::uint8_t>(std::popcount(s));
        }
    }
    for (double e : interaction_) max_interaction_ = std::max(max_interaction_, std::abs(e));
}

void HamiltonianOperator::apply(const Coefficients& c, const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    const auto d = static_cast<std::ptrdiff_t>(dim());
    require(in.size() == d, ErrorKind::Dimension, "state dimension does not match operator");
    out.resize(d);
    const int n = n_sites();
    const bool full = basis_->is_full();
#pragma omp parallel for schedule(static) if (d >= kParallelDim)
    for (std::ptrdiff_t s = 0; s < d; ++s) {
        cd acc = (c.occupation * static_cast<double>(popcount_[s]) + c.interaction * interaction_[s] + c.constant) *
                 in[s];
        cd flips = 0.0;
        if (full) {
            for (int i = 0; i < n; ++i) flips += in[s ^ (std::ptrdiff_t{1} << i)];
        } else {
            for (std::uint32_t t : basis_->flip_neighbours(static_cast<std::size_t>(s))) flips += in[t];
        }
        out[s] = acc + c.flip * flips;
    }
}

void HamiltonianOperator::apply_real(double omega, double delta, const Eigen::VectorXd& in,
                                     Eigen::VectorXd& out) const {
    const auto d = static_cast<std::ptrdiff_t>(dim());
    require(in.size() == d, ErrorKind::Dimension, "state dimension does not match operator");
    out.resize(d);
    const int n = n_sites();
    const bool full = basis_->is_full();
    const double half = omega / 2.0;
#pragma omp parallel for schedule(static) if (d >= kParallelDim)
    for (std::ptrdiff_t s = 0; s < d; ++s) {
        double flips = 0.0;
        if (full) {
            for (int i = 0; i < n; ++i) flips += in[s ^ (std::ptrdiff_t{1} << i)];
        } else {
            for (std::uint32_t t : basis_->flip_neighbours(static_cast<std::size_t>(s))) flips += in[t];
        }
        out[s] = (interaction_[s] - delta * popcount_[s]) * in[s] + half * flips;
    }
}

double HamiltonianOperator::norm_bound(double omega, double delta) const {
    return max_interaction_ + std::abs(delta) * n_sites() + std::abs(omega) / 2.0 * n_sites();
}

// ---------------------------------------------------------------------------
// Convenience wrappers

StateVector apply_h_shifted(const HamiltonianSpec& spec, double shift, const StateVector& psi) {
    require(psi.basis != nullptr, ErrorKind::Dimension, "state has no basis");
    require(spec.n_sites() == psi.basis->n_sites(), ErrorKind::Dimension, "state and spec site counts differ");
    HamiltonianOperator op(spec, psi.basis);
    auto c = HamiltonianOperator::Coefficients::rydberg(spec.omega, spec.delta);
    c.constant = -shift;
    StateVector out{psi.basis, {}};
    op.apply(c, psi.amplitudes, out.amplitudes);
    return out;
}

StateVector apply_h(const HamiltonianSpec& spec, const StateVector& psi) { return apply_h_shifted(spec, 0.0, psi); }

double expectation_energy(const HamiltonianSpec& spec, const StateVector& psi) {
    const StateVector h = apply_h(spec, psi);
    return dot(psi.amplitudes, h.amplitudes).real() / squared_norm(psi.amplitudes);
}

// ---------------------------------------------------------------------------
// Dense reference construction

Eigen::MatrixXcd embed_site_operator(int n_sites, int site, const Eigen::Matrix2cd& op) {
    require(n_sites >= 1 && n_sites <= kMaxDenseSites, ErrorKind::Capacity,
            "dense operators limited to " + std::to_string(kMaxDenseSites) + " sites");
    require(site >= 0 && site < n_sites, ErrorKind::Domain, "site out of range");
    // Kronecker order: the last factor is the least significant bit (site 0).
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(1, 1);
    for (int k = n_sites - 1; k >= 0; --k) {
        const Eigen::MatrixXcd factor = (k == site) ? Eigen::MatrixXcd(op) : Eigen::MatrixXcd::Identity(2, 2);
        m = Eigen::kroneckerProduct(m, factor).eval();
    }
    return m;
}

Eigen::VectorXd occupation_diagonal(int n_sites, int site) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(1);
    for (int k = n_sites - 1; k >= 0; --k) {
        Eigen::Vector2d f = (k == site) ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(1.0, 1.0);
        v = Eigen::kroneckerProduct(v, f).eval();
    }
    return v;
}

Eigen::MatrixXd dense_hamiltonian(const HamiltonianSpec& spec) {
    const int n = spec.n_sites();
    require(n >= 1 && n <= kMaxDenseSites, ErrorKind::Capacity,
            "dense Hamiltonian limited to " + std::to_string(kMaxDenseSites) + " sites");
    const Eigen::Index d = Eigen::Index{1} << n;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    Eigen::Matrix2cd x;
    x << 0.0, 1.0, 1.0, 0.0;
    std::vector<Eigen::VectorXd> occ;
    for (int i = 0; i < n; ++i) occ.push_back(occupation_diagonal(n, i));
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        h += (spec.omega / 2.0) * embed_site_operator(n, i, x).real();
        diag -= spec.delta * occ[i];
        for (int j = i + 1; j < n; ++j) diag += spec.v_matrix(i, j) * occ[i].cwiseProduct(occ[j]);
    }
    h.diagonal() += diag;
    return h;
}

}  // namespace rydcrit
