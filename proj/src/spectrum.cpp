#include "rydcrit/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <Eigen/Eigenvalues>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/parallel.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

namespace {

constexpr std::size_t kDenseLimit = 400;
constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

std::uint64_t permute_bits(std::uint64_t s, const std::vector<int>& p) {
    std::uint64_t out = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if ((s >> i) & 1) out |= std::uint64_t{1} << p[i];
    return out;
}

bool preserves_couplings(const Eigen::MatrixXd& v, const std::vector<int>& p) {
    const double tol = 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = i + 1; j < v.cols(); ++j)
            if (std::abs(v(p[i], p[j]) - v(i, j)) > tol) return false;
    return true;
}

bool preserves_basis(const BasisSpace& basis, const std::vector<int>& p) {
    if (basis.is_full()) return true;
    for (std::size_t k = 0; k < basis.dim(); ++k)
        if (!basis.index_of(permute_bits(basis.state(k), p))) return false;
    return true;
}

Eigen::VectorXd random_unit(std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = g(rng);
    return v / v.norm();
}

// Fix the overall sign so the largest-magnitude component is positive.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v[idx] < 0) v = -v;
}

struct Problem {
    BasisPtr basis;
    std::optional<HamiltonianOperator> op;
    std::optional<SymmetricSector> sector;
    RealOperator apply;
    std::size_t dim = 0;
    double tol = 0.0;
};

Problem make_problem(const HamiltonianSpec& spec, const EigenOptions& options) {
    Problem p;
    p.basis = options.basis ? options.basis : BasisSpace::full(spec.n_sites());
    p.op.emplace(spec, p.basis);
    p.tol = options.rel_tol * p.op->norm_bound(spec.omega, spec.delta);
    const HamiltonianOperator* op = &*p.op;
    const double omega = spec.omega;
    const double delta = spec.delta;
    if (options.symmetries.empty()) {
        p.dim = p.basis->dim();
        p.apply = [op, omega, delta](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
            op->apply_real(omega, delta, in, out);
        };
    } else {
        p.sector.emplace(p.basis, spec, options.symmetries);
        p.dim = p.sector->dim();
        const SymmetricSector* sec = &*p.sector;
        p.apply = [op, sec, omega, delta](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
            thread_local Eigen::VectorXd full_in, full_out;
            sec->expand(in, full_in);
            op->apply_real(omega, delta, full_in, full_out);
            sec->reduce(full_out, out);
        };
    }
    return p;
}

StateVector to_state(const Problem& p, const Eigen::VectorXd& v) {
    Eigen::VectorXd full;
    if (p.sector)
        p.sector->expand(v, full);
    else
        full = v;
    fix_sign(full);
    return {p.basis, full.cast<cd>()};
}

}  // namespace

// ---------------------------------------------------------------------------

SymmetricSector::SymmetricSector(const BasisPtr& basis, const HamiltonianSpec& spec,
                                 const std::vector<std::vector<int>>& permutations) {
    const int n = basis->n_sites();
    require(spec.n_sites() == n, ErrorKind::Dimension, "spec and basis site counts differ");
    std::vector<std::vector<int>> group;
    for (const auto& p : permutations) {
        require(static_cast<int>(p.size()) == n, ErrorKind::Dimension, "permutation length mismatch");
        if (preserves_couplings(spec.v_matrix, p) && preserves_basis(*basis, p)) group.push_back(p);
    }
    if (group.empty()) {
        std::vector<int> id(n);
        for (int i = 0; i < n; ++i) id[i] = i;
        group.push_back(std::move(id));
    }
    group_order_ = group.size();

    const std::size_t d = basis->dim();
    orbit_of_.assign(d, kUnassigned);
    for (std::size_t k = 0; k < d; ++k) {
        if (orbit_of_[k] != kUnassigned) continue;
        const auto id = static_cast<std::uint32_t>(orbit_size_.size());
        double size = 0;
        const std::uint64_t s = basis->state(k);
        for (const auto& p : group) {
            const std::size_t img = *basis->index_of(permute_bits(s, p));
            if (orbit_of_[img] == kUnassigned) {
                orbit_of_[img] = id;
                size += 1;
            }
        }
        orbit_size_.push_back(size);
    }
}

void SymmetricSector::expand(const Eigen::VectorXd& reduced, Eigen::VectorXd& full) const {
    const auto d = static_cast<std::ptrdiff_t>(orbit_of_.size());
    full.resize(d);
#pragma omp parallel for schedule(static) if (d >= 4096)
    for (std::ptrdiff_t s = 0; s < d; ++s) {
        const auto o = orbit_of_[s];
        full[s] = reduced[o] / std::sqrt(orbit_size_[o]);
    }
}

void SymmetricSector::reduce(const Eigen::VectorXd& full, Eigen::VectorXd& reduced) const {
    reduced = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(orbit_size_.size()));
    for (std::size_t s = 0; s < orbit_of_.size(); ++s) reduced[orbit_of_[s]] += full[static_cast<Eigen::Index>(s)];
    for (Eigen::Index o = 0; o < reduced.size(); ++o) reduced[o] /= std::sqrt(orbit_size_[o]);
}

// ---------------------------------------------------------------------------

EigenPairs lowest_eigenpairs(const RealOperator& apply, std::size_t dim, int count, double abs_tol,
                             const EigenOptions& options) {
    require(dim >= 1 && count >= 1 && static_cast<std::size_t>(count) <= dim, ErrorKind::Domain,
            "need 1 <= count <= dim");
    const auto n = static_cast<Eigen::Index>(dim);
    EigenPairs out;

    if (dim <= kDenseLimit) {
        Eigen::MatrixXd h(n, n);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n), col;
        for (Eigen::Index k = 0; k < n; ++k) {
            e.setZero();
            e[k] = 1.0;
            apply(e, col);
            h.col(k) = col;
        }
        h = (0.5 * (h + h.transpose())).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        out.values = es.eigenvalues().head(count);
        out.vectors = es.eigenvectors().leftCols(count);
        return out;
    }

    const Eigen::Index m = std::min<Eigen::Index>(std::max(options.krylov_dim, count + 8), n);
    const Eigen::Index keep = std::min<Eigen::Index>(count + 4, m - 2);
    Eigen::MatrixXd V(n, m);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd w, h, h2;
    V.col(0) = random_unit(dim, options.seed);
    Eigen::Index start = 0;
    double beta = 0.0;
    double worst = std::numeric_limits<double>::infinity();
    std::uint64_t refill = 1;

    for (int restart = 0; restart <= options.max_restarts; ++restart) {
        for (Eigen::Index j = start; j < m; ++j) {
            apply(V.col(j), w);
            auto basis = V.leftCols(j + 1);
            h = basis.transpose() * w;
            w.noalias() -= basis * h;
            h2 = basis.transpose() * w;
            w.noalias() -= basis * h2;
            h += h2;
            T.col(j).head(j + 1) = h;
            T.row(j).head(j + 1) = h.transpose();
            beta = w.norm();
            if (j + 1 < m) {
                if (beta > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
                    V.col(j + 1) = w / beta;
                } else {
                    // Invariant subspace reached: continue from a fresh direction.
                    Eigen::VectorXd r = random_unit(dim, derive_seed(options.seed, refill++));
                    for (int pass = 0; pass < 2; ++pass) r -= basis * (basis.transpose() * r);
                    V.col(j + 1) = r / r.norm();
                    T.row(j + 1).setZero();
                    T.col(j + 1).setZero();
                }
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        const Eigen::VectorXd& theta = es.eigenvalues();
        const Eigen::MatrixXd& S = es.eigenvectors();
        worst = 0.0;
        for (int i = 0; i < count; ++i) worst = std::max(worst, beta * std::abs(S(m - 1, i)));
        out.restarts = restart;
        if (worst <= abs_tol || beta == 0.0) {
            out.values = theta.head(count);
            out.vectors = V * S.leftCols(count);
            out.residual = worst;
            return out;
        }
        V.leftCols(keep) = (V * S.leftCols(keep)).eval();
        T.setZero();
        T.diagonal().head(keep) = theta.head(keep);
        V.col(keep) = w / beta;
        start = keep;
    }
    throw ConvergenceError("eigensolver did not converge after " + std::to_string(options.max_restarts) +
                               " restarts (residual " + format_double(worst) + ")",
                           worst);
}

GroundState ground_state(const HamiltonianSpec& spec, const EigenOptions& options) {
    const Problem p = make_problem(spec, options);
    const auto pairs = lowest_eigenpairs(p.apply, p.dim, 1, p.tol, options);
    return {pairs.values[0], to_state(p, pairs.vectors.col(0)), pairs.residual};
}

GapResult gap(const HamiltonianSpec& spec, const EigenOptions& options) {
    const Problem p = make_problem(spec, options);
    require(p.dim >= 2, ErrorKind::Domain, "gap needs at least two states in the searched space");
    const auto pairs = lowest_eigenpairs(p.apply, p.dim, 2, p.tol, options);
    GapResult r;
    r.e0 = pairs.values[0];
    r.e1 = pairs.values[1];
    r.gap = r.e1 - r.e0;
    const double threshold = spec.omega != 0.0 ? 1e-8 * std::abs(spec.omega) : 1e-10;
    r.degenerate = r.gap < threshold;
    r.residual = pairs.residual;
    r.ground = to_state(p, pairs.vectors.col(0));
    return r;
}

GapProfile gap_profile(const HamiltonianSpec& spec_template, const std::vector<double>& delta_grid,
                       const EigenOptions& options) {
    require(!delta_grid.empty(), ErrorKind::Domain, "gap profile needs a non-empty grid");
    for (std::size_t k = 1; k < delta_grid.size(); ++k)
        require(delta_grid[k] > delta_grid[k - 1], ErrorKind::Domain, "detuning grid must be strictly increasing");

    const auto count = static_cast<std::ptrdiff_t>(delta_grid.size());
    GapProfile prof;
    prof.delta_grid = delta_grid;
    prof.spec_template = spec_template;
    prof.gaps.assign(delta_grid.size(), 0.0);
    prof.ground_energies.assign(delta_grid.size(), 0.0);
    std::vector<char> degenerate(delta_grid.size(), 0);
    std::vector<std::string> errors(delta_grid.size());
    std::vector<double> residuals(delta_grid.size(), -1.0);
    std::vector<ErrorKind> kinds(delta_grid.size(), ErrorKind::Convergence);

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        try {
            const auto r = gap(spec_template.with_delta(delta_grid[k]), options);
            prof.gaps[k] = r.gap;
            prof.ground_energies[k] = r.e0;
            degenerate[k] = r.degenerate;
        } catch (const ConvergenceError& e) {
            errors[k] = e.what();
            residuals[k] = e.residual();
        } catch (const Error& e) {
            errors[k] = e.what();
            kinds[k] = e.kind();
        }
    }
    for (std::size_t k = 0; k < delta_grid.size(); ++k) {
        if (errors[k].empty()) continue;
        const std::string msg =
            "gap profile point " + std::to_string(k) + " (delta " + format_double(delta_grid[k]) + "): " + errors[k];
        if (residuals[k] >= 0) throw ConvergenceError(msg, residuals[k]);
        fail(kinds[k], msg);
    }
    prof.degenerate.assign(degenerate.begin(), degenerate.end());
    return prof;
}

double GapProfile::gap_at(double delta) const {
    require(!delta_grid.empty(), ErrorKind::Domain, "empty gap profile");
    const double lo = delta_grid.front();
    const double hi = delta_grid.back();
    const double slack = 1e-9 * std::max(1.0, hi - lo);
    require(delta >= lo - slack && delta <= hi + slack, ErrorKind::Domain,
            "detuning " + format_double(delta) + " outside the gap profile grid");
    if (delta_grid.size() == 1) return gaps.front();
    delta = std::clamp(delta, lo, hi);
    auto it = std::upper_bound(delta_grid.begin(), delta_grid.end(), delta);
    std::size_t k = it == delta_grid.end() ? delta_grid.size() - 2
                                           : static_cast<std::size_t>(it - delta_grid.begin()) - 1;
    k = std::min(k, delta_grid.size() - 2);
    const double f = (delta - delta_grid[k]) / (delta_grid[k + 1] - delta_grid[k]);
    return (1 - f) * gaps[k] + f * gaps[k + 1];
}

double GapProfile::minimum_location() const {
    require(!gaps.empty(), ErrorKind::Domain, "empty gap profile");
    const auto k = static_cast<std::size_t>(std::min_element(gaps.begin(), gaps.end()) - gaps.begin());
    if (k == 0 || k + 1 == gaps.size()) return delta_grid[k];
    const double x0 = delta_grid[k - 1], x1 = delta_grid[k], x2 = delta_grid[k + 1];
    const double y0 = gaps[k - 1], y1 = gaps[k], y2 = gaps[k + 1];
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (den == 0.0) return x1;
    return std::clamp(x1 - 0.5 * num / den, x0, x2);
}

bool GapProfile::has_interior_minimum() const {
    if (gaps.size() < 3) return false;
    const auto k = static_cast<std::size_t>(std::min_element(gaps.begin(), gaps.end()) - gaps.begin());
    return k > 0 && k + 1 < gaps.size();
}

std::string GapProfile::to_csv() const {
    std::string out = "delta,E0,gap,degenerate\n";
    for (std::size_t k = 0; k < delta_grid.size(); ++k)
        out += csv_row({format_double(delta_grid[k]), format_double(ground_energies[k]), format_double(gaps[k]),
                        degenerate.empty() ? "0" : (degenerate[k] ? "1" : "0")});
    return out;
}

}  // namespace rydcrit
