#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "rydcrit/errors.hpp"
#include "rydcrit/spectrum.hpp"

using namespace rydcrit;

namespace {

HamiltonianSpec manual_spec(double omega, double delta, Eigen::MatrixXd v) {
    HamiltonianSpec s;
    s.omega = omega;
    s.delta = delta;
    s.c6 = 1.0;
    s.v_matrix = std::move(v);
    return s;
}

}  // namespace

TEST(Spectrum, SingleAtomGroundStates) {
    auto gs = ground_state(manual_spec(0.0, -1.0, Eigen::MatrixXd::Zero(1, 1)));
    EXPECT_NEAR(gs.energy, 0.0, 1e-14);
    EXPECT_NEAR(std::abs(gs.state.amplitudes[0]), 1.0, 1e-14);

    gs = ground_state(manual_spec(2.0, 0.0, Eigen::MatrixXd::Zero(1, 1)));
    EXPECT_NEAR(gs.energy, -1.0, 1e-14);

    const auto g = gap(manual_spec(0.0, -1.0, Eigen::MatrixXd::Zero(1, 1)));
    EXPECT_NEAR(g.gap, 1.0, 1e-14);
}

TEST(Spectrum, DecoupledPairGap) {
    const auto g = gap(manual_spec(0.0, -1.0, Eigen::MatrixXd::Zero(2, 2)));
    EXPECT_NEAR(g.gap, 1.0, 1e-14);
}

TEST(Spectrum, ClassicalLimitGap) {
    Eigen::MatrixXd v(2, 2);
    v << 0, 5, 5, 0;
    for (double delta : {-0.5, -1.0, -2.0}) {
        const auto g = gap(manual_spec(1e-6, delta, v));
        EXPECT_NEAR(g.gap, std::abs(delta), 1e-6);
    }
}

TEST(Spectrum, MatchesDenseOnRandomSpecs) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4 + trial % 5;
        const auto lat = Lattice::ring(n);
        const double omega = 0.5 + 2 * u(rng);
        const double delta = -2 + 6 * u(rng);
        const double rb = 1.0 + 0.8 * u(rng);
        const auto spec = HamiltonianSpec::from_blockade_radius(lat, omega, delta, rb);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(spec), Eigen::EigenvaluesOnly);
        EigenOptions opt;
        opt.seed = trial;
        const auto g = gap(spec, opt);
        EXPECT_NEAR(g.e0, es.eigenvalues()[0], 1e-8) << trial;
        EXPECT_NEAR(g.e1, es.eigenvalues()[1], 1e-8) << trial;
    }
}

TEST(Spectrum, LanczosPathMatchesDense) {
    // dim 1024 exceeds the dense cut-off, so the iterative path runs.
    const auto spec = HamiltonianSpec::from_blockade_radius(Lattice::ring(10), 1.0, 1.1, 1.4);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(spec));
    const auto g = gap(spec);
    EXPECT_NEAR(g.e0, es.eigenvalues()[0], 1e-8);
    EXPECT_NEAR(g.e1, es.eigenvalues()[1], 1e-8);
    const Eigen::VectorXd ref = es.eigenvectors().col(0);
    EXPECT_NEAR(std::abs(ref.dot(g.ground.amplitudes.real())), 1.0, 1e-8);
    HamiltonianOperator op(spec, g.ground.basis);
    EXPECT_LE(g.residual, 1e-8 * op.norm_bound(spec.omega, spec.delta));
}

TEST(Spectrum, GapInvariantUnderEnergyShift) {
    // H + c*I: both levels move by c.
    const auto lat = Lattice::ring(6);
    const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, 0.9, 1.4);
    const auto basis = BasisSpace::full(6);
    HamiltonianOperator op(spec, basis);
    for (double shift : {0.0, 3.7, -12.5}) {
        auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
            op.apply_real(spec.omega, spec.delta, in, out);
            out += shift * in;
        };
        const auto p = lowest_eigenpairs(apply, basis->dim(), 2, 1e-12, {});
        const auto ref = gap(spec);
        EXPECT_NEAR(p.values[1] - p.values[0], ref.gap, 1e-10);
        EXPECT_NEAR(p.values[0] - shift, ref.e0, 1e-10);
    }
}

TEST(Spectrum, SymmetricSectorContainsGroundState) {
    const auto lat = Lattice::ring(10);
    for (double delta : {-1.0, 0.5, 1.0, 2.5}) {
        const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, delta, 1.4);
        EigenOptions sym;
        sym.symmetries = lat.symmetry_permutations();
        const auto full = gap(spec);
        const auto sector = gap(spec, sym);
        EXPECT_NEAR(full.e0, sector.e0, 1e-8);
        EXPECT_GE(sector.e1, full.e1 - 1e-8);
        EXPECT_NEAR(fidelity(full.ground, sector.ground), 1.0, 1e-8);
    }
}

TEST(Spectrum, SectorDroppedWhenDisorderBreaksSymmetry) {
    const auto lat = Lattice::ring(8);
    const auto dis = sample_disorder(lat, 0.2, {}, 4);
    const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, 1.0, 1.4, &dis);
    SymmetricSector sector(BasisSpace::full(8), spec, lat.symmetry_permutations());
    EXPECT_EQ(sector.group_order(), 1u);
    EXPECT_EQ(sector.dim(), 256u);
}

TEST(Spectrum, SectorOnTruncatedBasis) {
    const auto lat = Lattice::square(3, 3);
    const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, 1.5, 1.25);
    EigenOptions opt;
    opt.basis = BasisSpace::blockade_truncated(lat, 1.25);
    const auto plain = ground_state(spec, opt);
    opt.symmetries = lat.symmetry_permutations();
    const auto sym = ground_state(spec, opt);
    EXPECT_NEAR(plain.energy, sym.energy, 1e-9);
}

TEST(Spectrum, ArpackOracleSixteenSiteRing) {
    const auto lat = Lattice::ring(16);
    const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, 1.05, 1.4);
    const auto e = oracle::arpack_lowest(spec, 2);
    const auto gs = ground_state(spec);
    EXPECT_NEAR(gs.energy, e[0], 1e-8);
    const auto g = gap(spec);
    EXPECT_NEAR(g.e1, e[1], 1e-8);
}

TEST(Spectrum, GapProfileBasics) {
    const auto lat = Lattice::ring(10);
    const auto tmpl = HamiltonianSpec::from_blockade_radius(lat, 1.0, 0.0, 1.4);
    EigenOptions opt;
    opt.symmetries = lat.symmetry_permutations();

    const auto single = gap_profile(tmpl, {0.7}, opt);
    EXPECT_NEAR(single.gaps[0], gap(tmpl.with_delta(0.7), opt).gap, 1e-12);

    std::vector<double> grid;
    for (int k = 0; k <= 40; ++k) grid.push_back(-1.0 + 0.1 * k);
    const auto prof = gap_profile(tmpl, grid, opt);
    EXPECT_TRUE(prof.has_interior_minimum());
    for (double g : prof.gaps) EXPECT_GT(g, 0.0);

    // Dense scan oracle over the same grid.
    for (std::size_t k = 0; k < grid.size(); k += 5)
        EXPECT_NEAR(prof.gaps[k], oracle::dense_sector_gap(tmpl.with_delta(grid[k]), lat), 1e-8);

    EXPECT_THROW(gap_profile(tmpl, {1.0, 0.5}, opt), Error);
    EXPECT_THROW(gap_profile(tmpl, {}, opt), Error);
    EXPECT_NE(prof.to_csv().find("delta,E0,gap"), std::string::npos);
}

TEST(Spectrum, GapProfileUnderDisorderStaysFinite) {
    const auto lat = Lattice::ring(10);
    std::vector<double> grid;
    for (int k = 0; k <= 30; ++k) grid.push_back(-0.5 + 0.1 * k);
    const auto clean = HamiltonianSpec::from_blockade_radius(lat, 1.0, 0.0, 1.4);
    const auto a = gap_profile(clean, grid);
    for (std::uint64_t seed : {1u, 2u}) {
        const auto dis = sample_disorder(lat, 0.2, {}, seed);
        const auto dirty = HamiltonianSpec::from_blockade_radius(lat, 1.0, 0.0, 1.4, &dis);
        const auto b = gap_profile(dirty, grid);
        for (double g : b.gaps) EXPECT_TRUE(std::isfinite(g) && g > 0);
        EXPECT_NE(a.minimum_location(), b.minimum_location());
    }
}

TEST(Spectrum, GapAtInterpolates) {
    GapProfile p;
    p.delta_grid = {0.0, 1.0, 2.0};
    p.gaps = {1.0, 0.5, 2.0};
    EXPECT_NEAR(p.gap_at(0.5), 0.75, 1e-15);
    EXPECT_NEAR(p.gap_at(2.0), 2.0, 1e-15);
    EXPECT_THROW(p.gap_at(2.5), Error);
}
