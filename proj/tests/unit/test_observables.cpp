#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rydcrit/errors.hpp"
#include "rydcrit/observables.hpp"
#include "rydcrit/spectrum.hpp"

using namespace rydcrit;

namespace {

std::vector<std::uint8_t> neel(int n, int phase) {
    std::vector<std::uint8_t> v(n);
    for (int i = 0; i < n; ++i) v[i] = (i + phase) % 2 == 0;
    return v;
}

std::vector<std::uint8_t> checkerboard(const Lattice& lat, int phase) {
    std::vector<std::uint8_t> v(lat.n_sites());
    for (int s = 0; s < lat.n_sites(); ++s) {
        const auto [x, y] = lat.grid_position(s);
        v[s] = (x + y + phase) % 2 == 0;
    }
    return v;
}

SnapshotSet from_rows(const Lattice& lat, const std::vector<std::vector<std::uint8_t>>& rows) {
    BitMatrix r(static_cast<Eigen::Index>(rows.size()), lat.n_sites());
    for (std::size_t m = 0; m < rows.size(); ++m)
        for (int i = 0; i < lat.n_sites(); ++i) r(m, i) = rows[m][i];
    return SnapshotSet(lat, r);
}

StateVector ring_ground_at_gap_minimum(int n) {
    const auto lat = Lattice::ring(n);
    const auto tmpl = HamiltonianSpec::from_blockade_radius(lat, 1.0, 0.0, 1.4);
    EigenOptions opt;
    opt.symmetries = lat.symmetry_permutations();
    std::vector<double> grid;
    for (int k = 0; k <= 30; ++k) grid.push_back(0.5 + 0.05 * k);
    const auto prof = gap_profile(tmpl, grid, opt);
    return ground_state(tmpl.with_delta(prof.minimum_location()), opt).state;
}

}  // namespace

TEST(Fields, Sigma1d) {
    const auto lat = Lattice::ring(6);
    for (double v : sigma_1d(neel(6, 0), lat, 0.5)) EXPECT_EQ(v, 0.5);
    for (double v : sigma_1d(neel(6, 1), lat, 0.5)) EXPECT_EQ(v, -0.5);
    for (double v : sigma_1d(std::vector<std::uint8_t>(6, 0), lat, 0.0)) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(sigma_1d(neel(9, 0), Lattice::square(3, 3), 0.5), Error);
}

TEST(Fields, Sigma2dBonds) {
    const auto lat = Lattice::square(4, 4);
    for (double v : sigma_2d_bonds(checkerboard(lat, 0), lat)) EXPECT_EQ(v, 1.0);
    for (double v : sigma_2d_bonds(checkerboard(lat, 1), lat)) EXPECT_EQ(v, -1.0);
    for (double v : sigma_2d_bonds(std::vector<std::uint8_t>(16, 0), lat)) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(sigma_2d_bonds(checkerboard(lat, 0), lat).size(), 24u);
    EXPECT_THROW(sigma_2d_bonds(neel(6, 0), Lattice::ring(6)), Error);
}

TEST(Fields, Epsilon1d) {
    const auto lat = Lattice::ring(8);
    for (double v : epsilon_1d(std::vector<std::uint8_t>(8, 0), lat, 0.0)) EXPECT_EQ(v, 0.0);
    for (double v : epsilon_1d(neel(8, 0), lat, 0.5)) EXPECT_EQ(v, 0.5);
    for (double v : epsilon_1d(std::vector<std::uint8_t>(8, 1), lat, 1.0)) EXPECT_EQ(v, 1.0);
}

TEST(Fields, LayoutMatchesPerShotFunctions) {
    const auto lat = Lattice::ring(7);
    const std::vector<std::uint8_t> shot{1, 0, 0, 1, 1, 0, 1};
    Eigen::VectorXd n(7);
    for (int i = 0; i < 7; ++i) n[i] = shot[i];
    for (Field f : {Field::Sigma, Field::Epsilon}) {
        const auto layout = field_layout(lat, f, 0.3);
        const Eigen::VectorXd v = layout.weights * n + layout.offsets;
        const auto ref = f == Field::Sigma ? sigma_1d(shot, lat, 0.3) : epsilon_1d(shot, lat, 0.3);
        for (int k = 0; k < 7; ++k) EXPECT_NEAR(v[k], ref[k], 1e-15);
    }
}

TEST(Correlators, ProductStateVanishes) {
    const auto lat = Lattice::ring(8);
    const auto s = two_point(StateVector::basis_state(BasisSpace::full(8), 0), lat, Field::Sigma, Region::All);
    for (double v : s.values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(s.distances.front(), 0.0);
}

TEST(Correlators, NeelEnsemble) {
    const auto lat = Lattice::ring(24);
    const auto snaps = from_rows(lat, {neel(24, 0), neel(24, 1), neel(24, 0), neel(24, 1)});
    const auto s = two_point(snaps, Field::Sigma, Region::All);
    EXPECT_EQ(s.size(), 13u);
    for (double v : s.values) EXPECT_NEAR(v, 0.25, 1e-15);
    EXPECT_EQ(s.counts.front(), 24);
    EXPECT_EQ(s.counts.back(), 12);
    EXPECT_NEAR(order_parameter(snaps, Field::Sigma, Region::All).value, 0.25, 1e-15);
    EXPECT_NEAR(rydberg_density(snaps).global, 0.5, 1e-15);
}

TEST(Correlators, CheckerboardBulkOrder) {
    const auto lat = Lattice::square(4, 4);
    const auto snaps = from_rows(lat, {checkerboard(lat, 0), checkerboard(lat, 0)});
    EXPECT_NEAR(order_parameter(snaps, Field::Sigma, Region::Bulk).value, 1.0, 1e-15);
    EXPECT_NEAR(order_parameter(snaps, Field::Sigma, Region::Boundary).value, 1.0, 1e-15);
    EXPECT_NEAR(one_point(snaps, Field::Sigma, Region::All).value, 1.0, 1e-15);
    const auto allg = from_rows(lat, {std::vector<std::uint8_t>(16, 0)});
    EXPECT_EQ(order_parameter(allg, Field::Sigma, Region::Bulk).value, 0.0);
    EXPECT_THROW(two_point(from_rows(Lattice::ring(4), {neel(4, 0)}), Field::Sigma, Region::Boundary), Error);
}

TEST(Correlators, ExactRingMatchesDenseOracle) {
    const int n = 12;
    const auto lat = Lattice::ring(n);
    const auto psi = ring_ground_at_gap_minimum(n);
    const double mean_n = rydberg_density(psi).global;
    const Eigen::MatrixXd ref = oracle::dense_ring_sigma_correlations(psi.amplitudes, n, mean_n);
    const auto s = two_point(psi, lat, Field::Sigma, Region::All);
    ASSERT_EQ(s.size(), 7u);
    for (int j = 0; j <= n / 2; ++j) {
        EXPECT_NEAR(s.distances[j], chord_distance(n, j), 1e-12);
        EXPECT_NEAR(s.values[j], ref(0, j), 1e-10) << j;
    }
}

TEST(Correlators, TranslationAndReflectionInvariance) {
    const int n = 10;
    const auto lat = Lattice::ring(n);
    const auto psi = ring_ground_at_gap_minimum(n);
    const Eigen::MatrixXd c = correlation_matrix(psi, lat, Field::Sigma);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            EXPECT_NEAR(c(i, (i + j) % n), c(0, j), 1e-10);
            EXPECT_NEAR(c(0, j), c(0, (n - j) % n), 1e-10);
        }
    EXPECT_GE(c(0, 0), 0.0);
}

TEST(Correlators, SnapshotEstimatorConverges) {
    const int n = 4;
    const auto lat = Lattice::ring(n);
    const auto spec = HamiltonianSpec::from_blockade_radius(lat, 1.0, 1.0, 1.4);
    const auto psi = ground_state(spec).state;
    const double mean_n = rydberg_density(psi).global;
    const auto exact = two_point(psi, lat, Field::Sigma, Region::All, mean_n);
    std::vector<double> err;
    for (int m : {100, 1000, 10000}) {
        double acc = 0.0;
        const int reps = 20;
        for (int r = 0; r < reps; ++r) {
            const auto est = two_point(sample_snapshots(psi, lat, m, 1000 * m + r), Field::Sigma, Region::All, mean_n);
            for (std::size_t k = 0; k < est.size(); ++k) acc += std::pow(est.values[k] - exact.values[k], 2);
        }
        err.push_back(std::sqrt(acc / reps));
    }
    // Tenfold more shots shrinks the RMS error by about sqrt(10).
    EXPECT_GT(err[0] / err[1], 2.0);
    EXPECT_LT(err[0] / err[1], 5.0);
    EXPECT_GT(err[1] / err[2], 2.0);
    EXPECT_LT(err[1] / err[2], 5.0);
}

TEST(Correlators, ConnectedOption) {
    const auto lat = Lattice::square(3, 3);
    const auto snaps = from_rows(lat, {checkerboard(lat, 0), checkerboard(lat, 0)});
    const auto raw = two_point(snaps, Field::Sigma, Region::All, {}, false);
    const auto conn = two_point(snaps, Field::Sigma, Region::All, {}, true);
    for (double v : raw.values) EXPECT_NEAR(v, 1.0, 1e-15);
    for (double v : conn.values) EXPECT_NEAR(v, 0.0, 1e-15);
    EXPECT_TRUE(conn.connected);
    EXPECT_NE(raw.to_csv().find("distance,value,stderr,count"), std::string::npos);
}

TEST(Density, ExactAndSampled) {
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(2);
    a[1] = 1.0;
    EXPECT_EQ(rydberg_density(StateVector{BasisSpace::full(1), a}).global, 1.0);
    const auto lat = Lattice::ring(6);
    const auto snaps = from_rows(lat, {neel(6, 0), neel(6, 1)});
    const auto d = rydberg_density(snaps);
    EXPECT_NEAR(d.global, 0.5, 1e-15);
    EXPECT_NEAR(d.per_site_stderr[0], std::sqrt(0.25 / 2), 1e-15);
}

TEST(Moments, ExactMatchesSampledLimit) {
    const auto lat = Lattice::ring(5);
    Eigen::VectorXcd a = Eigen::VectorXcd::Random(32);
    a.normalize();
    const StateVector psi{BasisSpace::full(5), a};
    const auto exact = occupation_moments(psi);
    const auto sampled = occupation_moments(sample_snapshots(psi, lat, 40000, 8));
    EXPECT_LT((exact.second - sampled.second).cwiseAbs().maxCoeff(), 0.015);
    EXPECT_LT((exact.second - exact.second.transpose()).norm(), 1e-15);
}
