#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "rydcrit/errors.hpp"
#include "rydcrit/measurement.hpp"
#include "rydcrit/rng.hpp"

using namespace rydcrit;

namespace {

BitMatrix constant_records(int shots, int n, std::uint8_t v) { return BitMatrix::Constant(shots, n, v); }

BitMatrix neel_records(int shots, int n, bool alternate_phase) {
    BitMatrix r(shots, n);
    for (int m = 0; m < shots; ++m)
        for (int i = 0; i < n; ++i) r(m, i) = ((i + (alternate_phase ? m : 0)) % 2 == 0) ? 1 : 0;
    return r;
}

// Site 0 in (|g> + |r>)/sqrt(2), sites 1 and 2 in |g>.
StateVector plus_state() {
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(8);
    a[0] = a[1] = 1.0 / std::sqrt(2.0);
    return {BasisSpace::full(3), a};
}

}  // namespace

TEST(Sampling, GroundStateGivesZeros) {
    const auto lat = Lattice::ring(6);
    const auto s = sample_snapshots(StateVector::basis_state(BasisSpace::full(6), 0), lat, 50, 1);
    EXPECT_EQ(s.records().cast<int>().sum(), 0);
    EXPECT_EQ(s.shots(), 50);
}

TEST(Sampling, BornRuleSingleAtom) {
    const auto s = sample_snapshots(plus_state(), Lattice::ring(3), 10000, 7);
    const double mean = s.records().col(0).cast<double>().mean();
    EXPECT_NEAR(mean, 0.5, 0.015);
}

TEST(Sampling, NeelSuperpositionSupport) {
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(16);
    a[0b0101] = a[0b1010] = 1.0 / std::sqrt(2.0);
    const auto s = sample_snapshots(StateVector{BasisSpace::full(4), a}, Lattice::ring(4), 2000, 3);
    int first = 0;
    for (int m = 0; m < s.shots(); ++m) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= std::uint64_t(s.records()(m, i)) << i;
        EXPECT_TRUE(bits == 0b0101 || bits == 0b1010);
        first += bits == 0b0101;
    }
    EXPECT_GT(first, 800);
    EXPECT_LT(first, 1200);
}

TEST(Sampling, TotalVariationShrinks) {
    Eigen::VectorXcd a = Eigen::VectorXcd::Random(16);
    a.normalize();
    const StateVector psi{BasisSpace::full(4), a};
    for (int shots : {1000, 10000}) {
        const auto s = sample_snapshots(psi, Lattice::ring(4), shots, 11);
        std::map<std::uint64_t, int> freq;
        for (int m = 0; m < shots; ++m) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 4; ++i) bits |= std::uint64_t(s.records()(m, i)) << i;
            ++freq[bits];
        }
        double tv = 0.0;
        for (int k = 0; k < 16; ++k) tv += std::abs(double(freq[k]) / shots - std::norm(a[k]));
        EXPECT_LT(tv / 2, 4 * std::sqrt(16.0 / shots));
    }
}

TEST(Sampling, TruncatedBasisBitstrings) {
    const auto lat = Lattice::ring(6);
    const auto basis = BasisSpace::blockade_truncated(lat, 1.1);
    Eigen::VectorXcd a = Eigen::VectorXcd::Ones(basis->dim()).normalized();
    const auto s = sample_snapshots(StateVector{basis, a}, lat, 500, 2);
    for (int m = 0; m < s.shots(); ++m)
        for (int i = 0; i < 6; ++i) EXPECT_FALSE(s.records()(m, i) && s.records()(m, (i + 1) % 6));
}

TEST(Sampling, RejectsUnnormalizedAndIsDeterministic) {
    StateVector psi = plus_state();
    psi.amplitudes *= 2.0;
    EXPECT_THROW(sample_snapshots(psi, Lattice::ring(3), 10, 1), Error);
    const auto a = sample_snapshots(plus_state(), Lattice::ring(3), 100, 5);
    const auto b = sample_snapshots(plus_state(), Lattice::ring(3), 100, 5);
    EXPECT_EQ(a.records(), b.records());
}

TEST(Sampling, EnsembleShotsPerTrajectory) {
    TrajectoryEnsemble ens;
    for (int k = 0; k < 10; ++k) ens.runs.push_back({plus_state(), {}, std::uint64_t(k)});
    const auto s = sample_snapshots(ens, Lattice::ring(3), 3, 4);
    EXPECT_EQ(s.shots(), 40);
    EXPECT_EQ(s.records().col(1).cast<int>().sum(), 0);
    EXPECT_EQ(s.provenance().shots_per_trajectory, 4);
    EXPECT_EQ(s.provenance().source, "ensemble");
}

TEST(Detection, IdentityModel) {
    const auto lat = Lattice::ring(8);
    const SnapshotSet s(lat, neel_records(100, 8, true));
    const auto d = apply_detection_errors(s, {}, 9);
    EXPECT_EQ(d.records(), s.records());
    ASSERT_TRUE(d.provenance().detection.has_value());
}

TEST(Detection, FalsePositiveRate) {
    const SnapshotSet s(Lattice::ring(10), constant_records(2000, 10, 0));
    DetectionModel m;
    m.eta0 = 0.98;
    const double frac = apply_detection_errors(s, m, 3).records().cast<double>().mean();
    EXPECT_NEAR(frac, 0.02, 3 * std::sqrt(0.02 * 0.98 / 20000));
}

TEST(Detection, FalseNegativeRate) {
    const SnapshotSet s(Lattice::ring(10), constant_records(2000, 10, 1));
    DetectionModel m;
    m.eps_det = 0.1;
    const double frac = 1.0 - apply_detection_errors(s, m, 3).records().cast<double>().mean();
    EXPECT_NEAR(frac, 0.1, 3 * std::sqrt(0.1 * 0.9 / 20000));
}

TEST(Detection, InversionMatchesMeasuredCalibration) {
    const auto r = infer_detection_error(0.980, 0.053, 0.86, 0.008, 0.005, 0.01);
    EXPECT_NEAR(r.p_pi, 0.935, 0.001);
    EXPECT_NEAR(r.eps_det, -0.011, 0.001);
    EXPECT_LT(std::abs(r.eps_det), 0.015);
    EXPECT_TRUE(r.p_in_range);
    EXPECT_GT(r.eps_det_std, 0.0);
}

TEST(Detection, PerfectDetection) {
    const auto r = infer_detection_error(1.0, 0.0, 1.0);
    EXPECT_NEAR(r.p_pi, 1.0, 1e-15);
    EXPECT_NEAR(r.eps_det, 0.0, 1e-15);
}

TEST(Detection, RoundTripGrid) {
    double worst = 0.0;
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) {
            const double p = 0.5 + 0.05 * a;
            const double eps = 0.002 + 0.01 * b;
            const auto [n1, n2] = detection_forward(0.98, p, eps);
            const auto r = infer_detection_error(0.98, n1, n2);
            worst = std::max({worst, std::abs(r.p_pi - p), std::abs(r.eps_det - eps)});
        }
    EXPECT_LT(worst, 1e-10);
}

TEST(Detection, DegenerateInputs) {
    EXPECT_THROW(infer_detection_error(0.5, 0.5, 0.6), Error);
    EXPECT_THROW(infer_detection_error(1.2, 0.5, 0.6), Error);
    EXPECT_FALSE(infer_detection_error(0.98, 0.5, 0.0).p_in_range);
}

TEST(Postselection, RejectsAdjacentPairKeepsNeel) {
    const auto lat = Lattice::ring(24);
    BitMatrix r = neel_records(3, 24, false);
    r(1, 1) = 1;  // 0 and 1 both excited
    const auto out = postselect_blockade(SnapshotSet(lat, r), 1.4);
    EXPECT_EQ(out.shots(), 2);
    EXPECT_NEAR(out.rejection_fraction(), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(out.provenance().postselect_mask, (std::vector<bool>{true, false, true}));
    // Next-nearest neighbours sit further apart than 1.4 a.
    EXPECT_GT(lat.site_distance(0, 2), 1.4);
}

TEST(Postselection, Idempotent) {
    const auto lat = Lattice::square(4, 4);
    BitMatrix r(200, 16);
    Rng rng(3);
    std::bernoulli_distribution b(0.3);
    for (int m = 0; m < 200; ++m)
        for (int i = 0; i < 16; ++i) r(m, i) = b(rng);
    const auto once = postselect_blockade(SnapshotSet(lat, r), 1.25);
    const auto twice = postselect_blockade(once, 1.25);
    EXPECT_EQ(once.records(), twice.records());
    EXPECT_EQ(once.provenance().postselect_mask, twice.provenance().postselect_mask);
    EXPECT_THROW(postselect_blockade(once, 0.0), Error);
}

TEST(Snapshots, TextRoundTrip) {
    const auto lat = Lattice::square(3, 3);
    BitMatrix r = neel_records(7, 9, true);
    SnapshotProvenance p;
    p.seed = 42;
    p.detection = DetectionModel{0.97, 0.01, 0.9};
    const auto s = postselect_blockade(SnapshotSet(lat, r, p), 0.5);
    const auto back = SnapshotSet::from_text(s.to_text());
    EXPECT_EQ(back.records(), s.records());
    EXPECT_EQ(back.lattice().hash(), lat.hash());
    EXPECT_EQ(back.provenance().seed, 42u);
    EXPECT_EQ(back.provenance().postselect_mask, s.provenance().postselect_mask);
    EXPECT_NEAR(back.provenance().detection->eta0, 0.97, 1e-15);
    EXPECT_EQ(back.to_text(), s.to_text());
    EXPECT_THROW(SnapshotSet::from_text("{}\n"), Error);
}

TEST(Snapshots, RejectsBadEntries) {
    BitMatrix r = constant_records(2, 4, 0);
    r(0, 0) = 2;
    EXPECT_THROW(SnapshotSet(Lattice::ring(4), r), Error);
    EXPECT_THROW(SnapshotSet(Lattice::ring(5), constant_records(2, 4, 0)), Error);
}

TEST(Holes, LossRateAndEmbedding) {
    int lost = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto h = sample_holes(50, 0.05, s);
        lost += static_cast<int>(std::count(h.begin(), h.end(), true));
    }
    EXPECT_NEAR(lost / 10000.0, 0.05, 3 * std::sqrt(0.05 * 0.95 / 10000));
    const std::vector<bool> removed{false, true, false, true};
    EXPECT_EQ(embed_hole_shot({0, 1}, removed), (std::vector<std::uint8_t>{0, 1, 1, 1}));
    EXPECT_THROW(embed_hole_shot({0}, removed), Error);
}
