#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "rydcrit/dynamics.hpp"
#include "rydcrit/hamiltonian.hpp"
#include "rydcrit/lattice.hpp"

namespace rydcrit {

/// Detection imperfections. `eta0` is the probability a ground atom reads as
/// ground, `eps_det` the probability a Rydberg atom reads as ground.
struct DetectionModel {
    double eta0 = 1.0;
    double eps_det = 0.0;
    double p_pi = 1.0;  // calibration pulse fidelity

    void validate() const;
    nlohmann::json to_json() const;
    static DetectionModel from_json(const nlohmann::json& j);
};

using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SnapshotProvenance {
    std::string source = "state";  // state | ensemble | file
    std::uint64_t seed = 0;
    /// Shots drawn from each trajectory; above 1 the shots are correlated.
    int shots_per_trajectory = 1;
    std::optional<DetectionModel> detection;
    /// Over the shots before post-selection; empty when not post-selected.
    std::vector<bool> postselect_mask;
    double postselect_radius = 0.0;
    double loss_probability = 0.0;
    /// Modelling shortcuts behind the source state, e.g. "blockade_truncated_basis".
    std::vector<std::string> approximations;

    nlohmann::json to_json() const;
    static SnapshotProvenance from_json(const nlohmann::json& j);
};

/// M x N detected occupations (1 = Rydberg) on a fixed lattice.
class SnapshotSet {
   public:
    SnapshotSet(Lattice lattice, BitMatrix records, SnapshotProvenance provenance = {});

    int shots() const { return static_cast<int>(records_.rows()); }
    int n_sites() const { return static_cast<int>(records_.cols()); }
    const BitMatrix& records() const { return records_; }
    const Lattice& lattice() const { return lattice_; }
    const SnapshotProvenance& provenance() const { return provenance_; }

    /// Rows in the given order (repeats allowed); provenance is kept.
    SnapshotSet resample(const std::vector<int>& rows) const;
    double rejection_fraction() const;

    /// First line: JSON header. Remaining lines: one 0/1 CSV row per shot.
    std::string to_text() const;
    static SnapshotSet from_text(const std::string& text);
    nlohmann::json header() const;

   private:
    Lattice lattice_;
    BitMatrix records_;
    SnapshotProvenance provenance_;
};

/// Born-rule samples in the occupation basis. Shot m uses stream
/// derive_seed(seed, m).
SnapshotSet sample_snapshots(const StateVector& psi, const Lattice& lattice, int shots, std::uint64_t seed);

/// `shots_per_trajectory` samples from every final state of the ensemble.
SnapshotSet sample_snapshots(const TrajectoryEnsemble& ensemble, const Lattice& lattice, std::uint64_t seed,
                             int shots_per_trajectory = 1);

SnapshotSet apply_detection_errors(const SnapshotSet& snaps, const DetectionModel& model, std::uint64_t seed);

struct DetectionInversion {
    double p_pi = 0.0;
    double eps_det = 0.0;
    /// Linear error propagation; zero when no input uncertainties are given.
    double p_pi_std = 0.0;
    double eps_det_std = 0.0;
    bool p_in_range = true;
};

/// Expected ground fractions after one and two calibration pi pulses.
std::pair<double, double> detection_forward(double eta0, double p_pi, double eps_det);

/// Solves the forward model for (p_pi, eps_det) given measured ground
/// fractions after one (n_g1) and two (n_g2) pulses.
DetectionInversion infer_detection_error(double eta0, double n_g1, double n_g2, double eta0_std = 0.0,
                                         double n_g1_std = 0.0, double n_g2_std = 0.0);

/// Drops shots with two detected excitations closer than `radius` (inclusive).
SnapshotSet postselect_blockade(const SnapshotSet& snaps, double radius);

/// Per-site Bernoulli atom loss.
std::vector<bool> sample_holes(int n_sites, double loss_probability, std::uint64_t seed);

/// Lifts a snapshot on the lattice with holes back to the full lattice; lost
/// sites read as detected Rydberg.
std::vector<std::uint8_t> embed_hole_shot(const std::vector<std::uint8_t>& reduced, const std::vector<bool>& removed);

}  // namespace rydcrit
