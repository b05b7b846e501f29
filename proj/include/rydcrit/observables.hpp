#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydcrit/hamiltonian.hpp"
#include "rydcrit/lattice.hpp"
#include "rydcrit/measurement.hpp"

namespace rydcrit {

/// Sigma lives on sites for rings and on nearest-neighbour bonds for square
/// arrays; epsilon lives on ring links.
enum class Field { Sigma, Epsilon };
enum class Region { All, Bulk, Boundary };

const char* to_string(Field f);
const char* to_string(Region r);
Field field_from_string(const std::string& s);
Region region_from_string(const std::string& s);

std::vector<double> sigma_1d(std::span<const std::uint8_t> shot, const Lattice& lattice, double mean_n);
std::vector<double> sigma_2d_bonds(std::span<const std::uint8_t> shot, const Lattice& lattice);
std::vector<double> epsilon_1d(std::span<const std::uint8_t> shot, const Lattice& lattice, double mean_n);

/// Field carriers as an affine map of the occupations: f = W n + b.
struct FieldLayout {
    Eigen::MatrixXd weights;
    Eigen::VectorXd offsets;
    std::vector<Vec2> positions;
    std::vector<bool> boundary;
    int ring_period = 0;  // > 0: distances are chord distances on this ring

    int carriers() const { return static_cast<int>(offsets.size()); }
    double distance(int a, int b) const;
    std::vector<int> region(Region r) const;
};

FieldLayout field_layout(const Lattice& lattice, Field field, double mean_n);

/// First and second occupation moments <n_i>, <n_i n_j>.
struct OccupationMoments {
    Eigen::VectorXd first;
    Eigen::MatrixXd second;
};

OccupationMoments occupation_moments(const StateVector& psi);
OccupationMoments occupation_moments(const SnapshotSet& snaps);

struct DensityEstimate {
    Eigen::VectorXd per_site;
    Eigen::VectorXd per_site_stderr;
    double global = 0.0;
    double global_stderr = 0.0;
};

DensityEstimate rydberg_density(const SnapshotSet& snaps);
DensityEstimate rydberg_density(const StateVector& psi);

/// <f_a f_b> over all carriers, optionally minus <f_a><f_b>. With no mean_n
/// the data's global mean density is used.
Eigen::MatrixXd correlation_matrix(const StateVector& psi, const Lattice& lattice, Field field,
                                   std::optional<double> mean_n = {}, bool connected = false);
Eigen::MatrixXd correlation_matrix(const SnapshotSet& snaps, Field field, std::optional<double> mean_n = {},
                                   bool connected = false);

struct CorrelatorSeries {
    std::vector<double> distances;
    std::vector<double> values;
    std::vector<double> stderr;
    std::vector<int> counts;
    bool connected = false;

    std::size_t size() const { return distances.size(); }
    std::string to_csv() const;
};

/// Pair average of f(x) f(y) binned by carrier distance (bins merge distances
/// equal to 1e-6). Includes the zero-distance bin.
CorrelatorSeries two_point(const SnapshotSet& snaps, Field field, Region region, std::optional<double> mean_n = {},
                           bool connected = false);
CorrelatorSeries two_point(const StateVector& psi, const Lattice& lattice, Field field, Region region,
                           std::optional<double> mean_n = {}, bool connected = false);

struct ScalarEstimate {
    double value = 0.0;
    double stderr = 0.0;
};

/// (1/N^2) sum_{a,b in region} <f_a f_b>.
ScalarEstimate order_parameter(const SnapshotSet& snaps, Field field, Region region,
                               std::optional<double> mean_n = {});
ScalarEstimate order_parameter(const StateVector& psi, const Lattice& lattice, Field field, Region region,
                               std::optional<double> mean_n = {});

/// Region average of the one-point function <f>.
ScalarEstimate one_point(const SnapshotSet& snaps, Field field, Region region, std::optional<double> mean_n = {});

}  // namespace rydcrit
