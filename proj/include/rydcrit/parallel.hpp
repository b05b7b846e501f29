#pragma once

#include <complex>
#include <cstddef>

#include <Eigen/Dense>

namespace rydcrit {

/// Caps the worker count used by every parallel region (0 = runtime default).
void set_max_threads(int n);
int max_threads();

/// Dot products and norms with a fixed chunking independent of the thread
/// count, so results are bitwise reproducible for any number of workers.
std::complex<double> dot(Eigen::Ref<const Eigen::VectorXcd> a, Eigen::Ref<const Eigen::VectorXcd> b);
double squared_norm(Eigen::Ref<const Eigen::VectorXcd> a);
double dot(Eigen::Ref<const Eigen::VectorXd> a, Eigen::Ref<const Eigen::VectorXd> b);

}  // namespace rydcrit
