#pragma once

#include <complex>
#include <functional>

#include <Eigen/Dense>

namespace rydcrit {

using ComplexOperator = std::function<void(const Eigen::VectorXcd&, Eigen::VectorXcd&)>;

struct ExpmvStats {
    int substeps = 0;
    int matvecs = 0;
    double error_estimate = 0.0;
};

/// Overwrites v with exp(tau * A) v using Arnoldi projections of dimension
/// up to `max_dim`. The interval is split into substeps until the a-posteriori
/// error estimate falls below tol * |v| per unit fraction of tau.
ExpmvStats expmv(const ComplexOperator& a, std::complex<double> tau, Eigen::VectorXcd& v, double tol,
                 int max_dim = 30);

}  // namespace rydcrit
