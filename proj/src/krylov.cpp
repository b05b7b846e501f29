#include "rydcrit/krylov.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "rydcrit/errors.hpp"
#include "rydcrit/parallel.hpp"

namespace rydcrit {

ExpmvStats expmv(const ComplexOperator& a, std::complex<double> tau, Eigen::VectorXcd& v, double tol,
                 int max_dim) {
    ExpmvStats stats;
    const Eigen::Index n = v.size();
    const Eigen::Index mmax = std::max<Eigen::Index>(1, std::min<Eigen::Index>(max_dim, n));
    Eigen::MatrixXcd V(n, mmax + 1);
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(mmax + 1, mmax);
    Eigen::VectorXcd w;

    double remaining = 1.0;
    double frac = 1.0;
    while (remaining > 0.0) {
        const double beta = std::sqrt(squared_norm(v));
        if (beta == 0.0) return stats;
        V.col(0) = v / beta;
        H.setZero();
        double step = std::min(frac, remaining);
        Eigen::MatrixXcd F;
        double err = 0.0;
        Eigen::Index m = mmax;
        bool happy = false;
        bool converged = false;
        for (Eigen::Index j = 0; j < mmax; ++j) {
            a(V.col(j), w);
            ++stats.matvecs;
            const double w_norm = std::sqrt(squared_norm(w));
            for (Eigen::Index i = 0; i <= j; ++i) {
                const std::complex<double> h = dot(V.col(i), w);
                H(i, j) = h;
                w -= h * V.col(i);
            }
            double hn = std::sqrt(squared_norm(w));
            // Reorthogonalize only after heavy cancellation.
            if (hn < 0.5 * w_norm) {
                for (Eigen::Index i = 0; i <= j; ++i) {
                    const std::complex<double> h = dot(V.col(i), w);
                    H(i, j) += h;
                    w -= h * V.col(i);
                }
                hn = std::sqrt(squared_norm(w));
            }
            H(j + 1, j) = hn;
            if (hn <= 1e-13 * std::max(1.0, H.col(j).head(j + 1).norm())) {
                m = j + 1;
                happy = true;
                break;
            }
            V.col(j + 1) = w / hn;
            const Eigen::Index k = j + 1;
            if (k >= 4 && k < mmax) {
                F = (H.topLeftCorner(k, k) * (tau * step)).exp();
                err = beta * hn * std::abs(tau * step) * std::abs(F(k - 1, 0));
                if (err <= tol * beta * step) {
                    m = k;
                    converged = true;
                    break;
                }
            }
        }

        if (!converged) {
            const double h_next = happy ? 0.0 : std::abs(H(m, m - 1));
            for (;;) {
                F = (H.topLeftCorner(m, m) * (tau * step)).exp();
                err = happy ? 0.0 : beta * h_next * std::abs(tau * step) * std::abs(F(m - 1, 0));
                if (err <= tol * beta * step || step <= 1e-14) break;
                step *= 0.5;
            }
        }
        if (err > tol * beta * step) throw IntegrationError("Krylov exponential failed to reach tolerance", err);
        v = beta * (V.leftCols(m) * F.col(0));
        remaining -= step;
        if (remaining < 1e-15) remaining = 0.0;
        ++stats.substeps;
        stats.error_estimate += err;
        frac = err < 0.05 * tol * beta * step ? std::min(1.0, 2.0 * step) : step;
    }
    return stats;
}

}  // namespace rydcrit
