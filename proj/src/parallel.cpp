#include "rydcrit/parallel.hpp"

#include <array>

#include <omp.h>

namespace rydcrit {

namespace {

constexpr std::size_t kChunks = 64;
constexpr Eigen::Index kSerialBelow = 1 << 14;

template <typename T, typename F>
T chunked_sum(Eigen::Index n, F&& term) {
    if (n < kSerialBelow) {
        T acc{};
        for (Eigen::Index i = 0; i < n; ++i) acc += term(i);
        return acc;
    }
    std::array<T, kChunks> partial{};
    const Eigen::Index step = (n + kChunks - 1) / kChunks;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(kChunks); ++c) {
        T acc{};
        const Eigen::Index lo = c * step;
        const Eigen::Index hi = std::min<Eigen::Index>(n, lo + step);
        for (Eigen::Index i = lo; i < hi; ++i) acc += term(i);
        partial[c] = acc;
    }
    T total{};
    for (const auto& p : partial) total += p;
    return total;
}

}  // namespace

void set_max_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

std::complex<double> dot(Eigen::Ref<const Eigen::VectorXcd> a, Eigen::Ref<const Eigen::VectorXcd> b) {
    return chunked_sum<std::complex<double>>(a.size(),
                                             [&](Eigen::Index i) { return std::conj(a[i]) * b[i]; });
}

double squared_norm(Eigen::Ref<const Eigen::VectorXcd> a) {
    return chunked_sum<double>(a.size(), [&](Eigen::Index i) { return std::norm(a[i]); });
}

double dot(Eigen::Ref<const Eigen::VectorXd> a, Eigen::Ref<const Eigen::VectorXd> b) {
    return chunked_sum<double>(a.size(), [&](Eigen::Index i) { return a[i] * b[i]; });
}

}  // namespace rydcrit
