#include "rydcrit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "rydcrit/errors.hpp"
#include "rydcrit/io.hpp"
#include "rydcrit/rng.hpp"

namespace rydcrit {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Smoothing helpers

Eigen::MatrixXd vandermonde(int window, int order) {
    const int h = window / 2;
    Eigen::MatrixXd a(window, order + 1);
    for (int i = 0; i < window; ++i)
        for (int j = 0; j <= order; ++j) a(i, j) = std::pow(static_cast<double>(i - h), j);
    return a;
}

double parabolic_offset(double ym, double y0, double yp) {
    const double denom = ym - 2.0 * y0 + yp;
    if (denom >= 0.0) return 0.0;
    return std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
}

// ---------------------------------------------------------------------------
// Model algebra. Internal parameters: [log A, scaling dim, third] where the
// third entry is the inverse length u = 1/xi or the temperature T.

struct ModelShape {
    int n_params;
    bool has_scaling;
    bool has_third;
};

ModelShape shape(FitModel m) {
    switch (m) {
        case FitModel::Power: return {2, true, false};
        case FitModel::Exponential: return {2, false, true};
        case FitModel::PowerTimesExponential: return {3, true, true};
        case FitModel::FiniteTCFT: return {3, true, true};
    }
    return {0, false, false};
}

/// log(sinh(x) / x) and its derivative, stable for all x >= 0.
std::pair<double, double> log_sinhc(double x) {
    x = std::abs(x);
    if (x < 1e-4) return {x * x / 6.0, x / 3.0};
    const double d = 1.0 / std::tanh(x) - 1.0 / x;
    if (x > 20.0) return {x - std::log(2.0 * x) + std::log1p(-std::exp(-2.0 * x)), d};
    return {std::log(std::sinh(x) / x), d};
}

/// log C(d) for internal parameters `theta` (size = n_params of the model,
/// scaling dim slot absent for the exponential model). `grad` receives
/// d logC / d theta.
double log_model(FitModel m, const double* theta, double d, double* grad) {
    const double a = theta[0];
    switch (m) {
        case FitModel::Power: {
            const double s = theta[1];
            grad[0] = 1.0;
            grad[1] = -2.0 * std::log(d);
            return a - 2.0 * s * std::log(d);
        }
        case FitModel::Exponential: {
            const double u = theta[1];
            grad[0] = 1.0;
            grad[1] = -d;
            return a - u * d;
        }
        case FitModel::PowerTimesExponential: {
            const double s = theta[1], u = theta[2];
            grad[0] = 1.0;
            grad[1] = -2.0 * std::log(d);
            grad[2] = -d;
            return a - 2.0 * s * std::log(d) - u * d;
        }
        case FitModel::FiniteTCFT: {
            // C = A (T / sinh(pi T d))^(2 s) = A (pi d)^(-2 s) (x / sinh x)^(2 s), x = pi T d.
            const double s = theta[1], t = theta[2];
            const double x = kPi * t * d;
            const auto [ls, dls] = log_sinhc(x);
            const double base = -std::log(kPi * d) - ls;
            grad[0] = 1.0;
            grad[1] = 2.0 * base;
            grad[2] = -2.0 * s * dls * kPi * d * (t < 0 ? -1.0 : 1.0);
            return a + 2.0 * s * base;
        }
    }
    return 0.0;
}

struct SeriesData {
    std::vector<double> d, y, sigma;
};

SeriesData select_points(const CorrelatorSeries& s, const FitRange& r, bool use_stderr) {
    std::size_t last = s.size();
    if (r.drop_sparse_last_bin && last > 0 && s.counts.size() == s.size() && s.counts[last - 1] < r.sparse_count)
        --last;
    SeriesData out;
    bool all_err = use_stderr && s.stderr.size() == s.size();
    for (std::size_t k = 0; k < last; ++k) {
        const double d = s.distances[k];
        if (d <= 0.0 || d < r.min_distance - 1e-12 || d > r.max_distance + 1e-12) continue;
        require(std::isfinite(s.values[k]), ErrorKind::Domain, "correlator value is not finite");
        out.d.push_back(d);
        out.y.push_back(s.values[k]);
        const double e = all_err ? s.stderr[k] : 0.0;
        if (!(e > 0.0)) all_err = false;
        out.sigma.push_back(e);
    }
    if (!all_err) std::fill(out.sigma.begin(), out.sigma.end(), 0.0);
    return out;
}

double line_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Deterministic start: scaling dim from the log-log slope of the first half,
/// inverse length from the semilog slope of the last half, amplitude through
/// the first point.
std::vector<double> initial_guess(FitModel m, const SeriesData& s) {
    std::vector<double> d, ly;
    for (std::size_t k = 0; k < s.d.size(); ++k)
        if (s.y[k] > 0.0) {
            d.push_back(s.d[k]);
            ly.push_back(std::log(s.y[k]));
        }
    const ModelShape sh = shape(m);
    double sdim = 0.1, u = 0.0;
    if (d.size() >= 2) {
        const std::size_t half = std::max<std::size_t>(2, d.size() / 2);
        std::vector<double> lx(half), y1(ly.begin(), ly.begin() + half);
        for (std::size_t k = 0; k < half; ++k) lx[k] = std::log(d[k]);
        sdim = -0.5 * line_slope(lx, y1);
        const std::size_t start = d.size() - half;
        std::vector<double> x2(d.begin() + start, d.end()), y2(ly.begin() + start, ly.end());
        u = std::max(0.0, -line_slope(x2, y2));
    }
    std::vector<double> theta(sh.n_params, 0.0);
    if (m == FitModel::Exponential) {
        theta[1] = u;
    } else {
        theta[1] = sdim;
        if (m == FitModel::PowerTimesExponential) theta[2] = u;
        if (m == FitModel::FiniteTCFT) {
            const double dmax = s.d.empty() ? 1.0 : s.d.back();
            theta[2] = (sdim > 1e-3 && u > 0.0) ? u / (2.0 * kPi * sdim) : 1.0 / (kPi * dmax);
        }
    }
    std::vector<double> g(sh.n_params);
    const double y0 = d.empty() ? std::abs(s.y.front()) : std::exp(ly.front());
    const double d0 = d.empty() ? s.d.front() : d.front();
    theta[0] = std::log(std::max(y0, 1e-300)) - log_model(m, theta.data(), d0, g.data());
    return theta;
}

/// Least-squares problem over several series. Series k uses global
/// parameters `index[k][i]` for its local parameter i.
struct Problem {
    FitModel model;
    std::vector<SeriesData> series;
    std::vector<std::vector<int>> index;
    int n_global = 0;
    bool log_mode = true;
    int n_points() const {
        int n = 0;
        for (const auto& s : series) n += static_cast<int>(s.d.size());
        return n;
    }
};

struct Functor : Eigen::DenseFunctor<double> {
    const Problem& p;
    Functor(const Problem& prob, int values) : Eigen::DenseFunctor<double>(prob.n_global, values), p(prob) {}

    void eval(const Eigen::VectorXd& x, Eigen::VectorXd* fvec, Eigen::MatrixXd* jac) const {
        const int m = shape(p.model).n_params;
        std::vector<double> theta(m), g(m);
        int row = 0;
        for (std::size_t k = 0; k < p.series.size(); ++k) {
            const auto& s = p.series[k];
            for (int i = 0; i < m; ++i) theta[i] = x[p.index[k][i]];
            for (std::size_t j = 0; j < s.d.size(); ++j, ++row) {
                const double f = log_model(p.model, theta.data(), s.d[j], g.data());
                double w = 1.0, r, scale;
                if (p.log_mode) {
                    if (s.sigma[j] > 0.0) w = s.y[j] / s.sigma[j];
                    r = f - std::log(s.y[j]);
                    scale = 1.0;
                } else {
                    if (s.sigma[j] > 0.0) w = 1.0 / s.sigma[j];
                    const double c = std::exp(f);
                    r = c - s.y[j];
                    scale = c;
                }
                if (fvec) (*fvec)[row] = w * r;
                if (jac) {
                    jac->row(row).setZero();
                    for (int i = 0; i < m; ++i) (*jac)(row, p.index[k][i]) += w * scale * g[i];
                }
            }
        }
    }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
        eval(x, &fvec, nullptr);
        return 0;
    }
    int df(const Eigen::VectorXd& x, Eigen::MatrixXd& fjac) const {
        eval(x, nullptr, &fjac);
        return 0;
    }
};

struct Solution {
    Eigen::VectorXd x;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd covariance;
    double rss = 0.0;
};

Solution solve(const Problem& p, Eigen::VectorXd x, const FitOptions& opt) {
    const int n = p.n_points();
    require(n >= p.n_global + 1, ErrorKind::DegenerateFit,
            "fit needs at least " + std::to_string(p.n_global + 1) + " points, got " + std::to_string(n));
    Functor f(p, n);
    Eigen::LevenbergMarquardt<Functor> lm(f);
    lm.setXtol(opt.tolerance);
    lm.setFtol(opt.tolerance);
    lm.setGtol(0.0);
    lm.setMaxfev(opt.max_evaluations);
    const auto status = lm.minimize(x);
    if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
        fail(ErrorKind::DegenerateFit, "fit rejected its input");
    if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation)
        throw ConvergenceError("fit did not converge within the evaluation budget", lm.fnorm());

    Solution s;
    s.x = x;
    s.residuals.resize(n);
    Eigen::MatrixXd jac(n, p.n_global);
    f.eval(x, &s.residuals, &jac);
    require(s.residuals.allFinite() && jac.allFinite(), ErrorKind::DegenerateFit, "fit produced non-finite values");
    s.rss = s.residuals.squaredNorm();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    const auto& sv = svd.singularValues();
    require(sv.size() > 0 && sv[sv.size() - 1] > 1e-10 * sv[0], ErrorKind::DegenerateFit,
            "fit Jacobian is rank deficient");
    const Eigen::MatrixXd jtj_inv = (jac.transpose() * jac).inverse();
    const double dof = std::max(1, n - p.n_global);
    s.covariance = jtj_inv * (s.rss / dof);
    return s;
}

FitParams to_params(FitModel m, const double* theta) {
    FitParams p;
    p.amplitude = std::exp(theta[0]);
    switch (m) {
        case FitModel::Power: p.scaling_dim = theta[1]; break;
        case FitModel::Exponential: p.xi = theta[1] > 0.0 ? 1.0 / theta[1] : kInf; break;
        case FitModel::PowerTimesExponential:
            p.scaling_dim = theta[1];
            p.xi = theta[2] > 0.0 ? 1.0 / theta[2] : kInf;
            break;
        case FitModel::FiniteTCFT:
            p.scaling_dim = theta[1];
            p.temperature = std::abs(theta[2]);
            break;
    }
    return p;
}

FitParams to_stderr(FitModel m, const double* theta, const Eigen::MatrixXd& cov, const std::vector<int>& idx) {
    auto sd = [&](int i) { return std::sqrt(std::max(0.0, cov(idx[i], idx[i]))); };
    FitParams e;
    e.amplitude = std::exp(theta[0]) * sd(0);
    e.xi = 0.0;
    switch (m) {
        case FitModel::Power: e.scaling_dim = sd(1); break;
        case FitModel::Exponential: e.xi = theta[1] > 0.0 ? sd(1) / (theta[1] * theta[1]) : kInf; break;
        case FitModel::PowerTimesExponential:
            e.scaling_dim = sd(1);
            e.xi = theta[2] > 0.0 ? sd(2) / (theta[2] * theta[2]) : kInf;
            break;
        case FitModel::FiniteTCFT:
            e.scaling_dim = sd(1);
            e.temperature = sd(2);
            break;
    }
    return e;
}

bool choose_log_mode(FitMode mode, const std::vector<SeriesData>& series, bool& fallback) {
    bool positive = true;
    for (const auto& s : series)
        for (double y : s.y) positive = positive && y > 0.0;
    fallback = false;
    switch (mode) {
        case FitMode::Direct: return false;
        case FitMode::Log:
        case FitMode::Auto:
            if (!positive) fallback = true;
            return positive;
    }
    return positive;
}

nlohmann::json params_json(const FitParams& p) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); };
    return {{"amplitude", num(p.amplitude)},
            {"scaling_dim", num(p.scaling_dim)},
            {"exponent", num(2.0 * p.scaling_dim)},
            {"xi", num(p.xi)},
            {"temperature", num(p.temperature)}};
}

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = (k == n - 1) ? b : a + (b - a) * k / (n - 1);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Susceptibility

std::vector<double> savitzky_golay(const std::vector<double>& y, int window, int order) {
    const int n = static_cast<int>(y.size());
    require(window % 2 == 1 && window > order && order >= 0, ErrorKind::Domain,
            "Savitzky-Golay window must be odd and exceed the polynomial order");
    require(n >= window, ErrorKind::Domain, "series shorter than the smoothing window");
    const int h = window / 2;
    const Eigen::MatrixXd a = vandermonde(window, order);
    const Eigen::MatrixXd pinv = a.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXd hat = a * pinv;  // window x window
    Eigen::Map<const Eigen::VectorXd> v(y.data(), n);
    std::vector<double> out(n);
    for (int i = h; i < n - h; ++i) out[i] = hat.row(h).dot(v.segment(i - h, window));
    for (int i = 0; i < h; ++i) {
        out[i] = hat.row(i).dot(v.segment(0, window));
        out[n - 1 - i] = hat.row(window - 1 - i).dot(v.segment(n - window, window));
    }
    return out;
}

SusceptibilityScan susceptibility_peak(const std::vector<double>& delta_grid, const std::vector<double>& mean_n,
                                       const SusceptibilityOptions& options) {
    const int n = static_cast<int>(delta_grid.size());
    require(n >= 7, ErrorKind::Domain, "susceptibility scan needs at least 7 points");
    require(static_cast<int>(mean_n.size()) == n, ErrorKind::Dimension, "density series length mismatch");
    for (int k = 1; k < n; ++k)
        require(delta_grid[k] > delta_grid[k - 1], ErrorKind::Domain, "detuning grid must increase strictly");
    require(options.refine >= 1, ErrorKind::Domain, "refinement factor must be >= 1");

    SusceptibilityScan s;
    s.options = options;
    s.delta_grid = delta_grid;
    s.mean_n = mean_n;
    s.smoothed = savitzky_golay(mean_n, std::min(options.window, n % 2 ? n : n - 1), options.order);

    const int nf = options.refine * (n - 1) + 1;
    s.fine_grid = linspace(delta_grid.front(), delta_grid.back(), nf);
    s.interpolated.resize(nf);
    {
        gsl_set_error_handler_off();
        gsl_interp_accel* acc = gsl_interp_accel_alloc();
        gsl_spline* spline = gsl_spline_alloc(gsl_interp_cspline, n);
        const int rc = gsl_spline_init(spline, delta_grid.data(), s.smoothed.data(), n);
        for (int k = 0; k < nf && rc == GSL_SUCCESS; ++k)
            s.interpolated[k] = gsl_spline_eval(spline, s.fine_grid[k], acc);
        gsl_spline_free(spline);
        gsl_interp_accel_free(acc);
        require(rc == GSL_SUCCESS, ErrorKind::Domain, "spline interpolation failed");
    }

    const double h = (s.fine_grid.back() - s.fine_grid.front()) / (nf - 1);
    s.chi_raw.resize(nf);
    for (int k = 1; k < nf - 1; ++k) s.chi_raw[k] = (s.interpolated[k + 1] - s.interpolated[k - 1]) / (2.0 * h);
    s.chi_raw[0] = (s.interpolated[1] - s.interpolated[0]) / h;
    s.chi_raw[nf - 1] = (s.interpolated[nf - 1] - s.interpolated[nf - 2]) / h;

    // The second window covers the same detuning span as chi_window coarse points.
    int fw = options.refine * (options.chi_window - 1) + 1;
    if (fw % 2 == 0) ++fw;
    if (fw > nf) fw = nf % 2 ? nf : nf - 1;
    s.fine_window = fw;
    s.chi = savitzky_golay(s.chi_raw, fw, options.chi_order);

    const auto it = std::max_element(s.chi.begin(), s.chi.end());
    const int k = static_cast<int>(it - s.chi.begin());
    double offset = 0.0;
    if (k > 0 && k < nf - 1) offset = parabolic_offset(s.chi[k - 1], s.chi[k], s.chi[k + 1]);
    s.delta_max = s.fine_grid[k] + offset * h;
    s.chi_max = *it;
    const double lo = *std::min_element(s.chi.begin(), s.chi.end());
    s.unique_peak = (s.chi_max - lo) > 1e-6 * std::max(std::abs(s.chi_max), 1e-300);
    return s;
}

std::string SusceptibilityScan::coarse_csv() const {
    std::string out = "delta,mean_n,smoothed\n";
    for (std::size_t k = 0; k < delta_grid.size(); ++k) out += csv_row({delta_grid[k], mean_n[k], smoothed[k]});
    return out;
}

std::string SusceptibilityScan::fine_csv() const {
    std::string out = "delta,interpolated,chi_raw,chi\n";
    for (std::size_t k = 0; k < fine_grid.size(); ++k)
        out += csv_row({fine_grid[k], interpolated[k], chi_raw[k], chi[k]});
    return out;
}

nlohmann::json SusceptibilityScan::to_json() const {
    return {{"delta_max", delta_max},
            {"chi_max", chi_max},
            {"unique_peak", unique_peak},
            {"window", options.window},
            {"order", options.order},
            {"chi_window", options.chi_window},
            {"chi_window_fine", fine_window},
            {"chi_order", options.chi_order},
            {"refine", options.refine}};
}

// ---------------------------------------------------------------------------
// Fits

const char* to_string(FitModel m) {
    switch (m) {
        case FitModel::Power: return "power";
        case FitModel::Exponential: return "exponential";
        case FitModel::PowerTimesExponential: return "power_exponential";
        case FitModel::FiniteTCFT: return "finite_t_cft";
    }
    return "?";
}

FitModel fit_model_from_string(const std::string& s) {
    for (FitModel m : {FitModel::Power, FitModel::Exponential, FitModel::PowerTimesExponential, FitModel::FiniteTCFT})
        if (s == to_string(m)) return m;
    fail(ErrorKind::Config, "unknown fit model '" + s + "'");
}

double evaluate_model(FitModel model, const FitParams& p, double d) {
    switch (model) {
        case FitModel::Power: return p.amplitude * std::pow(d, -2.0 * p.scaling_dim);
        case FitModel::Exponential: return p.amplitude * std::exp(-d / p.xi);
        case FitModel::PowerTimesExponential:
            return p.amplitude * std::pow(d, -2.0 * p.scaling_dim) * std::exp(-d / p.xi);
        case FitModel::FiniteTCFT: {
            const double t = p.temperature;
            const double base = t > 0.0 ? t / std::sinh(kPi * t * d) : 1.0 / (kPi * d);
            return p.amplitude * std::pow(base, 2.0 * p.scaling_dim);
        }
    }
    return 0.0;
}

nlohmann::json FitResult::to_json() const {
    return {{"model", to_string(model)},
            {"params", params_json(params)},
            {"stderr", params_json(stderr)},
            {"rss", rss},
            {"n_points", n_points},
            {"n_params", n_params},
            {"bic", bic},
            {"log_mode", log_mode},
            {"direct_fallback", direct_fallback},
            {"xi_unbounded", xi_unbounded},
            {"distances", distances},
            {"residuals", residuals}};
}

FitResult fit_correlator(const CorrelatorSeries& series, FitModel model, const FitOptions& options) {
    Problem p;
    p.model = model;
    p.series.push_back(select_points(series, options.range, options.use_stderr_weights));
    const ModelShape sh = shape(model);
    p.n_global = sh.n_params;
    p.index.push_back({});
    for (int i = 0; i < sh.n_params; ++i) p.index[0].push_back(i);
    FitResult r;
    r.model = model;
    r.log_mode = choose_log_mode(options.mode, p.series, r.direct_fallback);
    p.log_mode = r.log_mode;
    const int n = p.n_points();
    require(n >= sh.n_params + 1, ErrorKind::DegenerateFit,
            "fit needs at least " + std::to_string(sh.n_params + 1) + " points in range, got " + std::to_string(n));

    const auto guess = initial_guess(model, p.series[0]);
    const Solution s = solve(p, Eigen::Map<const Eigen::VectorXd>(guess.data(), sh.n_params), options);
    r.params = to_params(model, s.x.data());
    r.stderr = to_stderr(model, s.x.data(), s.covariance, p.index[0]);
    r.covariance = s.covariance;
    r.rss = s.rss;
    r.n_points = n;
    r.n_params = sh.n_params;
    r.bic = n * std::log(std::max(s.rss, 1e-300) / n) + sh.n_params * std::log(static_cast<double>(n));
    r.xi_unbounded = sh.has_third && model != FitModel::FiniteTCFT && !std::isfinite(r.params.xi);
    r.distances = p.series[0].d;
    r.residuals.assign(s.residuals.data(), s.residuals.data() + n);
    return r;
}

nlohmann::json JointFitResult::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t k = 0; k < per_series.size(); ++k)
        per.push_back({{"params", params_json(per_series[k])}, {"stderr", params_json(per_series_stderr[k])}});
    return {{"model", to_string(model)},
            {"scaling_dim", scaling_dim},
            {"scaling_dim_stderr", scaling_dim_stderr},
            {"series", per},
            {"rss", rss},
            {"single_rss_sum", single_rss_sum},
            {"large_residual", large_residual},
            {"n_points", n_points}};
}

JointFitResult joint_fit(const std::vector<CorrelatorSeries>& series, FitModel model, const FitOptions& options) {
    require(!series.empty(), ErrorKind::Domain, "joint fit needs at least one series");
    const ModelShape sh = shape(model);
    require(sh.has_scaling, ErrorKind::Domain, "joint fit shares the scaling dimension; model has none");

    Problem p;
    p.model = model;
    for (const auto& s : series) {
        p.series.push_back(select_points(s, options.range, options.use_stderr_weights));
        require(!p.series.back().d.empty(), ErrorKind::DegenerateFit, "a joint-fit series has no points in range");
    }
    bool fallback = false;
    p.log_mode = choose_log_mode(options.mode, p.series, fallback);

    // Global layout: [scaling dim, (log A, third)_k ...].
    const int per = sh.n_params - 1;
    p.n_global = 1 + per * static_cast<int>(series.size());
    Eigen::VectorXd x(p.n_global);
    double sdim = 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        std::vector<int> idx(sh.n_params);
        idx[1] = 0;
        idx[0] = 1 + per * static_cast<int>(k);
        if (sh.has_third) idx[2] = idx[0] + 1;
        p.index.push_back(idx);
        const auto g = initial_guess(model, p.series[k]);
        x[idx[0]] = g[0];
        if (sh.has_third) x[idx[2]] = g[2];
        sdim += g[1] / static_cast<double>(series.size());
    }
    x[0] = sdim;
    const Solution s = solve(p, x, options);

    JointFitResult r;
    r.model = model;
    r.scaling_dim = s.x[0];
    r.scaling_dim_stderr = std::sqrt(std::max(0.0, s.covariance(0, 0)));
    r.rss = s.rss;
    r.n_points = p.n_points();
    for (std::size_t k = 0; k < series.size(); ++k) {
        std::vector<double> theta(sh.n_params);
        for (int i = 0; i < sh.n_params; ++i) theta[i] = s.x[p.index[k][i]];
        r.per_series.push_back(to_params(model, theta.data()));
        r.per_series_stderr.push_back(to_stderr(model, theta.data(), s.covariance, p.index[k]));
    }
    // Baseline: every series fitted on its own.
    FitOptions single = options;
    single.mode = p.log_mode ? FitMode::Log : FitMode::Direct;
    for (const auto& ser : series) r.single_rss_sum += fit_correlator(ser, model, single).rss;
    const double eps = 1e-8 * std::sqrt(static_cast<double>(r.n_points));
    r.large_residual = std::sqrt(r.rss) > 5.0 * std::sqrt(r.single_rss_sum) + eps;
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap

nlohmann::json BootstrapSummary::to_json() const {
    return {{"estimate", estimate},   {"mean", mean},       {"std", std},           {"median", median},
            {"p15_8", p158},          {"p84", p84},         {"skewness", skewness}, {"asymmetric", asymmetric},
            {"replicates", replicates}, {"failed", failed}, {"central", central()}, {"lower_error", lower_error()},
            {"upper_error", upper_error()}};
}

BootstrapSummary summarize_samples(std::vector<double> samples, double estimate, int failed, double skew_threshold) {
    require(!samples.empty(), ErrorKind::BootstrapInstability, "no successful bootstrap replicates");
    BootstrapSummary b;
    b.estimate = estimate;
    b.failed = failed;
    b.replicates = static_cast<int>(samples.size());
    const double n = static_cast<double>(samples.size());
    b.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0;
    for (double v : samples) {
        const double d = v - b.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    b.std = samples.size() > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
    m2 /= n;
    m3 /= n;
    b.skewness = m2 > 1e-300 ? m3 / std::pow(m2, 1.5) : 0.0;
    std::sort(samples.begin(), samples.end());
    b.median = percentile(samples, 0.5);
    b.p158 = percentile(samples, 0.158);
    b.p84 = percentile(samples, 0.84);
    b.asymmetric = std::abs(b.skewness) > skew_threshold;
    return b;
}

BootstrapDraws bootstrap_draws(const SnapshotSet& snaps, const Estimator& estimator, const BootstrapOptions& opt) {
    require(opt.replicates >= 2, ErrorKind::Domain, "bootstrap needs at least 2 replicates");
    require(snaps.shots() >= 1, ErrorKind::Domain, "bootstrap needs at least one snapshot");
    std::optional<std::vector<double>> plug_in;
    try {
        plug_in = estimator(snaps);
    } catch (const std::exception&) {
        // Replicates decide whether the data set is usable at all.
    }
    const int m = snaps.shots();
    const int b_total = opt.replicates;
    std::vector<std::vector<double>> draws(b_total);
    std::vector<char> ok(b_total, 0);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < b_total; ++b) {
        Rng rng = make_stream(opt.seed, static_cast<std::uint64_t>(b));
        std::uniform_int_distribution<int> pick(0, m - 1);
        std::vector<int> rows(m);
        for (auto& r : rows) r = pick(rng);
        try {
            draws[b] = estimator(snaps.resample(rows));
            ok[b] = (!plug_in || draws[b].size() == plug_in->size()) &&
                    std::all_of(draws[b].begin(), draws[b].end(), [](double v) { return std::isfinite(v); });
        } catch (const std::exception&) {
            ok[b] = 0;
        }
    }
    BootstrapDraws out;
    int failed = 0;
    for (int b = 0; b < b_total; ++b) {
        if (ok[b] && (out.draws.empty() || draws[b].size() == out.draws.front().size()))
            out.draws.push_back(std::move(draws[b]));
        else
            ++failed;
    }
    if (failed > opt.max_failure_fraction * b_total)
        fail(ErrorKind::BootstrapInstability, std::to_string(failed) + " of " + std::to_string(b_total) +
                                                   " bootstrap replicates failed");
    const std::size_t width = out.draws.front().size();
    for (std::size_t j = 0; j < width; ++j) {
        std::vector<double> col;
        col.reserve(out.draws.size());
        for (const auto& d : out.draws) col.push_back(d[j]);
        const double est = plug_in ? (*plug_in)[j] : std::numeric_limits<double>::quiet_NaN();
        out.summaries.push_back(summarize_samples(std::move(col), est, failed, opt.skew_threshold));
    }
    return out;
}

std::vector<BootstrapSummary> bootstrap(const SnapshotSet& snaps, const Estimator& estimator,
                                        const BootstrapOptions& options) {
    return bootstrap_draws(snaps, estimator, options).summaries;
}

// ---------------------------------------------------------------------------
// Kibble-Zurek scan

std::string KzScanResult::to_csv() const {
    std::string out = "rate,delta_max_forward,delta_max_backward\n";
    for (const auto& p : points)
        out += csv_row({format_double(p.rate), format_double(p.forward.delta_max),
                        p.backward ? format_double(p.backward->delta_max) : std::string()});
    return out;
}

nlohmann::json KzScanResult::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : points) {
        nlohmann::json r{{"rate", p.rate}, {"forward", p.forward.to_json()}};
        if (p.backward) r["backward"] = p.backward->to_json();
        rows.push_back(r);
    }
    return {{"points", rows},
            {"forward_monotone", forward_monotone},
            {"backward_inverse", backward_inverse},
            {"plateau_reached", plateau_reached}};
}

KzScanResult kz_rate_scan(const SweepSimulator& simulator, std::vector<double> rates, const KzOptions& options) {
    require(!rates.empty(), ErrorKind::Domain, "rate scan needs at least one rate");
    for (double r : rates) require(r > 0.0, ErrorKind::Domain, "sweep rates must be positive");
    std::sort(rates.begin(), rates.end(), std::greater<>());
    KzScanResult out;
    for (std::size_t k = 0; k < rates.size(); ++k) {
        KzPoint p;
        p.rate = rates[k];
        try {
            p.forward = susceptibility_peak(options.deltas, simulator(rates[k], false, options.deltas),
                                            options.susceptibility);
            if (options.backward)
                p.backward = susceptibility_peak(options.deltas, simulator(rates[k], true, options.deltas),
                                                 options.susceptibility);
        } catch (const Error& e) {
            throw Error(e.kind(), "rate index " + std::to_string(k) + ": " + e.what());
        }
        out.points.push_back(std::move(p));
    }
    for (std::size_t k = 1; k < out.points.size(); ++k) {
        const auto& a = out.points[k - 1];
        const auto& b = out.points[k];
        if (b.forward.delta_max > a.forward.delta_max + options.monotone_tolerance) out.forward_monotone = false;
        if (a.backward && b.backward && b.backward->delta_max < a.backward->delta_max - options.monotone_tolerance)
            out.backward_inverse = false;
    }
    if (!options.backward) out.backward_inverse = false;
    if (out.points.size() >= 2) {
        const auto& a = out.points[out.points.size() - 2].forward;
        const auto& b = out.points.back().forward;
        out.plateau_reached = std::abs(a.delta_max - b.delta_max) <= options.plateau_tolerance;
    }
    return out;
}

SweepSimulator unitary_sweep_simulator(const HamiltonianSpec& spec_template, double delta_low, double delta_high,
                                       const EigenOptions& eigen, const StepControl& control) {
    require(delta_high > delta_low, ErrorKind::Domain, "sweep range must be increasing");
    return [=](double rate, bool backward, const std::vector<double>& deltas) {
        const double start = backward ? delta_high : delta_low;
        const double stop = backward ? delta_low : delta_high;
        const RampProfile ramp = linear_ramp(start, stop, rate, spec_template.omega);
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            require(deltas[k] >= delta_low - 1e-12 && deltas[k] <= delta_high + 1e-12, ErrorKind::Domain,
                    "measurement detuning outside the sweep range");
            order.emplace_back(std::min(ramp.duration(), std::abs(deltas[k] - start) / rate), k);
        }
        std::sort(order.begin(), order.end());
        std::vector<double> times;
        for (const auto& o : order) times.push_back(o.first);
        const StateVector psi0 = ground_state(spec_template.with_delta(start), eigen).state;
        std::vector<double> density(deltas.size());
        std::size_t next = 0;
        evolve_unitary(spec_template, ramp, psi0, control, times, [&](double, const StateVector& psi) {
            density[order[next++].second] = site_occupations(psi).mean();
        });
        require(next == deltas.size(), ErrorKind::Integration, "sweep missed measurement times");
        return density;
    };
}

}  // namespace rydcrit
