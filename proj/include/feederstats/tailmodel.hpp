#pragma once

// Generalized Pareto load model: distribution functions, seeded sampling,
// maximum-likelihood fitting with confidence intervals, and the empirical
// tail diagnostics (mean excess, log survival, Zipf rank plot).
//
// Density convention (shape kappa, scale sigma, location theta):
//
//   f(x) = (1/sigma) * (1 + kappa * (x - theta) / sigma) ^ -(1 + 1/kappa)
//
// with the exponential limit exp(-(x - theta)/sigma) / sigma at kappa == 0.
// Support is x >= theta for kappa >= 0 and theta <= x <= theta - sigma/kappa
// for kappa < 0.

#include "feederstats/error.hpp"
#include "feederstats/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace feederstats::tail {

struct GpdParams {
    double kappa = 0.0;  // shape
    double sigma = 1.0;  // scale, kWh
    double theta = 0.0;  // location / lower bound, kWh
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const noexcept { return lo <= v && v <= hi; }
};

struct GpdFit {
    GpdParams params;
    Interval ci_kappa;
    Interval ci_sigma;
    double log_likelihood = 0.0;
    std::size_t n = 0;
    std::size_t iterations = 0;  // outer optimizer iterations
};

struct MeanExcessPoint {
    double threshold = 0.0;    // u, kWh
    double mean_excess = 0.0;  // e(u), kWh
    std::size_t exceedances = 0;
};

// A point of a log-log diagnostic curve.
struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

struct TailDiagnostics {
    std::vector<MeanExcessPoint> mean_excess;
    std::vector<CurvePoint> log_survival;  // (log x, log S(x))
    std::vector<CurvePoint> zipf;          // (log k, log x_[k])
};

inline void validate(const GpdParams& p) {
    if (!(p.sigma > 0.0) || !std::isfinite(p.sigma))
        throw InvalidParameter("GPD scale sigma must be finite and > 0, got " + std::to_string(p.sigma));
    if (!std::isfinite(p.kappa) || !std::isfinite(p.theta))
        throw InvalidParameter("GPD shape and location must be finite");
}

namespace detail {

// log1p(k*z)/k, continuous through k == 0.
inline double log1p_ratio(double k, double z) noexcept {
    return k == 0.0 ? z : std::log1p(k * z) / k;
}

// expm1(k*t)/k, continuous through k == 0.
inline double expm1_ratio(double k, double t) noexcept {
    return k == 0.0 ? t : std::expm1(k * t) / k;
}

}  // namespace detail

/// Upper end of the support; +infinity when kappa >= 0.
inline double support_upper(const GpdParams& p) {
    validate(p);
    return p.kappa >= 0.0 ? std::numeric_limits<double>::infinity() : p.theta - p.sigma / p.kappa;
}

inline double gpd_pdf(double x, const GpdParams& p) {
    validate(p);
    const double z = (x - p.theta) / p.sigma;
    if (z < 0.0) return 0.0;
    const double w = 1.0 + p.kappa * z;
    if (w < 0.0) return 0.0;
    if (w == 0.0) {
        // Upper endpoint for kappa < 0; the limit depends on the exponent sign.
        const double expo = -(1.0 + 1.0 / p.kappa);
        if (expo > 0.0) return 0.0;
        if (expo == 0.0) return 1.0 / p.sigma;
        return std::numeric_limits<double>::infinity();
    }
    const double log_density = -std::log(p.sigma) - std::log1p(p.kappa * z) - detail::log1p_ratio(p.kappa, z);
    return std::exp(log_density);
}

inline double gpd_cdf(double x, const GpdParams& p) {
    validate(p);
    const double z = (x - p.theta) / p.sigma;
    if (z <= 0.0) return 0.0;
    if (p.kappa < 0.0 && 1.0 + p.kappa * z <= 0.0) return 1.0;
    return -std::expm1(-detail::log1p_ratio(p.kappa, z));
}

/// Inverse CDF. gpd_quantile(1, p) is +infinity for kappa >= 0 (unbounded
/// support) and the finite upper endpoint for kappa < 0.
inline double gpd_quantile(double q, const GpdParams& p) {
    validate(p);
    if (!(q >= 0.0 && q <= 1.0))
        throw DomainError("GPD quantile level must lie in [0, 1], got " + std::to_string(q));
    if (q == 1.0) return support_upper(p);
    const double t = -std::log1p(-q);
    return p.theta + p.sigma * detail::expm1_ratio(p.kappa, t);
}

/// Inverse-CDF sampling; identical output for identical (p, n, seed).
inline std::vector<double> gpd_sample(const GpdParams& p, std::size_t n, std::uint64_t seed) {
    validate(p);
    if (n == 0) throw InvalidParameter("gpd_sample needs n >= 1");
    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = gpd_quantile(rng.uniform(), p);
    return out;
}

/// Resolution of the location parameter before fitting. The location is
/// never estimated jointly with shape and scale.
struct ThetaPolicy {
    std::optional<double> fixed;

    static ThetaPolicy fixed_value(double theta) { return ThetaPolicy{theta}; }
    // theta = min(sample) - 1e-9 * max(|min|, 1)
    static ThetaPolicy sample_minimum() { return ThetaPolicy{std::nullopt}; }

    double resolve(std::span<const double> samples) const {
        if (fixed) return *fixed;
        const double lo = *std::min_element(samples.begin(), samples.end());
        return lo - 1e-9 * std::max(std::abs(lo), 1.0);
    }
};

struct MleOptions {
    double kappa_lo = -0.99;
    double kappa_hi = 5.0;
    std::size_t max_iterations = 500;
    std::size_t min_samples = 30;
    double confidence = 0.95;
};

namespace detail {

// Log-likelihood of exceedances y (= x - theta) at shape k and log-scale s.
inline double gpd_loglik(std::span<const double> y, double k, double s) {
    const double inv_sigma = std::exp(-s);
    double acc = 0.0;
    for (double yi : y) {
        const double z = yi * inv_sigma;
        const double w = 1.0 + k * z;
        if (w <= 0.0) return -std::numeric_limits<double>::infinity();
        acc += std::log1p(k * z) + log1p_ratio(k, z);
    }
    return -static_cast<double>(y.size()) * s - acc;
}

// Maximizes the log-likelihood over s = log(sigma) for fixed shape k. The
// score in s is strictly decreasing for k > -1, so the root is unique;
// Newton steps are safeguarded by bisection on a sign-change bracket.
inline double profile_log_scale(std::span<const double> y, double k, double y_max) {
    const double n = static_cast<double>(y.size());
    auto score = [&](double s, double* slope) {
        const double inv_sigma = std::exp(-s);
        double g = 0.0, h = 0.0;
        for (double yi : y) {
            const double z = yi * inv_sigma;
            const double w = 1.0 + k * z;
            if (w <= 0.0) {
                if (slope) *slope = 0.0;
                return std::numeric_limits<double>::infinity();
            }
            g += z / w;
            h += z / (w * w);
        }
        if (slope) *slope = -(1.0 + k) * h;
        return -n + (1.0 + k) * g;
    };

    // Bracket [lo, hi] with score(lo) > 0 > score(hi).
    double lo, hi;
    bool lo_open = false;  // lo sits on the support boundary (score -> +inf)
    if (k < 0.0) {
        lo = std::log(-k * y_max);
        lo_open = true;
    } else {
        lo = std::log(y_max);
        for (int i = 0; i < 200 && score(lo, nullptr) <= 0.0; ++i) lo -= 2.0;
    }
    hi = std::log(y_max) + 1.0;
    if (k < 0.0) hi = std::max(hi, lo + 1.0);
    for (int i = 0; i < 200 && score(hi, nullptr) >= 0.0; ++i) hi += 2.0;

    double s = lo_open ? hi : 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double slope = 0.0;
        const double g = score(s, &slope);
        if (g > 0.0) lo = s, lo_open = false;
        else hi = s;
        double next = (slope < 0.0 && std::isfinite(g)) ? s - g / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) <= 1e-14 * std::max(1.0, std::abs(s))) return next;
        s = next;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(s))) return s;
    }
    return s;
}

}  // namespace detail

/// Maximum-likelihood fit of (kappa, sigma) at a resolved location theta.
///
/// sigma is profiled out by an inner 1-D solve; the profile likelihood in
/// kappa is bracketed on a coarse grid over [kappa_lo, kappa_hi] and refined
/// by Brent's method. Confidence intervals are Wald intervals from the
/// observed information on (kappa, log sigma); the sigma interval is the
/// back-transformed log-scale interval and is therefore asymmetric.
inline GpdFit fit_gpd_mle(std::span<const double> samples, ThetaPolicy policy = ThetaPolicy::sample_minimum(),
                          const MleOptions& opts = {}) {
    if (samples.size() < opts.min_samples)
        throw InvalidParameter("fit_gpd_mle needs at least " + std::to_string(opts.min_samples) +
                               " samples, got " + std::to_string(samples.size()));
    for (double v : samples)
        if (!std::isfinite(v)) throw DomainError("fit_gpd_mle: non-finite sample");

    const double theta = policy.resolve(samples);
    std::vector<double> y(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        y[i] = samples[i] - theta;
        if (y[i] < 0.0)
            throw DomainError("fit_gpd_mle: sample " + std::to_string(samples[i]) + " below theta " +
                              std::to_string(theta));
    }
    const auto [min_it, max_it] = std::minmax_element(y.begin(), y.end());
    const double y_max = *max_it;
    if (!(y_max - *min_it > 0.0)) throw DegenerateData("fit_gpd_mle: samples have zero spread");

    auto profile = [&](double k) {
        const double s = detail::profile_log_scale(y, k, y_max);
        return std::pair{s, detail::gpd_loglik(y, k, s)};
    };

    // Coarse grid to bracket the global maximum of the profile.
    constexpr int grid = 24;
    const double step = (opts.kappa_hi - opts.kappa_lo) / grid;
    int best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
        const double ll = profile(opts.kappa_lo + step * i).second;
        if (ll > best_ll) best_ll = ll, best = i;
    }
    const double a = opts.kappa_lo + step * std::max(0, best - 1);
    const double b = opts.kappa_lo + step * std::min(grid, best + 1);

    std::uintmax_t iterations = opts.max_iterations;
    const auto [k_hat, neg_ll] = boost::math::tools::brent_find_minima(
        [&](double k) { return -profile(k).second; }, a, b, 45, iterations);
    if (iterations >= opts.max_iterations)
        throw ConvergenceError("fit_gpd_mle: profile likelihood search did not converge", iterations,
                               std::abs(b - a));
    const double s_hat = profile(k_hat).first;

    GpdFit fit;
    fit.params = GpdParams{k_hat, std::exp(s_hat), theta};
    fit.log_likelihood = -neg_ll;
    fit.n = samples.size();
    fit.iterations = static_cast<std::size_t>(iterations);

    // Observed information by central differences on (kappa, log sigma).
    const double hk = 1e-4, hs = 1e-4;
    auto ll = [&](double k, double s) { return detail::gpd_loglik(y, k, s); };
    const double f0 = ll(k_hat, s_hat);
    const double fkk = (ll(k_hat + hk, s_hat) - 2 * f0 + ll(k_hat - hk, s_hat)) / (hk * hk);
    const double fss = (ll(k_hat, s_hat + hs) - 2 * f0 + ll(k_hat, s_hat - hs)) / (hs * hs);
    const double fks = (ll(k_hat + hk, s_hat + hs) - ll(k_hat + hk, s_hat - hs) - ll(k_hat - hk, s_hat + hs) +
                        ll(k_hat - hk, s_hat - hs)) /
                       (4 * hk * hs);
    const double ikk = -fkk, iss = -fss, iks = -fks;
    const double det = ikk * iss - iks * iks;

    const double z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * opts.confidence);
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (std::isfinite(det) && det > 0.0 && ikk > 0.0) {
        const double se_k = std::sqrt(iss / det);
        const double se_s = std::sqrt(ikk / det);
        fit.ci_kappa = {k_hat - z * se_k, k_hat + z * se_k};
        fit.ci_sigma = {std::exp(s_hat - z * se_s), std::exp(s_hat + z * se_s)};
    } else {
        // Information not positive definite (maximum on the search boundary).
        fit.ci_kappa = {-inf, inf};
        fit.ci_sigma = {0.0, inf};
    }
    return fit;
}

/// Empirical mean excess e(u) = mean(x - u | x > u) at each threshold.
/// Thresholds with fewer than `min_exceedances` exceedances are omitted.
inline std::vector<MeanExcessPoint> mean_excess(std::span<const double> samples, std::span<const double> thresholds,
                                                std::size_t min_exceedances = 10) {
    if (samples.empty()) throw DegenerateData("mean_excess: empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    // suffix[i] = sum of sorted[i..n)
    std::vector<double> suffix(sorted.size() + 1, 0.0);
    for (std::size_t i = sorted.size(); i-- > 0;) suffix[i] = suffix[i + 1] + sorted[i];

    std::vector<MeanExcessPoint> out;
    out.reserve(thresholds.size());
    for (double u : thresholds) {
        const auto first = std::upper_bound(sorted.begin(), sorted.end(), u);
        const auto idx = static_cast<std::size_t>(first - sorted.begin());
        const std::size_t count = sorted.size() - idx;
        if (count == 0 || count < min_exceedances) continue;
        out.push_back({u, suffix[idx] / static_cast<double>(count) - u, count});
    }
    return out;
}

/// `count` thresholds at evenly spaced empirical quantile levels in [lo, hi]
/// (linear interpolation between order statistics).
inline std::vector<double> quantile_thresholds(std::span<const double> samples, double lo, double hi,
                                               std::size_t count) {
    if (samples.empty()) throw DegenerateData("quantile_thresholds: empty sample");
    if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) throw DomainError("quantile_thresholds: need 0 <= lo <= hi <= 1");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double q = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto j = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(j);
        const double v = j + 1 < sorted.size() ? sorted[j] + frac * (sorted[j + 1] - sorted[j]) : sorted[j];
        out.push_back(v);
    }
    return out;
}

namespace detail {

inline std::vector<double> descending_positive(std::span<const double> samples, const char* who) {
    if (samples.empty()) throw DegenerateData(std::string(who) + ": empty sample");
    std::vector<double> v(samples.begin(), samples.end());
    for (double x : v)
        if (!(x > 0.0)) throw DomainError(std::string(who) + ": samples must be > 0 for log axes");
    std::stable_sort(v.begin(), v.end(), std::greater<>());
    return v;
}

}  // namespace detail

/// Zipf (log rank) plot: (log k, log x_[k]) for k = 1..N, x_[1] the largest.
inline std::vector<CurvePoint> zipf_points(std::span<const double> samples) {
    const auto v = detail::descending_positive(samples, "zipf_points");
    std::vector<CurvePoint> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = {std::log(static_cast<double>(k + 1)), std::log(v[k])};
    return out;
}

/// Empirical log survival curve with S(x_[k]) = k/N, so the largest
/// observation is plotted at 1/N and log 0 never occurs. Points are ordered by
/// increasing x.
inline std::vector<CurvePoint> log_survival_points(std::span<const double> samples) {
    const auto v = detail::descending_positive(samples, "log_survival_points");
    const double n = static_cast<double>(v.size());
    std::vector<CurvePoint> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        const std::size_t rank = v.size() - k;  // walk from smallest value
        out[k] = {std::log(v[rank - 1]), std::log(static_cast<double>(rank) / n)};
    }
    return out;
}

inline TailDiagnostics tail_diagnostics(std::span<const double> samples, std::span<const double> thresholds,
                                        std::size_t min_exceedances = 10) {
    return TailDiagnostics{mean_excess(samples, thresholds, min_exceedances), log_survival_points(samples),
                           zipf_points(samples)};
}

/// Ordinary least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("ols_slope: need >= 2 paired values");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (!(sxx > 0.0)) throw DegenerateData("ols_slope: x has zero spread");
    return sxy / sxx;
}

/// Slope of the mean-excess line fitted by least squares; kappa/(1-kappa)
/// for GPD data with kappa < 1, zero for exponential data.
inline double mean_excess_slope(std::span<const MeanExcessPoint> points) {
    std::vector<double> u, e;
    for (const auto& p : points) u.push_back(p.threshold), e.push_back(p.mean_excess);
    return ols_slope(u, e);
}

/// Power-law exponent of the rank tail: least-squares slope of log k on
/// log x_[k] over order statistics x_[k] > min_value. For a Pareto tail with
/// survival ~ x^(-1/kappa) the slope tends to -1/kappa.
inline double zipf_tail_slope(std::span<const double> samples, double min_value) {
    const auto pts = zipf_points(samples);
    std::vector<double> log_x, log_k;
    const double cut = std::log(min_value);
    for (const auto& p : pts) {
        if (p.y <= cut) break;  // descending order
        log_x.push_back(p.y);
        log_k.push_back(p.x);
    }
    return ols_slope(log_x, log_k);
}

}  // namespace feederstats::tail
