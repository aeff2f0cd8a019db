#pragma once

// Residual diagnostics: normalized sample autocorrelation, correlation
// energy, and the Shapiro-Wilk normality test.

#include "feederstats/aggregate.hpp"
#include "feederstats/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace feederstats::residuals {

/// rho[m] = sum_n e[n+m] e[n] / sum_n e[n]^2 for m = 0..max_lag. The
/// estimator is the biased one: no mean removal and no 1/(N-m) correction,
/// unless `demean` is set.
inline std::vector<double> autocorr(std::span<const double> e, std::size_t max_lag, bool demean = false) {
    if (max_lag >= e.size())
        throw InvalidParameter("autocorr: max lag " + std::to_string(max_lag) + " must be below series length " +
                               std::to_string(e.size()));
    std::vector<double> x(e.begin(), e.end());
    if (demean) {
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
        for (double& v : x) v -= mean;
    }
    double energy = 0.0;
    for (double v : x) energy += v * v;
    if (!(energy > 0.0)) throw DegenerateData("autocorr: series has zero energy");

    std::vector<double> rho(max_lag + 1);
    rho[0] = 1.0;
    for (std::size_t m = 1; m <= max_lag; ++m) {
        double acc = 0.0;
        for (std::size_t n = 0; n + m < x.size(); ++n) acc += x[n + m] * x[n];
        rho[m] = acc / energy;
    }
    return rho;
}

/// 1.96/sqrt(N): two-sided 95% band for a white-noise autocorrelation.
inline double significance_threshold(std::size_t n) { return 1.96 / std::sqrt(static_cast<double>(n)); }

/// gamma = sum_{m != 0} |rho[m]| / sum_m |rho[m]|.
inline double correlation_energy(std::span<const double> rho) {
    if (rho.empty()) throw InvalidParameter("correlation_energy: empty autocorrelation");
    double off = 0.0, all = 0.0;
    for (std::size_t m = 0; m < rho.size(); ++m) {
        all += std::abs(rho[m]);
        if (m != 0) off += std::abs(rho[m]);
    }
    return all > 0.0 ? off / all : 0.0;
}

/// As correlation_energy, but the numerator keeps only lags with
/// |rho[m]| > threshold. The denominator is unchanged.
inline double correlation_energy(std::span<const double> rho, double threshold) {
    if (rho.empty()) throw InvalidParameter("correlation_energy: empty autocorrelation");
    double off = 0.0, all = 0.0;
    for (std::size_t m = 0; m < rho.size(); ++m) {
        const double a = std::abs(rho[m]);
        all += a;
        if (m != 0 && a > threshold) off += a;
    }
    return all > 0.0 ? off / all : 0.0;
}

enum class GammaMode { Literal, Significant };

inline double correlation_energy(std::span<const double> rho, GammaMode mode, std::size_t series_length) {
    return mode == GammaMode::Literal ? correlation_energy(rho)
                                      : correlation_energy(rho, significance_threshold(series_length));
}

struct ShapiroWilk {
    double w = 0.0;
    double p_value = 0.0;
    bool pass = false;  // p_value > alpha
};

namespace detail {

// c[0] + c[1] x + c[2] x^2 + ...
template <std::size_t N>
double poly(const std::array<double, N>& c, double x) {
    double r = 0.0;
    for (std::size_t i = N; i-- > 0;) r = r * x + c[i];
    return r;
}

}  // namespace detail

/// Shapiro-Wilk W with Royston's (1992, 1995) polynomial approximations to
/// the coefficients and to the null distribution of W, valid for
/// 3 <= n <= 5000. For n = 3 both the coefficient (1/sqrt 2) and the p-value
/// are exact.
inline ShapiroWilk shapiro_wilk(std::span<const double> sample, double alpha = 0.05) {
    const std::size_t n = sample.size();
    if (n < 3 || n > 5000)
        throw DomainError("shapiro_wilk: sample size " + std::to_string(n) + " outside [3, 5000]");
    for (double v : sample)
        if (!std::isfinite(v)) throw DomainError("shapiro_wilk: non-finite value");

    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    const double magnitude = std::max(std::abs(x.front()), std::abs(x.back()));
    if (!(range > 1e-14 * magnitude) || range == 0.0) throw DegenerateData("shapiro_wilk: constant sample");

    static constexpr std::array<double, 6> c1{0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
    static constexpr std::array<double, 6> c2{0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    static constexpr std::array<double, 4> c3{0.544, -0.39978, 0.025054, -6.714e-4};
    static constexpr std::array<double, 4> c4{1.3822, -0.77857, 0.062767, -0.0020322};
    static constexpr std::array<double, 4> c5{-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr std::array<double, 3> c6{-0.4803, -0.082676, 0.0030302};
    static constexpr std::array<double, 2> g{-2.273, 0.459};

    const boost::math::normal std_normal;
    const double an = static_cast<double>(n);
    const std::size_t half = n / 2;

    // a[i] pairs x[n-1-i] (weight +a[i]) with x[i] (weight -a[i]).
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::sqrt(0.5);
    } else {
        std::vector<double> m(half);
        double summ2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            m[i] = boost::math::quantile(std_normal, (static_cast<double>(i + 1) - 0.375) / (an + 0.25));
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(an);
        const double a1 = detail::poly(c1, rsn) - m[0] / ssumm2;
        std::size_t first_scaled;
        double fac;
        if (n > 5) {
            const double a2 = -m[1] / ssumm2 + detail::poly(c2, rsn);
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
            first_scaled = 2;
        } else {
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
            first_scaled = 1;
        }
        a[0] = a1;
        for (std::size_t i = first_scaled; i < half; ++i) a[i] = -m[i] / fac;
    }

    // W as the squared correlation between the coefficients and the ordered
    // sample; 1 - W is formed directly to keep precision when W is near 1.
    auto coef = [&](std::size_t i) {
        if (i < half) return -a[i];
        if (n - 1 - i < half) return a[n - 1 - i];
        return 0.0;  // middle element of an odd sample
    };
    double sa = 0.0, sx = 0.0;
    for (std::size_t i = 0; i < n; ++i) sa += coef(i), sx += x[i] / range;
    sa /= an;
    sx /= an;
    double ssa = 0.0, ssx = 0.0, sax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double asa = coef(i) - sa;
        const double xsx = x[i] / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    const double ssassx = std::sqrt(ssa * ssx);
    const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);

    ShapiroWilk out;
    out.w = 1.0 - w1;
    if (n == 3) {
        constexpr double six_over_pi = 1.90985931710274;
        constexpr double pi_over_3 = 1.04719755119660;
        out.p_value = std::max(0.0, six_over_pi * (std::asin(std::sqrt(std::min(1.0, out.w))) - pi_over_3));
    } else {
        double y = std::log(w1);
        double mean, sd;
        if (n <= 11) {
            const double gamma = detail::poly(g, an);
            if (y >= gamma) {
                out.p_value = 1e-99;
                out.pass = out.p_value > alpha;
                return out;
            }
            y = -std::log(gamma - y);
            mean = detail::poly(c3, an);
            sd = std::exp(detail::poly(c4, an));
        } else {
            const double log_n = std::log(an);
            mean = detail::poly(c5, log_n);
            sd = std::exp(detail::poly(c6, log_n));
        }
        out.p_value = boost::math::cdf(boost::math::complement(std_normal, (y - mean) / sd));
    }
    out.pass = out.p_value > alpha;
    return out;
}

struct ResidualReport {
    std::vector<double> rho;
    double gamma = 0.0;              // literal correlation energy
    double gamma_significant = 0.0;  // numerator restricted to |rho| > 1.96/sqrt(N)
    std::optional<ShapiroWilk> normality;  // absent when N is outside [3, 5000]
};

/// Autocorrelation up to max_lag (default one day of hourly lags), both
/// correlation energies, and Shapiro-Wilk when the length allows it.
inline ResidualReport residual_report(std::span<const double> e, std::size_t max_lag = 24, double alpha = 0.05) {
    if (e.size() < 3) throw InvalidParameter("residual_report: need at least 3 residuals");
    ResidualReport r;
    r.rho = autocorr(e, std::min(max_lag, e.size() - 1));
    r.gamma = correlation_energy(r.rho);
    r.gamma_significant = correlation_energy(r.rho, significance_threshold(e.size()));
    if (e.size() <= 5000) r.normality = shapiro_wilk(e, alpha);
    return r;
}

struct SweepOptions {
    std::size_t replicates = 20;
    double alpha = 0.05;
    std::size_t max_lag = 24;
    GammaMode gamma_mode = GammaMode::Literal;
};

struct SweepLevel {
    std::size_t level_index = 0;
    std::size_t n_customers = 0;
    double pass_fraction = 0.0;  // share of replicates passing Shapiro-Wilk
    double mean_gamma = 0.0;     // mean correlation energy (per gamma_mode)
    double reference = 0.95;     // pass rate expected under Gaussian residuals
};

struct NormalitySweep {
    std::vector<SweepLevel> levels;
    std::vector<aggregate::Warning> warnings;
};

/// Per-level residual statistics from an evaluated set of aggregates.
/// Shapiro-Wilk runs on each replicate's daily-total forecast residuals; the
/// correlation energy uses the hourly residual series.
inline NormalitySweep summarize_sweep(const aggregate::Evaluation& ev, const SweepOptions& opts) {
    NormalitySweep out;
    out.warnings = ev.warnings;
    for (std::size_t i = 0; i < ev.cells.size();) {
        std::size_t j = i;
        std::size_t passes = 0;
        double gamma_sum = 0.0;
        for (; j < ev.cells.size() && ev.cells[j].level_index == ev.cells[i].level_index; ++j) {
            const auto daily = ev.cells[j].backtest.daily_residuals();
            const auto hourly = ev.cells[j].backtest.hourly_residuals();
            if (shapiro_wilk(daily, opts.alpha).pass) ++passes;
            const auto rho = autocorr(hourly, std::min(opts.max_lag, hourly.size() - 1));
            gamma_sum += correlation_energy(rho, opts.gamma_mode, hourly.size());
        }
        const double count = static_cast<double>(j - i);
        out.levels.push_back({ev.cells[i].level_index, ev.cells[i].n_customers, static_cast<double>(passes) / count,
                              gamma_sum / count, 1.0 - opts.alpha});
        i = j;
    }
    return out;
}

/// Shapiro-Wilk pass fraction and mean correlation energy per aggregation
/// level over `opts.replicates` random aggregates.
template <aggregate::Population P>
NormalitySweep sweep_normality(const P& population, const std::vector<std::size_t>& levels,
                               const forecast::ForecasterConfig& cfg, std::uint64_t seed,
                               const SweepOptions& opts = {}) {
    return summarize_sweep(aggregate::evaluate_levels(population, levels, opts.replicates, cfg, seed), opts);
}

}  // namespace feederstats::residuals
