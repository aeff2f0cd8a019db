#pragma once

// Forecast-error aggregation scaling: the CV error metric, the aggregation
// error curve, and the fit of
//
//   CV(W) = sqrt(beta0 / W^p + beta1)   (percent)
//
// with the critical load W* (reducible term equals irreducible term) and the
// irreducible error sqrt(beta1).

#include "feederstats/aggregate.hpp"
#include "feederstats/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace feederstats::scaling {

struct AggregationPoint {
    double W = 0.0;   // mean hourly aggregate load, kWh
    double cv = 0.0;  // forecast error, percent
    std::size_t n_customers = 0;
    std::size_t replicate = 0;
};

struct ScalingLaw {
    double beta0 = 0.0;  // %^2 kWh^p
    double beta1 = 0.0;  // %^2
    double p = 1.0;
    double sse = 0.0;    // sum of squared cv residuals, %^2
};

/// Coefficient of variation of the forecast error: 100 * RMSE / mean(actual).
inline double cv(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.empty())
        throw ContractError("cv: series must have equal, non-zero length");
    double se = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double e = actual[i] - predicted[i];
        se += e * e;
        sum += actual[i];
    }
    const double n = static_cast<double>(actual.size());
    const double mean = sum / n;
    if (!(mean > 0.0)) throw DomainError("cv: mean of actual series must be > 0");
    return 100.0 * std::sqrt(se / n) / mean;
}

inline double eval_scaling(const ScalingLaw& law, double W) {
    if (!(W > 0.0)) throw DomainError("eval_scaling: W must be > 0");
    return std::sqrt(law.beta0 / std::pow(W, law.p) + law.beta1);
}

/// W* = (beta0 / beta1)^(1/p); beta0 / beta1 for p = 1.
inline double critical_load(const ScalingLaw& law) {
    if (!(law.beta1 > 0.0)) throw DomainError("critical_load: undefined for beta1 = 0");
    const double ratio = law.beta0 / law.beta1;
    return law.p == 1.0 ? ratio : std::pow(ratio, 1.0 / law.p);
}

inline double irreducible_error(const ScalingLaw& law) { return std::sqrt(law.beta1); }

inline double scaling_sse(const ScalingLaw& law, std::span<const AggregationPoint> pts) {
    double s = 0.0;
    for (const auto& pt : pts) {
        const double r = pt.cv - eval_scaling(law, pt.W);
        s += r * r;
    }
    return s;
}

/// SSE of the constant-CV null model (cv = mean cv).
inline double constant_sse(std::span<const AggregationPoint> pts) {
    if (pts.empty()) return 0.0;
    double mean = 0.0;
    for (const auto& pt : pts) mean += pt.cv;
    mean /= static_cast<double>(pts.size());
    double s = 0.0;
    for (const auto& pt : pts) s += (pt.cv - mean) * (pt.cv - mean);
    return s;
}

enum class FitMethod {
    Auto,        // Linearized for p == 1, Nonlinear otherwise
    Linearized,  // least squares of cv^2 on W^-p, projected onto beta >= 0
    Nonlinear,   // least squares on cv, beta = theta^2, damped Gauss-Newton
};

namespace detail {

inline void check_points(std::span<const AggregationPoint> pts, double p) {
    if (!(p > 0.0)) throw InvalidParameter("fit_scaling_law: exponent p must be > 0");
    if (pts.size() < 3) throw InvalidParameter("fit_scaling_law: need at least 3 points");
    for (const auto& pt : pts)
        if (!(pt.W > 0.0) || !(pt.cv >= 0.0) || !std::isfinite(pt.W) || !std::isfinite(pt.cv))
            throw DomainError("fit_scaling_law: points need W > 0 and cv >= 0");
    const auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                              [](const auto& a, const auto& b) { return a.W < b.W; });
    if (lo->W == hi->W) throw DegenerateData("fit_scaling_law: all W identical; law is unidentifiable");
}

// Two-variable non-negative least squares of y on [x, 1]: the unconstrained
// solution if feasible, otherwise the better of the two boundary fits.
inline std::pair<double, double> nnls_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    const double icept = my - slope * mx;
    if (slope >= 0.0 && icept >= 0.0) return {slope, icept};

    auto sse = [&](double b0, double b1) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] - b0 * x[i] - b1) * (y[i] - b0 * x[i] - b1);
        return s;
    };
    // beta0 = 0: constant fit. beta1 = 0: line through the origin.
    const std::pair<double, double> flat{0.0, std::max(0.0, my)};
    double sxy0 = 0.0, sxx0 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy0 += x[i] * y[i], sxx0 += x[i] * x[i];
    const std::pair<double, double> origin{std::max(0.0, sxy0 / sxx0), 0.0};
    return sse(flat.first, flat.second) <= sse(origin.first, origin.second) ? flat : origin;
}

}  // namespace detail

/// Fits (beta0, beta1) at fixed exponent p. The reported SSE is always on the
/// cv scale, whichever objective produced the estimate.
inline ScalingLaw fit_scaling_law(std::span<const AggregationPoint> pts, double p = 1.0,
                                  FitMethod method = FitMethod::Auto) {
    detail::check_points(pts, p);
    if (method == FitMethod::Auto) method = p == 1.0 ? FitMethod::Linearized : FitMethod::Nonlinear;

    std::vector<double> x(pts.size()), cv(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        x[i] = std::pow(pts[i].W, -p);
        cv[i] = pts[i].cv;
    }

    ScalingLaw law;
    law.p = p;
    if (method == FitMethod::Linearized) {
        std::vector<double> cv2(cv.size());
        for (std::size_t i = 0; i < cv.size(); ++i) cv2[i] = cv[i] * cv[i];
        std::tie(law.beta0, law.beta1) = detail::nnls_line(x, cv2);
        law.sse = scaling_sse(law, pts);
        return law;
    }

    // Start from a crude two-point guess independent of the linearized fit:
    // beta1 from the smallest observed cv, beta0 from the spread.
    const auto [cmin, cmax] = std::minmax_element(cv.begin(), cv.end());
    const double xmax = *std::max_element(x.begin(), x.end());
    double t0 = std::sqrt(std::max(1e-6, (*cmax * *cmax - *cmin * *cmin) / xmax));
    double t1 = std::max(1e-3, *cmin);

    auto sse_at = [&](double a0, double a1) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = std::sqrt(a0 * a0 * x[i] + a1 * a1) - cv[i];
            s += r * r;
        }
        return s;
    };
    double sse = sse_at(t0, t1);
    double lambda = 1e-3;
    for (int it = 0; it < 200; ++it) {
        Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
        Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double q = std::max(t0 * t0 * x[i] + t1 * t1, 1e-300);
            const double root = std::sqrt(q);
            const Eigen::Vector2d J(t0 * x[i] / root, t1 / root);
            JtJ += J * J.transpose();
            Jtr += J * (root - cv[i]);
        }
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::Matrix2d A = JtJ;
            A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
            const Eigen::Vector2d step = A.ldlt().solve(-Jtr);
            const double n0 = t0 + step(0), n1 = t1 + step(1);
            const double s = sse_at(n0, n1);
            if (std::isfinite(s) && s <= sse) {
                const double change = sse - s;
                t0 = n0, t1 = n1;
                const double prev = sse;
                sse = s;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (change <= 1e-12 * prev || sse == 0.0) it = 200;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) break;
    }
    law.beta0 = t0 * t0;
    law.beta1 = t1 * t1;
    law.sse = scaling_sse(law, pts);
    return law;
}

struct AggregationCurve {
    std::vector<AggregationPoint> points;  // ordered by (level, replicate)
    std::vector<aggregate::Warning> warnings;
};

inline std::vector<AggregationPoint> curve_points(const aggregate::Evaluation& ev) {
    std::vector<AggregationPoint> out;
    out.reserve(ev.cells.size());
    for (const auto& c : ev.cells) {
        const auto& bt = c.backtest;
        const double W = std::accumulate(bt.actual_hourly.begin(), bt.actual_hourly.end(), 0.0) /
                         static_cast<double>(bt.actual_hourly.size());
        out.push_back({W, cv(bt.actual_hourly, bt.predicted_hourly), c.n_customers, c.replicate});
    }
    return out;
}

/// Aggregation error curve: for every level, `replicates` random aggregates
/// are forecast out of sample and recorded as (W = mean hourly aggregate
/// load over the evaluation window, hourly CV).
template <aggregate::Population P>
AggregationCurve build_agg_curve(const P& population, const std::vector<std::size_t>& levels,
                                 std::size_t replicates, const forecast::ForecasterConfig& cfg, std::uint64_t seed) {
    auto ev = aggregate::evaluate_levels(population, levels, replicates, cfg, seed);
    return AggregationCurve{curve_points(ev), std::move(ev.warnings)};
}

}  // namespace feederstats::scaling
