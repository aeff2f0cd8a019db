#pragma once

// Decomposed day-ahead forecaster.
//
// A day's 24-hour profile x is split into its total p = sum(x) and its shape
// u = x / p. The total follows a scalar ARX model on past totals and daily
// mean temperatures,
//
//   p[d+1] = sum_{j<K} a_j p[d-j] + sum_{j<=K} b_j t[d+1-j] (+ c),
//
// and the shape a vector ARX model on past shapes and hourly temperatures,
//
//   u[d+1] = sum_{j<K} C_j u[d-j] + sum_{j<=K} H_j t[d+1-j] (+ c).
//
// Coefficient vectors are stored most-recent-first (a_0 multiplies the latest
// observed day d, b_0 the forecast day's temperature); windows passed to the
// predict functions are oldest-first. The forecast is x[d+1] = p[d+1] u[d+1].

#include "feederstats/error.hpp"
#include "feederstats/lstsq.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace feederstats::forecast {

inline constexpr std::size_t kHours = 24;
using Hours = std::array<double, kHours>;

struct DailyProfile {
    Hours hours{};  // kWh per hour
    long day = 0;
};

struct ShapeDay {
    Hours u{};  // non-negative, sums to 1
};

/// Aligned consumption and temperature series. The temperature series may be
/// one day longer than consumption; the extra day carries the temperature
/// forecast for the day to be predicted.
struct LoadHistory {
    std::vector<DailyProfile> days;
    std::vector<double> daily_mean_temp;  // deg C
    std::vector<Hours> hourly_temp;       // deg C

    std::size_t n_days() const noexcept { return days.size(); }
    bool has_next_day_temperature() const noexcept { return daily_mean_temp.size() == days.size() + 1; }

    void validate() const {
        if (daily_mean_temp.size() != hourly_temp.size())
            throw ContractError("history: daily and hourly temperature series differ in length");
        if (daily_mean_temp.size() != days.size() && daily_mean_temp.size() != days.size() + 1)
            throw ContractError("history: temperature series must cover every consumption day (plus at most one)");
        for (const auto& d : days)
            for (double v : d.hours)
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw DomainError("history: day " + std::to_string(d.day) + " has a negative or non-finite load");
    }

    /// First n days; keeps temperature for day n when available so the
    /// result can forecast day n.
    LoadHistory head(std::size_t n, bool with_next_temperature = false) const {
        if (n > days.size()) throw ContractError("history.head: not enough days");
        const std::size_t nt = std::min(daily_mean_temp.size(), n + (with_next_temperature ? 1 : 0));
        LoadHistory h;
        h.days.assign(days.begin(), days.begin() + static_cast<std::ptrdiff_t>(n));
        h.daily_mean_temp.assign(daily_mean_temp.begin(), daily_mean_temp.begin() + static_cast<std::ptrdiff_t>(nt));
        h.hourly_temp.assign(hourly_temp.begin(), hourly_temp.begin() + static_cast<std::ptrdiff_t>(nt));
        return h;
    }

    std::vector<double> totals() const {
        std::vector<double> p(days.size());
        for (std::size_t i = 0; i < days.size(); ++i)
            p[i] = std::accumulate(days[i].hours.begin(), days[i].hours.end(), 0.0);
        return p;
    }
};

struct Decomposition {
    double total = 0.0;
    ShapeDay shape;
};

inline Decomposition decompose_day(const DailyProfile& x) {
    double p = 0.0;
    for (double v : x.hours) {
        if (!(v >= 0.0)) throw DomainError("decompose_day: negative or NaN hourly load");
        p += v;
    }
    if (!(p > 0.0)) throw DegenerateData("decompose_day: day " + std::to_string(x.day) + " has no positive load");
    Decomposition out{p, {}};
    for (std::size_t h = 0; h < kHours; ++h) out.shape.u[h] = x.hours[h] / p;
    return out;
}

struct FitOptions {
    bool intercept = true;  // the literal equations have none
    bool exogenous = true;  // false pins every temperature coefficient to zero
    RankPolicy rank = RankPolicy::Error;
};

struct ArxModel {
    std::size_t order = 1;
    std::vector<double> lag;   // lag[j] multiplies p[d-j], size K
    std::vector<double> exog;  // exog[j] multiplies t[d+1-j], size K+1
    double intercept = 0.0;
};

struct VectorArxModel {
    std::size_t order = 1;
    std::vector<Eigen::MatrixXd> lag;   // lag[j] (24x24) multiplies u[d-j]
    std::vector<Eigen::MatrixXd> exog;  // exog[j] (24x24) multiplies hourly t[d+1-j]
    Eigen::VectorXd intercept = Eigen::VectorXd::Zero(kHours);
};

/// Minimum history length: twice the regressor count of the total model.
inline std::size_t min_days_total(std::size_t K) { return 2 * (2 * K + 2); }

/// Minimum history length for the shape model, scaled by dimension.
inline std::size_t min_days_shape(std::size_t K) { return 2 * (kHours * K + kHours * (K + 1) + 1); }

namespace detail {

inline void check_order(std::size_t K) {
    if (K == 0) throw InvalidParameter("model order K must be >= 1");
}

inline std::string lag_name(const char* var, std::size_t j) {
    return j == 0 ? std::string(var) + "[d]" : std::string(var) + "[d-" + std::to_string(j) + "]";
}

inline std::string exog_name(std::size_t j) {
    if (j == 0) return "t[d+1]";
    if (j == 1) return "t[d]";
    return "t[d-" + std::to_string(j - 1) + "]";
}

// In the shape design the last hour of a lag block is redundant once a
// constant is in the span (shapes sum to one): with an intercept every block
// drops it, without one every block after the first does.
inline bool drops_last_hour(const FitOptions& opts, std::size_t block) { return opts.intercept || block > 0; }

}  // namespace detail

/// Least-squares fit of the total-power ARX model over every day of `history`
/// that has a full window (days K..D-1 are regression targets).
inline ArxModel fit_total_arx(const LoadHistory& history, std::size_t K, const FitOptions& opts = {}) {
    detail::check_order(K);
    history.validate();
    const std::size_t D = history.n_days();
    if (D < min_days_total(K))
        throw InvalidParameter("fit_total_arx: K=" + std::to_string(K) + " needs at least " +
                               std::to_string(min_days_total(K)) + " days, got " + std::to_string(D));
    const auto p = history.totals();
    const auto& t = history.daily_mean_temp;

    std::vector<std::string> names;
    for (std::size_t j = 0; j < K; ++j) names.push_back(detail::lag_name("p", j));
    if (opts.exogenous)
        for (std::size_t j = 0; j <= K; ++j) names.push_back(detail::exog_name(j));
    if (opts.intercept) names.push_back("intercept");

    const auto rows = static_cast<Eigen::Index>(D - K);
    Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(names.size()));
    Eigen::VectorXd y(rows);
    for (std::size_t target = K; target < D; ++target) {
        const auto r = static_cast<Eigen::Index>(target - K);
        Eigen::Index c = 0;
        for (std::size_t j = 0; j < K; ++j) X(r, c++) = p[target - 1 - j];
        if (opts.exogenous)
            for (std::size_t j = 0; j <= K; ++j) X(r, c++) = t[target - j];
        if (opts.intercept) X(r, c++) = 1.0;
        y(r) = p[target];
    }
    const Eigen::VectorXd beta = solve_least_squares(X, y, names, opts.rank);

    ArxModel m;
    m.order = K;
    m.lag.assign(K, 0.0);
    m.exog.assign(K + 1, 0.0);
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < K; ++j) m.lag[j] = beta(c++);
    if (opts.exogenous)
        for (std::size_t j = 0; j <= K; ++j) m.exog[j] = beta(c++);
    if (opts.intercept) m.intercept = beta(c++);
    return m;
}

/// One-step total forecast. `totals` holds the last K daily totals and
/// `temps` the K+1 daily mean temperatures ending at the forecast day, both
/// oldest first.
inline double predict_total(const ArxModel& m, std::span<const double> totals, std::span<const double> temps) {
    if (m.lag.size() != m.order || m.exog.size() != m.order + 1)
        throw ContractError("predict_total: model coefficient counts do not match its order");
    if (totals.size() != m.order || temps.size() != m.order + 1)
        throw ContractError("predict_total: K=" + std::to_string(m.order) + " needs " + std::to_string(m.order) +
                            " totals and " + std::to_string(m.order + 1) + " temperatures, got " +
                            std::to_string(totals.size()) + " and " + std::to_string(temps.size()));
    const std::size_t K = m.order;
    double v = m.intercept;
    for (std::size_t j = 0; j < K; ++j) v += m.lag[j] * totals[K - 1 - j];
    for (std::size_t j = 0; j <= K; ++j) v += m.exog[j] * temps[K - j];
    return v;
}

/// Least-squares fit of the shape model, one regression per hour sharing the
/// same design. For a lag block whose last-hour column is redundant (see
/// detail::drops_last_hour) the stored C_j has a zero last column and the
/// constant it carried is folded into the intercept.
inline VectorArxModel fit_shape_varx(const LoadHistory& history, std::size_t K, const FitOptions& opts = {}) {
    detail::check_order(K);
    history.validate();
    const std::size_t D = history.n_days();
    if (D < min_days_shape(K))
        throw InvalidParameter("fit_shape_varx: K=" + std::to_string(K) + " needs at least " +
                               std::to_string(min_days_shape(K)) + " days, got " + std::to_string(D));
    std::vector<Hours> u(D);
    for (std::size_t d = 0; d < D; ++d) u[d] = decompose_day(history.days[d]).shape.u;
    const auto& t = history.hourly_temp;

    std::vector<std::string> names;
    for (std::size_t j = 0; j < K; ++j) {
        const std::size_t width = detail::drops_last_hour(opts, j) ? kHours - 1 : kHours;
        for (std::size_t h = 0; h < width; ++h) names.push_back(detail::lag_name("u", j) + "[" + std::to_string(h) + "]");
    }
    if (opts.exogenous)
        for (std::size_t j = 0; j <= K; ++j)
            for (std::size_t h = 0; h < kHours; ++h) names.push_back(detail::exog_name(j) + "[" + std::to_string(h) + "]");
    if (opts.intercept) names.push_back("intercept");

    const auto rows = static_cast<Eigen::Index>(D - K);
    Eigen::MatrixXd X(rows, static_cast<Eigen::Index>(names.size()));
    Eigen::MatrixXd Y(rows, static_cast<Eigen::Index>(kHours));
    for (std::size_t target = K; target < D; ++target) {
        const auto r = static_cast<Eigen::Index>(target - K);
        Eigen::Index c = 0;
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t width = detail::drops_last_hour(opts, j) ? kHours - 1 : kHours;
            for (std::size_t h = 0; h < width; ++h) X(r, c++) = u[target - 1 - j][h];
        }
        if (opts.exogenous)
            for (std::size_t j = 0; j <= K; ++j)
                for (std::size_t h = 0; h < kHours; ++h) X(r, c++) = t[target - j][h];
        if (opts.intercept) X(r, c++) = 1.0;
        for (std::size_t h = 0; h < kHours; ++h) Y(r, static_cast<Eigen::Index>(h)) = u[target][h];
    }
    // Column h of B is the regression for output hour h; B^T rows map to C rows.
    const Eigen::MatrixXd B = solve_least_squares(X, Y, names, opts.rank);

    const auto H = static_cast<Eigen::Index>(kHours);
    VectorArxModel m;
    m.order = K;
    m.lag.assign(K, Eigen::MatrixXd::Zero(H, H));
    m.exog.assign(K + 1, Eigen::MatrixXd::Zero(H, H));
    Eigen::Index c = 0;
    for (std::size_t j = 0; j < K; ++j) {
        const Eigen::Index width = detail::drops_last_hour(opts, j) ? H - 1 : H;
        m.lag[j].leftCols(width) = B.middleRows(c, width).transpose();
        c += width;
    }
    if (opts.exogenous)
        for (std::size_t j = 0; j <= K; ++j) {
            m.exog[j] = B.middleRows(c, H).transpose();
            c += H;
        }
    if (opts.intercept) m.intercept = B.row(c++).transpose();
    return m;
}

/// Unconstrained shape prediction (may leave the simplex).
inline Eigen::VectorXd predict_shape_raw(const VectorArxModel& m, std::span<const Hours> shapes,
                                         std::span<const Hours> temps) {
    if (m.lag.size() != m.order || m.exog.size() != m.order + 1)
        throw ContractError("predict_shape: model block counts do not match its order");
    if (shapes.size() != m.order || temps.size() != m.order + 1)
        throw ContractError("predict_shape: K=" + std::to_string(m.order) + " needs " + std::to_string(m.order) +
                            " shapes and " + std::to_string(m.order + 1) + " temperature days");
    const std::size_t K = m.order;
    const auto H = static_cast<Eigen::Index>(kHours);
    Eigen::VectorXd v = m.intercept;
    for (std::size_t j = 0; j < K; ++j) v += m.lag[j] * Eigen::Map<const Eigen::VectorXd>(shapes[K - 1 - j].data(), H);
    for (std::size_t j = 0; j <= K; ++j) v += m.exog[j] * Eigen::Map<const Eigen::VectorXd>(temps[K - j].data(), H);
    return v;
}

/// Projects a raw shape onto the simplex by clamping negatives to zero and
/// renormalizing; an all-non-positive vector becomes the flat shape 1/24.
inline ShapeDay to_simplex(const Eigen::VectorXd& raw) {
    ShapeDay s;
    double sum = 0.0;
    for (std::size_t h = 0; h < kHours; ++h) {
        const double v = raw(static_cast<Eigen::Index>(h));
        s.u[h] = v > 0.0 && std::isfinite(v) ? v : 0.0;
        sum += s.u[h];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        s.u.fill(1.0 / static_cast<double>(kHours));
        return s;
    }
    for (double& v : s.u) v /= sum;
    return s;
}

inline ShapeDay predict_shape(const VectorArxModel& m, std::span<const Hours> shapes, std::span<const Hours> temps) {
    return to_simplex(predict_shape_raw(m, shapes, temps));
}

struct DayForecast {
    double total = 0.0;  // exactly predict_total's output
    ShapeDay shape;
    DailyProfile profile;
};

/// Forecast for day `target` of `history`, using consumption days
/// [target-K, target) and temperatures [target-K, target].
inline DayForecast forecast_day_at(const ArxModel& total, const VectorArxModel& shape, const LoadHistory& history,
                                   std::size_t target) {
    const std::size_t K = std::max(total.order, shape.order);
    if (target < K || target > history.n_days())
        throw ContractError("forecast_day: target day " + std::to_string(target) + " lacks a full K-day window");
    if (history.daily_mean_temp.size() <= target)
        throw ContractError("forecast_day: no temperature for forecast day " + std::to_string(target));

    std::vector<double> totals, temps;
    for (std::size_t d = target - total.order; d < target; ++d)
        totals.push_back(std::accumulate(history.days[d].hours.begin(), history.days[d].hours.end(), 0.0));
    for (std::size_t d = target - total.order; d <= target; ++d) temps.push_back(history.daily_mean_temp[d]);

    std::vector<Hours> shapes, htemps;
    for (std::size_t d = target - shape.order; d < target; ++d) shapes.push_back(decompose_day(history.days[d]).shape.u);
    for (std::size_t d = target - shape.order; d <= target; ++d) htemps.push_back(history.hourly_temp[d]);

    DayForecast f;
    f.total = predict_total(total, totals, temps);
    f.shape = predict_shape(shape, shapes, htemps);
    f.profile.day = target < history.n_days() ? history.days[target].day
                                               : (history.days.empty() ? 0 : history.days.back().day + 1);
    for (std::size_t h = 0; h < kHours; ++h) f.profile.hours[h] = f.total * f.shape.u[h];
    return f;
}

/// Next-day forecast; requires the temperature series to extend one day past
/// the last consumption day.
inline DayForecast forecast_day(const ArxModel& total, const VectorArxModel& shape, const LoadHistory& history) {
    if (!history.has_next_day_temperature())
        throw ContractError("forecast_day: history lacks the forecast day's temperature");
    return forecast_day_at(total, shape, history, history.n_days());
}

struct OrderScore {
    std::size_t order = 0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    bool skipped = false;
    std::string reason;  // why a candidate was skipped
};

struct OrderSelection {
    std::size_t order = 0;
    std::vector<OrderScore> scores;
};

/// Rolling-origin cross-validation of the total model order. The last half of
/// the history is cut into `folds` consecutive blocks; fold f refits on every
/// day before its block and scores one-step forecasts inside it. The pooled
/// validation MSE picks K; exact ties go to the smaller K. Candidates whose
/// first fold has too little training data are skipped and reported.
inline OrderSelection cross_validate_order(const LoadHistory& history, std::vector<std::size_t> candidates,
                                           std::size_t folds = 5, const FitOptions& opts = {}) {
    if (candidates.empty()) throw InvalidParameter("cross_validate_order: no candidate orders");
    if (folds == 0) throw InvalidParameter("cross_validate_order: folds must be >= 1");
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    history.validate();

    const std::size_t D = history.n_days();
    const std::size_t block = D / (2 * folds);
    const auto p = history.totals();
    const auto& t = history.daily_mean_temp;

    OrderSelection sel;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t K : candidates) {
        OrderScore score;
        score.order = K;
        const std::size_t first_train = D - folds * block;
        if (K == 0 || block == 0 || first_train < min_days_total(K)) {
            score.skipped = true;
            score.reason = "K=" + std::to_string(K) + " needs " + std::to_string(min_days_total(K)) +
                           " training days; first fold has " + std::to_string(first_train);
            sel.scores.push_back(score);
            continue;
        }
        double sse = 0.0;
        std::size_t count = 0;
        try {
            for (std::size_t f = 0; f < folds; ++f) {
                const std::size_t train_end = first_train + f * block;
                const auto model = fit_total_arx(history.head(train_end), K, opts);
                for (std::size_t target = train_end; target < train_end + block; ++target) {
                    const std::span<const double> win(p.data() + (target - K), K);
                    const std::span<const double> tw(t.data() + (target - K), K + 1);
                    const double e = p[target] - predict_total(model, win, tw);
                    sse += e * e;
                    ++count;
                }
            }
        } catch (const SingularFit& e) {
            score.skipped = true;
            score.reason = e.what();
            sel.scores.push_back(score);
            continue;
        }
        score.mse = sse / static_cast<double>(count);
        if (score.mse < best) best = score.mse, sel.order = K;
        sel.scores.push_back(score);
    }
    if (sel.order == 0) throw InvalidParameter("cross_validate_order: every candidate order was skipped");
    return sel;
}

struct ForecasterConfig {
    std::size_t total_order = 1;
    // When non-empty, the total order is chosen by cross-validation over
    // these candidates on the training window instead of total_order.
    std::vector<std::size_t> order_candidates;
    std::size_t cv_folds = 5;
    std::size_t shape_order = 1;
    std::size_t train_days = 365;
    FitOptions fit;
};

/// Out-of-sample day-ahead evaluation: models are fitted on the first
/// train_days days and every later day is forecast from its actual history.
struct Backtest {
    std::size_t total_order = 0;
    std::size_t shape_order = 0;
    std::vector<double> actual_hourly, predicted_hourly;
    std::vector<double> actual_daily, predicted_daily;

    std::vector<double> hourly_residuals() const {
        std::vector<double> e(actual_hourly.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = actual_hourly[i] - predicted_hourly[i];
        return e;
    }
    std::vector<double> daily_residuals() const {
        std::vector<double> e(actual_daily.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = actual_daily[i] - predicted_daily[i];
        return e;
    }
};

inline Backtest backtest(const LoadHistory& history, const ForecasterConfig& cfg) {
    history.validate();
    if (cfg.train_days >= history.n_days())
        throw InvalidParameter("backtest: history of " + std::to_string(history.n_days()) +
                               " days leaves nothing after " + std::to_string(cfg.train_days) + " training days");
    const auto train = history.head(cfg.train_days);
    Backtest bt;
    bt.total_order = cfg.order_candidates.empty()
                         ? cfg.total_order
                         : cross_validate_order(train, cfg.order_candidates, cfg.cv_folds, cfg.fit).order;
    bt.shape_order = cfg.shape_order;
    const auto total = fit_total_arx(train, bt.total_order, cfg.fit);
    const auto shape = fit_shape_varx(train, bt.shape_order, cfg.fit);
    for (std::size_t d = cfg.train_days; d < history.n_days(); ++d) {
        const auto f = forecast_day_at(total, shape, history, d);
        double actual_total = 0.0;
        for (std::size_t h = 0; h < kHours; ++h) {
            bt.actual_hourly.push_back(history.days[d].hours[h]);
            bt.predicted_hourly.push_back(f.profile.hours[h]);
            actual_total += history.days[d].hours[h];
        }
        bt.actual_daily.push_back(actual_total);
        bt.predicted_daily.push_back(f.total);
    }
    return bt;
}

}  // namespace feederstats::forecast
