#pragma once

// Seeded synthetic customer population standing in for smart-meter data.
//
// Customer i with size s_i (mean hourly load, kWh, drawn from a generalized
// Pareto law) consumes at day d, hour h
//
//   x = max(0, s_i * b_h * (1 + c * (T_d - T_mean)) + s_i * b_h * (v * e_idh + w * g_dh))
//
// where b is the base shape normalized to mean one, T_d the daily mean
// temperature, e an idiosyncratic and g a population-wide unit-variance noise
// sequence (Gaussian or centered exponential, optionally AR(1) across
// consecutive hours). Every customer is a pure function of (config, i), so a
// population can be generated lazily, in any order, and reproduced exactly.

#include "feederstats/error.hpp"
#include "feederstats/forecaster.hpp"
#include "feederstats/rng.hpp"
#include "feederstats/tailmodel.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace feederstats::synth {

using forecast::Hours;
using forecast::kHours;
using forecast::LoadHistory;

struct TemperatureModel {
    double mean = 16.0;                // deg C
    double seasonal_amplitude = 8.0;   // deg C
    double diurnal_amplitude = 5.0;    // deg C
    double daily_noise = 2.0;          // sd of day-to-day weather, deg C
    double hourly_noise = 0.5;         // sd of hourly deviations, deg C
};

enum class NoiseKind { Gaussian, Exponential };

struct NoiseModel {
    NoiseKind kind = NoiseKind::Gaussian;
    double scale = 0.3;          // idiosyncratic sd relative to the expected base load
    double common_scale = 0.05;  // shared sd relative to the expected base load
    double ar_phi = 0.0;         // hour-to-hour AR(1) coefficient of both noise sequences
};

inline Hours default_base_shape() {
    return {0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.80, 1.10, 1.15, 1.00, 0.90, 0.85,
            0.85, 0.85, 0.90, 1.00, 1.20, 1.50, 1.75, 1.80, 1.60, 1.30, 0.95, 0.70};
}

struct SynthConfig {
    std::size_t n_customers = 100;
    std::size_t n_days = 730;
    Hours base_shape = default_base_shape();
    TemperatureModel temperature;
    double temp_response = 0.02;  // relative load change per deg C of daily mean
    NoiseModel noise;
    tail::GpdParams size{0.1, 0.3, 0.7};  // customer mean hourly load, kWh
    std::uint64_t seed = 0;

    void validate() const {
        if (n_customers < 1) throw InvalidParameter("synth: n_customers must be >= 1");
        if (n_days < 30) throw InvalidParameter("synth: n_days must be >= 30");
        double sum = 0.0;
        for (double b : base_shape) {
            if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidParameter("synth: base shape weights must be >= 0");
            sum += b;
        }
        if (!(sum > 0.0)) throw InvalidParameter("synth: base shape is all zero");
        tail::validate(size);
        if (size.theta < 0.0) throw InvalidParameter("synth: customer sizes must be non-negative (theta >= 0)");
        if (size.kappa >= 1.0) throw InvalidParameter("synth: size distribution needs a finite mean (kappa < 1)");
        if (!(noise.scale >= 0.0) || !(noise.common_scale >= 0.0))
            throw InvalidParameter("synth: noise scales must be >= 0");
        if (!(noise.ar_phi > -1.0 && noise.ar_phi < 1.0)) throw InvalidParameter("synth: |ar_phi| must be < 1");
    }
};

namespace detail {

enum : std::uint64_t { kTagWeather = 1, kTagCommon = 2, kTagSize = 3, kTagNoise = 4 };

// Unit-variance noise sequence of length n, AR(1) with coefficient phi.
inline std::vector<double> noise_sequence(std::uint64_t seed, std::size_t n, NoiseKind kind, double phi) {
    Rng rng(seed);
    std::vector<double> out(n);
    const double innovation = std::sqrt(1.0 - phi * phi);
    double state = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = kind == NoiseKind::Gaussian ? rng.normal() : rng.exponential() - 1.0;
        state = i == 0 ? xi : phi * state + innovation * xi;
        out[i] = state;
    }
    return out;
}

}  // namespace detail

/// Lazily evaluated population; customer(i) regenerates customer i.
class SyntheticPopulation {
public:
    explicit SyntheticPopulation(SynthConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const double mean_b =
            std::accumulate(cfg_.base_shape.begin(), cfg_.base_shape.end(), 0.0) / static_cast<double>(kHours);
        for (std::size_t h = 0; h < kHours; ++h) base_[h] = cfg_.base_shape[h] / mean_b;

        const auto& tm = cfg_.temperature;
        Rng weather(derive_seed(cfg_.seed, {detail::kTagWeather}));
        daily_temp_.resize(cfg_.n_days);
        hourly_temp_.resize(cfg_.n_days);
        for (std::size_t d = 0; d < cfg_.n_days; ++d) {
            const double season = tm.mean + tm.seasonal_amplitude *
                                                 std::sin(2.0 * std::numbers::pi * static_cast<double>(d) / 365.0) +
                                  tm.daily_noise * weather.normal();
            double sum = 0.0;
            for (std::size_t h = 0; h < kHours; ++h) {
                const double diurnal =
                    tm.diurnal_amplitude * std::sin(2.0 * std::numbers::pi * (static_cast<double>(h) - 9.0) / 24.0);
                hourly_temp_[d][h] = season + diurnal + tm.hourly_noise * weather.normal();
                sum += hourly_temp_[d][h];
            }
            daily_temp_[d] = sum / static_cast<double>(kHours);
        }
        common_ = detail::noise_sequence(derive_seed(cfg_.seed, {detail::kTagCommon}), cfg_.n_days * kHours,
                                         cfg_.noise.kind, cfg_.noise.ar_phi);
    }

    const SynthConfig& config() const noexcept { return cfg_; }
    std::size_t size() const noexcept { return cfg_.n_customers; }

    /// Mean hourly load scale of customer i (kWh).
    double customer_size(std::size_t i) const {
        Rng rng(derive_seed(cfg_.seed, {detail::kTagSize, i}));
        return tail::gpd_quantile(rng.uniform(), cfg_.size);
    }

    /// Expected customer size, theta + sigma / (1 - kappa).
    double expected_size() const { return cfg_.size.theta + cfg_.size.sigma / (1.0 - cfg_.size.kappa); }

    LoadHistory customer(std::size_t i) const {
        if (i >= size()) throw NotFound("synthetic customer " + std::to_string(i) + " out of range");
        const double s = customer_size(i);
        const auto noise = detail::noise_sequence(derive_seed(cfg_.seed, {detail::kTagNoise, i}),
                                                  cfg_.n_days * kHours, cfg_.noise.kind, cfg_.noise.ar_phi);
        LoadHistory h;
        h.days.resize(cfg_.n_days);
        h.daily_mean_temp = daily_temp_;
        h.hourly_temp = hourly_temp_;
        const double t_ref = cfg_.temperature.mean;
        for (std::size_t d = 0; d < cfg_.n_days; ++d) {
            h.days[d].day = static_cast<long>(d);
            const double response = 1.0 + cfg_.temp_response * (daily_temp_[d] - t_ref);
            for (std::size_t hr = 0; hr < kHours; ++hr) {
                const std::size_t k = d * kHours + hr;
                const double base = s * base_[hr];
                const double v = base * response + base * (cfg_.noise.scale * noise[k] +
                                                           cfg_.noise.common_scale * common_[k]);
                h.days[d].hours[hr] = v > 0.0 ? v : 0.0;
            }
        }
        return h;
    }

private:
    SynthConfig cfg_;
    Hours base_{};
    std::vector<double> daily_temp_;
    std::vector<Hours> hourly_temp_;
    std::vector<double> common_;
};

/// Materializes every customer of the configured population.
inline std::vector<LoadHistory> synth_population(const SynthConfig& cfg) {
    SyntheticPopulation pop(cfg);
    std::vector<LoadHistory> out;
    out.reserve(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) out.push_back(pop.customer(i));
    return out;
}

}  // namespace feederstats::synth
