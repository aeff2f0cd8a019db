#pragma once

// Random customer aggregates and their out-of-sample day-ahead evaluation,
// shared by the aggregation-error curve and the residual normality sweep.

#include "feederstats/error.hpp"
#include "feederstats/forecaster.hpp"
#include "feederstats/parallel.hpp"
#include "feederstats/rng.hpp"

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace feederstats::aggregate {

using forecast::LoadHistory;

/// Anything that can hand out customer histories by index.
template <class P>
concept Population = requires(const P& p, std::size_t i) {
    { p.size() } -> std::convertible_to<std::size_t>;
    { p.customer(i) } -> std::convertible_to<LoadHistory>;
};

/// Adapter for an in-memory customer set.
class VectorPopulation {
public:
    explicit VectorPopulation(const std::vector<LoadHistory>& customers) : customers_(&customers) {}
    std::size_t size() const noexcept { return customers_->size(); }
    const LoadHistory& customer(std::size_t i) const { return customers_->at(i); }

private:
    const std::vector<LoadHistory>* customers_;
};

/// Customer indices (sorted) for replicate r of an aggregate of `level`
/// customers. Subsets are drawn without replacement. When the population can
/// supply `replicates` disjoint subsets they are consecutive slices of one
/// permutation per level; otherwise each replicate is an independent draw.
inline std::vector<std::size_t> draw_subset(std::size_t population, std::size_t level, std::size_t replicates,
                                            std::size_t r, std::uint64_t seed) {
    if (level == 0 || level > population) throw InvalidParameter("draw_subset: level outside [1, population]");
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<std::size_t> out;
    if (level * replicates <= population) {
        Rng rng(derive_seed(seed, {level, 0x5ec7}));
        for (std::size_t i = population; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        out.assign(idx.begin() + static_cast<std::ptrdiff_t>(r * level),
                   idx.begin() + static_cast<std::ptrdiff_t>((r + 1) * level));
    } else {
        Rng rng(derive_seed(seed, {level, r, 0xd1ce}));
        for (std::size_t i = 0; i < level; ++i) std::swap(idx[i], idx[i + rng.below(population - i)]);
        out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(level));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Sum of the members' consumption; temperatures are taken from the first
/// member (customers of one population share a climate).
template <Population P>
LoadHistory aggregate_customers(const P& pop, const std::vector<std::size_t>& members) {
    if (members.empty()) throw InvalidParameter("aggregate_customers: empty member list");
    LoadHistory agg = pop.customer(members.front());
    for (std::size_t k = 1; k < members.size(); ++k) {
        const LoadHistory& c = pop.customer(members[k]);
        if (c.days.size() != agg.days.size()) throw ContractError("aggregate_customers: customers differ in length");
        for (std::size_t d = 0; d < agg.days.size(); ++d)
            for (std::size_t h = 0; h < forecast::kHours; ++h) agg.days[d].hours[h] += c.days[d].hours[h];
    }
    return agg;
}

struct Warning {
    std::string message;
};

struct CellResult {
    std::size_t level_index = 0;
    std::size_t n_customers = 0;
    std::size_t replicate = 0;
    forecast::Backtest backtest;
};

struct Evaluation {
    std::vector<CellResult> cells;  // ordered by (level, replicate)
    std::vector<Warning> warnings;
};

/// Runs the day-ahead backtest on `replicates` random aggregates per level.
/// Cells are independent (own RNG stream), so the result does not depend on
/// evaluation order. Levels above the population size are skipped with a
/// warning.
template <Population P>
Evaluation evaluate_levels(const P& pop, const std::vector<std::size_t>& levels, std::size_t replicates,
                           const forecast::ForecasterConfig& cfg, std::uint64_t seed) {
    if (replicates < 1) throw InvalidParameter("evaluate_levels: replicates must be >= 1");
    Evaluation ev;
    std::vector<CellResult> cells;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        if (levels[li] == 0 || levels[li] > pop.size()) {
            ev.warnings.push_back({"level " + std::to_string(levels[li]) + " skipped: population has " +
                                   std::to_string(pop.size()) + " customers"});
            continue;
        }
        for (std::size_t r = 0; r < replicates; ++r) cells.push_back({li, levels[li], r, {}});
    }
    detail::parallel_for(cells.size(), [&](std::size_t i) {
        auto& c = cells[i];
        const auto members = draw_subset(pop.size(), c.n_customers, replicates, c.replicate, seed);
        c.backtest = forecast::backtest(aggregate_customers(pop, members), cfg);
    });
    ev.cells = std::move(cells);
    return ev;
}

}  // namespace feederstats::aggregate
