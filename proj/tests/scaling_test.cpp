#include "feederstats/scaling.hpp"
#include "feederstats/synth.hpp"
#include "support/scaling_points.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace feederstats::scaling;

namespace {

const ScalingLaw kCaption{3562.0, 41.9, 1.0, 0.0};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Cv, PerfectForecastIsZero) {
    const std::vector<double> x{1.0, 2.0, 3.0};
    EXPECT_EQ(cv(x, x), 0.0);
}

TEST(Cv, HandExample) {
    const std::vector<double> a{1.0, 3.0}, p{2.0, 2.0};
    EXPECT_DOUBLE_EQ(cv(a, p), 50.0);
}

TEST(Cv, ScaleInvariant) {
    const std::vector<double> a{1.0, 4.0, 2.5, 7.0}, p{1.5, 3.0, 2.0, 8.0};
    for (double c : {0.001, 3.0, 1e6}) {
        std::vector<double> ca, cp;
        for (double v : a) ca.push_back(c * v);
        for (double v : p) cp.push_back(c * v);
        EXPECT_NEAR(cv(ca, cp), cv(a, p), 1e-12 * cv(a, p));
    }
}

TEST(Cv, Errors) {
    const std::vector<double> z{0.0, 0.0}, one{1.0};
    EXPECT_THROW(cv(z, z), feederstats::DomainError);
    EXPECT_THROW(cv(z, one), feederstats::ContractError);
}

TEST(ScalingLaw, CaptionDerivedValues) {
    EXPECT_NEAR(critical_load(kCaption), 85.0, 0.02);
    EXPECT_NEAR(irreducible_error(kCaption), 6.473, 5e-4);
    EXPECT_EQ(critical_load({0.0, 41.9, 1.0, 0.0}), 0.0);
    EXPECT_THROW(critical_load({3562.0, 0.0, 1.0, 0.0}), feederstats::DomainError);
}

TEST(ScalingLaw, EvaluateAtCriticalLoad) {
    EXPECT_NEAR(eval_scaling(kCaption, 85.0), 9.1546, 1e-4);
    // Independent evaluation of the formula.
    const double W = 85.0;
    EXPECT_DOUBLE_EQ(eval_scaling(kCaption, W), std::sqrt(3562.0 / W + 41.9));
    for (const ScalingLaw& law : {kCaption, ScalingLaw{10.0, 2.0, 1.0, 0.0}, ScalingLaw{5.0, 3.0, 0.5, 0.0}}) {
        const double w = eval_scaling(law, critical_load(law));
        EXPECT_NEAR(w * w, 2.0 * law.beta1, 1e-12 * law.beta1);
    }
}

TEST(ScalingLaw, LimitAndMonotonicity) {
    EXPECT_NEAR(eval_scaling(kCaption, 1e15), std::sqrt(41.9), 1e-6);
    double prev = eval_scaling(kCaption, 0.01);
    for (double W = 0.02; W < 1e6; W *= 1.3) {
        const double v = eval_scaling(kCaption, W);
        EXPECT_LE(v, prev);
        prev = v;
    }
    EXPECT_THROW(eval_scaling(kCaption, 0.0), feederstats::DomainError);
}

TEST(FitScaling, ExactPointsRecovered) {
    const auto pts = planted::law_points(kCaption, 1, 0.0, 0);
    const auto law = fit_scaling_law(pts);
    EXPECT_NEAR(law.beta0, 3562.0, 1e-9 * 3562.0);
    EXPECT_NEAR(law.beta1, 41.9, 1e-9 * 41.9);
    EXPECT_EQ(law.p, 1.0);
    EXPECT_LT(law.sse, 1e-18);
}

TEST(FitScaling, NonlinearAgreesWithLinearized) {
    const auto pts = planted::law_points(kCaption, 1, 0.0, 0);
    const auto lin = fit_scaling_law(pts, 1.0, FitMethod::Linearized);
    const auto nl = fit_scaling_law(pts, 1.0, FitMethod::Nonlinear);
    EXPECT_NEAR(nl.beta0, lin.beta0, 1e-6 * lin.beta0);
    EXPECT_NEAR(nl.beta1, lin.beta1, 1e-6 * lin.beta1);
}

TEST(FitScaling, GeneralExponent) {
    const ScalingLaw truth{500.0, 20.0, 0.7, 0.0};
    const auto law = fit_scaling_law(planted::law_points(truth, 1, 0.0, 0), 0.7);
    EXPECT_NEAR(law.beta0, 500.0, 1e-6 * 500.0);
    EXPECT_NEAR(law.beta1, 20.0, 1e-6 * 20.0);
}

TEST(FitScaling, FlatDataProjectsOntoBoundary) {
    std::vector<AggregationPoint> pts;
    for (double W : {1.0, 10.0, 100.0, 1000.0}) pts.push_back({W, 6.47, 1, 0});
    for (FitMethod m : {FitMethod::Linearized, FitMethod::Nonlinear}) {
        const auto law = fit_scaling_law(pts, 1.0, m);
        EXPECT_NEAR(law.beta0, 0.0, 1e-9);
        EXPECT_NEAR(law.beta1, 6.47 * 6.47, 1e-9);
    }
    EXPECT_NEAR(6.47 * 6.47, 41.86, 0.01);
}

TEST(FitScaling, NonNegativeOnInvertedData) {
    std::vector<AggregationPoint> pts;
    for (double W : {1.0, 10.0, 100.0, 1000.0}) pts.push_back({W, 1.0 + std::log10(W), 1, 0});
    for (FitMethod m : {FitMethod::Linearized, FitMethod::Nonlinear}) {
        const auto law = fit_scaling_law(pts, 1.0, m);
        EXPECT_GE(law.beta0, 0.0);
        EXPECT_GE(law.beta1, 0.0);
    }
    // cv -> 0 at large W: the through-origin boundary.
    std::vector<AggregationPoint> decay;
    for (double W : {1.0, 10.0, 100.0, 1000.0}) decay.push_back({W, std::sqrt(50.0 / W) * (W > 500 ? 0.5 : 1.0), 1, 0});
    const auto law = fit_scaling_law(decay);
    EXPECT_GE(law.beta0, 0.0);
    EXPECT_GE(law.beta1, 0.0);
}

TEST(FitScaling, Idempotent) {
    const auto noisy = planted::law_points(kCaption, 5, 0.05, 3);
    const auto first = fit_scaling_law(noisy);
    const auto again = fit_scaling_law(planted::law_points(first, 1, 0.0, 0));
    EXPECT_NEAR(again.beta0, first.beta0, 1e-9 * first.beta0);
    EXPECT_NEAR(again.beta1, first.beta1, 1e-9 * first.beta1);
}

TEST(FitScaling, NoisyMedianRecovery) {
    std::vector<double> b0, b1;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto law = fit_scaling_law(planted::law_points(kCaption, 20, 0.02, seed));
        b0.push_back(law.beta0);
        b1.push_back(law.beta1);
    }
    EXPECT_NEAR(median(b0) / 3562.0, 1.0, 0.10);
    EXPECT_NEAR(median(b1) / 41.9, 1.0, 0.05);
}

TEST(FitScaling, SseReportedOnCvScale) {
    const auto pts = planted::law_points(kCaption, 3, 0.05, 9);
    for (FitMethod m : {FitMethod::Linearized, FitMethod::Nonlinear}) {
        const auto law = fit_scaling_law(pts, 1.0, m);
        EXPECT_NEAR(law.sse, scaling_sse(law, pts), 1e-12 * law.sse);
    }
    // The nonlinear fit minimizes exactly this objective.
    EXPECT_LE(fit_scaling_law(pts, 1.0, FitMethod::Nonlinear).sse,
              fit_scaling_law(pts, 1.0, FitMethod::Linearized).sse * (1 + 1e-12));
}

TEST(FitScaling, Preconditions) {
    std::vector<AggregationPoint> same{{5.0, 1.0, 1, 0}, {5.0, 2.0, 1, 1}, {5.0, 3.0, 1, 2}};
    EXPECT_THROW(fit_scaling_law(same), feederstats::DegenerateData);
    EXPECT_THROW(fit_scaling_law(std::vector<AggregationPoint>(same.begin(), same.begin() + 2)),
                 feederstats::InvalidParameter);
    std::vector<AggregationPoint> bad{{0.0, 1.0, 1, 0}, {5.0, 2.0, 1, 1}, {6.0, 3.0, 1, 2}};
    EXPECT_THROW(fit_scaling_law(bad), feederstats::DomainError);
    EXPECT_THROW(fit_scaling_law(planted::law_points(kCaption, 1, 0.0, 0), 0.0), feederstats::InvalidParameter);
}

namespace {

feederstats::synth::SynthConfig small_population(std::size_t customers) {
    feederstats::synth::SynthConfig cfg;
    cfg.n_customers = customers;
    cfg.n_days = 400;
    cfg.seed = 77;
    return cfg;
}

feederstats::forecast::ForecasterConfig short_forecaster() {
    feederstats::forecast::ForecasterConfig f;
    f.train_days = 300;
    return f;
}

}  // namespace

TEST(AggCurve, IdenticalCustomersGiveIdenticalReplicates) {
    const feederstats::synth::SyntheticPopulation pop(small_population(1));
    std::vector<feederstats::forecast::LoadHistory> clones(6, pop.customer(0));
    const feederstats::aggregate::VectorPopulation same(clones);
    const auto curve = build_agg_curve(same, {1}, 6, short_forecaster(), 5);
    ASSERT_EQ(curve.points.size(), 6u);
    for (const auto& p : curve.points) EXPECT_EQ(p.cv, curve.points[0].cv);
}

TEST(AggCurve, DeterministicAndDecreasing) {
    const feederstats::synth::SyntheticPopulation pop(small_population(200));
    const std::vector<std::size_t> levels{1, 4, 16, 64};
    const auto a = build_agg_curve(pop, levels, 5, short_forecaster(), 11);
    const auto b = build_agg_curve(pop, levels, 5, short_forecaster(), 11);
    ASSERT_EQ(a.points.size(), 20u);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        EXPECT_EQ(a.points[i].cv, b.points[i].cv);
        EXPECT_EQ(a.points[i].W, b.points[i].W);
        EXPECT_GT(a.points[i].W, 0.0);
    }
    std::vector<double> med;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        std::vector<double> v;
        for (const auto& p : a.points)
            if (p.n_customers == levels[l]) v.push_back(p.cv);
        med.push_back(median(v));
    }
    for (std::size_t l = 1; l < med.size(); ++l) EXPECT_LT(med[l], med[l - 1]);
}

TEST(AggCurve, LevelsBeyondPopulationWarn) {
    const feederstats::synth::SyntheticPopulation pop(small_population(10));
    const auto curve = build_agg_curve(pop, {2, 50}, 2, short_forecaster(), 1);
    EXPECT_EQ(curve.points.size(), 2u);
    ASSERT_EQ(curve.warnings.size(), 1u);
    EXPECT_NE(curve.warnings[0].message.find("50"), std::string::npos);
}
