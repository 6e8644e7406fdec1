#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "zdc/metrics.hpp"
#include "zdc/planner.hpp"
#include "zdc/rotation.hpp"

using namespace zdc;

namespace {

const ModelDims kDims{2, 2, 4, 16, 16};

struct Setup {
    ToyModel base;
    FoldedModel folded;
    std::vector<Sequence> eval;
};

const Setup& setup() {
    static const Setup s = [] {
        ModelInit init;
        init.seed = 4;
        Setup out{init_model(kDims, init), {}, {}};
        CorpusSpec cs;
        cs.vocab = kDims.vocab;
        cs.topics = 2;
        cs.sequences_per_topic = 8;
        cs.seed = 5;
        out.folded = fold_parameters(out.base, compute_rotations(out.base, generate_corpus(cs)).rotations);
        out.eval = sample_sequences(out.base, 3, 12, 6);
        return out;
    }();
    return s;
}

CompressionPlan plan_of(std::vector<double> g, double a, double b, double c, double d) {
    CompressionPlan p;
    p.group_map = CompressionPlan::identity_groups(g.size());
    p.g = std::move(g);
    p.p_qk_i = a;
    p.p_qk_u = b;
    p.p_vl_i = c;
    p.p_vl_u = d;
    return p;
}

}  // namespace

TEST(Objective, SingleLayerArithmetic) {
    EXPECT_NEAR(objective(plan_of({0.5}, 0.2, 0.6, 0.2, 0.6)), 0.8, 1e-15);
    EXPECT_EQ(objective(CompressionPlan::zero(3)), 0.0);
}

TEST(Objective, TermByTermRecomputation) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 0.9);
    for (int trial = 0; trial < 20; ++trial) {
        const double g0 = u(rng), g1 = u(rng) + 0.05, a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        const CompressionPlan p = plan_of({g0, g1}, a, b, c, d);
        const double expect = a * g0 + c * g0 + b * (1 - g0) + d * (1 - g0) + a * g1 + c * g1 + b * (1 - g1) +
                              d * (1 - g1);
        EXPECT_NEAR(objective(p), expect, 1e-12);
    }
}

TEST(Objective, MonotoneInEachRatio) {
    const CompressionPlan p = plan_of({0.3, 0.6}, 0.2, 0.4, 0.1, 0.3);
    const double base = objective(p);
    for (double CompressionPlan::*field :
         {&CompressionPlan::p_qk_i, &CompressionPlan::p_qk_u, &CompressionPlan::p_vl_i, &CompressionPlan::p_vl_u}) {
        CompressionPlan q = p;
        q.*field += 0.1;
        EXPECT_GT(objective(q), base);
    }
}

TEST(Constraints, ProseAndPrintedDirections) {
    const CompressionPlan prose = plan_of({0.3, 0.5}, 0.3, 0.5, 0.2, 0.4);
    EXPECT_EQ(plan_violation(prose), "");
    ConstraintPolicy printed;
    printed.direction = ConstraintDirection::AsPrinted;
    EXPECT_NE(plan_violation(prose, printed), "");
    EXPECT_EQ(plan_violation(plan_of({0.3, 0.5}, 0.4, 0.2, 0.5, 0.3), printed), "");
    EXPECT_NE(plan_violation(plan_of({0.5, 0.3}, 0, 0, 0, 0)), "");
    ConstraintPolicy strict;
    strict.strict_g = true;
    EXPECT_NE(plan_violation(plan_of({0.5, 0.5}, 0, 0, 0, 0), strict), "");
}

TEST(Constraints, GroupMapMustPointBackToRepresentatives) {
    CompressionPlan p = CompressionPlan::zero(3);
    p.group_map = {0, 2, 2};
    EXPECT_NE(plan_violation(p), "");
    p.group_map = {0, 0, 1};
    EXPECT_NE(plan_violation(p), "");
    p.group_map = {0, 0, 0};
    EXPECT_EQ(plan_violation(p), "");
}

TEST(Project, RestoresOrderingByLoweringRatios) {
    const CompressionPlan p = project_plan(0.6, 0.4, 0.5, 0.3, 0.7, 0.2, 3, {});
    EXPECT_EQ(plan_violation(p), "");
    EXPECT_LE(p.p_qk_u, 0.3 + 1e-15);
    EXPECT_LE(p.g.front(), p.g.back());
    ConstraintPolicy printed;
    printed.direction = ConstraintDirection::AsPrinted;
    EXPECT_EQ(plan_violation(project_plan(0.2, 0.4, 0.1, 0.5, 0.3, 0.2, 2, printed), printed), "");
}

TEST(MeasureQd, ZeroPlanIsZero) {
    const auto& s = setup();
    EXPECT_NEAR(measure_qd(CompressionPlan::zero(kDims.n_layers), s.base, s.folded, s.eval), 0.0, 1e-9);
    EXPECT_NEAR(measure_qd(CompressionPlan::zero(kDims.n_layers), s.base, s.folded, s.eval, QdTargets::Hard), 0.0,
                1e-9);
}

TEST(MeasureQd, DominatedPlanDegradesLess) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    double prev = 0.0;
    for (double p : {0.0, 0.25, 0.5, 0.75}) {
        const double q = ev.q_d(CompressionPlan::uniform(kDims.n_layers, p));
        EXPECT_GE(q, prev - 1e-9) << "p=" << p;
        prev = q;
    }
    EXPECT_GT(prev, 0.0);
}

TEST(MeasureQd, CachesRepeatedPlans) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    const auto p = CompressionPlan::uniform(kDims.n_layers, 0.5);
    const double a = ev.q_d(p);
    EXPECT_EQ(ev.q_d(p), a);
    EXPECT_EQ(ev.measurements(), 1u);
    EXPECT_THROW(QdEvaluator(s.base, s.folded, {}), std::invalid_argument);
    EXPECT_THROW(parse_qd_targets("fuzzy"), std::invalid_argument);
}

TEST(Oracle, InfiniteTargetPicksMaxCorner) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    const auto r = enumerate_oracle(std::numeric_limits<double>::infinity(), ev, kDims.n_layers, GridSpec::tiny());
    ASSERT_TRUE(r.feasible);
    EXPECT_NEAR(r.best.objective, 1.6 * kDims.n_layers, 1e-12);
    EXPECT_EQ(r.best.plan.p_qk_i, 0.8);
    EXPECT_EQ(r.best.plan.p_vl_u, 0.8);
    EXPECT_EQ(r.evaluated, 1u);
}

TEST(Oracle, ZeroTargetPicksZeroPlan) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    const auto r = enumerate_oracle(0.0, ev, kDims.n_layers, GridSpec::tiny());
    ASSERT_TRUE(r.feasible);
    EXPECT_EQ(r.best.objective, 0.0);
    EXPECT_EQ(r.best.plan.p_qk_u, 0.0);
}

TEST(Oracle, TinyGridMatchesNestedLoops) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    const GridSpec grid = GridSpec::tiny();
    const double target = 0.05;
    const auto r = enumerate_oracle(target, ev, kDims.n_layers, grid);

    bool found = false;
    CompressionPlan best;
    double best_obj = -1.0;
    for (double gf : grid.g_values)
        for (double gl : grid.g_values)
            for (double a : grid.p_values)
                for (double b : grid.p_values)
                    for (double c : grid.p_values)
                        for (double d : grid.p_values) {
                            if (gl < gf || b < a || d < c || a < c || b < d) continue;
                            const CompressionPlan p = plan_of({gf, gl}, a, b, c, d);
                            const double obj = (a + c) * (gf + gl) + (b + d) * (2 - gf - gl);
                            if (obj < best_obj - 1e-9) continue;
                            if (measure_qd(p, s.base, s.folded, s.eval) > target + 1e-9) continue;
                            if (obj > best_obj + 1e-9 || detail::plan_key(p) < detail::plan_key(best)) {
                                best = p;
                                best_obj = obj;
                                found = true;
                            }
                        }
    ASSERT_TRUE(found);
    ASSERT_TRUE(r.feasible);
    EXPECT_EQ(r.best.plan, best);
    EXPECT_NEAR(r.best.objective, best_obj, 1e-12);
    // independent re-measurement of the winner
    EXPECT_LE(measure_qd(r.best.plan, s.base, s.folded, s.eval), target + 1e-9);
}

TEST(Oracle, InfeasibleReportsMinimumQd) {
    const auto& s = setup();
    QdEvaluator ev(s.base, s.folded, s.eval);
    GridSpec grid;
    grid.p_values = {0.5};
    grid.g_values = {0.5};
    const auto r = enumerate_oracle(1e-6, ev, kDims.n_layers, grid);
    EXPECT_FALSE(r.feasible);
    EXPECT_EQ(r.candidates, 1u);
    EXPECT_GT(r.best.q_d, 1e-6);
}

TEST(Grid, EveryCandidateSatisfiesConstraints) {
    for (bool strict : {false, true}) {
        GridSpec grid = GridSpec::tiny();
        grid.policy.strict_g = strict;
        const auto plans = enumerate_grid(3, grid);
        EXPECT_FALSE(plans.empty());
        for (const auto& p : plans) EXPECT_EQ(plan_violation(p, grid.policy), "");
    }
}

TEST(Regressor, RecoversLinearGroundTruth) {
    auto truth = [](double t) { return plan_of(CompressionPlan::interpolate_g(3, 0.2 + 0.5 * t, 0.3 + 0.5 * t),
                                               0.1 + t, 0.2 + t, 0.05 + t, 0.15 + t); };
    std::vector<PlanSample> samples;
    for (double t : {0.01, 0.05, 0.1, 0.15, 0.2, 0.3}) samples.push_back({truth(t), t, objective(truth(t))});
    for (std::size_t degree : {1, 2, 3}) {
        const Regressor r = fit_regressor(samples, degree);
        for (double t : {0.02, 0.12, 0.25}) {
            const CompressionPlan p = predict(r, t), e = truth(t);
            EXPECT_NEAR(p.p_qk_i, e.p_qk_i, 1e-6);
            EXPECT_NEAR(p.p_qk_u, e.p_qk_u, 1e-6);
            EXPECT_NEAR(p.p_vl_i, e.p_vl_i, 1e-6);
            EXPECT_NEAR(p.p_vl_u, e.p_vl_u, 1e-6);
            for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(p.g[l], e.g[l], 1e-6);
        }
    }
}

TEST(Regressor, PredictionsAlwaysValid) {
    std::vector<PlanSample> samples;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 12; ++i) {
        // deliberately unordered outputs
        samples.push_back({plan_of({u(rng), u(rng)}, u(rng) * 0.9, u(rng) * 0.9, u(rng) * 0.9, u(rng) * 0.9),
                           u(rng) * 0.3, 0.0});
    }
    for (std::size_t degree : {1, 2, 3}) {
        const Regressor r = fit_regressor(samples, degree);
        for (double t : {-5.0, 0.0, 0.1, 0.3, 5.0}) EXPECT_EQ(plan_violation(predict(r, t)), "") << t;
    }
}

TEST(Regressor, RejectsDegenerateInput) {
    std::vector<PlanSample> same(4, {CompressionPlan::zero(2), 0.1, 0.0});
    EXPECT_THROW(fit_regressor(same), std::invalid_argument);
    EXPECT_THROW(fit_regressor({same[0]}, 1), std::invalid_argument);
    same[1].q_d = 0.2;
    EXPECT_THROW(fit_regressor(same, 4), std::invalid_argument);
}

TEST(PlanIo, JsonRoundTrip) {
    const CompressionPlan p = plan_of({0.25, 0.75}, 0.3, 0.5, 0.2, 0.4);
    EXPECT_EQ(nlohmann::json(p).get<CompressionPlan>(), p);
    nlohmann::json j = p;
    j.erase("group_map");
    EXPECT_EQ(j.get<CompressionPlan>().group_map, CompressionPlan::identity_groups(2));
}
