// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "layerwise/errors.hpp"
#include "layerwise/stagescheduler.hpp"

using namespace layerwise;

TEST_CASE("L=12, S=4, T_inc=10000 splits into 1250-step phases") {
    const auto plan = build_plan(12, 4, 10000, 0);
    CHECK(plan.layers_per_stage == 3);
    REQUIRE(plan.budgets.size() == 4);
    for (const auto& b : plan.budgets) {
        CHECK(b.phase1_units == 1250);
        CHECK(b.phase2_units == 1250);
    }
    CHECK(plan.stage_start(3) == 5000);
    CHECK(plan.phase2_start(3) == 6250);

    const auto d = directive_at(plan, 5000);
    CHECK(d.mode == Mode::phase1);
    CHECK(d.stage == 3);
    CHECK(d.active_depth == 9);
    CHECK(d.grad_depth_lo == 7);
    CHECK_FALSE(d.train_embeddings_head);
    CHECK(d.label() == "phase1:3");

    const auto e = directive_at(plan, 6250);
    CHECK(e.mode == Mode::phase2);
    CHECK(e.active_depth == 9);
    CHECK(e.grad_depth_lo == 1);
    CHECK(e.train_embeddings_head);

    const auto first = directive_at(plan, 0);
    CHECK(first.active_depth == 3);
    CHECK(first.grad_depth_lo == 1);
    CHECK(first.train_embeddings_head);

    CHECK(directive_at(plan, 9999).label() == "phase2:4");
    CHECK(directive_at(plan, 10000).mode == Mode::continual);
    CHECK(directive_at(plan, 10000).active_depth == 12);
}

TEST_CASE("non-divisible layer counts are rejected") {
    CHECK_THROWS_AS(build_plan(12, 5, 100, 0), ConfigError);
    CHECK_THROWS_AS(build_plan(12, 0, 100, 0), ConfigError);
    CHECK_THROWS_AS(build_plan(12, 4, 0, 0), ConfigError);
    CHECK_THROWS_AS(build_plan(12, 4, 100, -1), ConfigError);
    CHECK_THROWS_AS(build_plan(12, 4, 100, 0, Rational(3, 2)), ConfigError);
    CHECK_THROWS_AS(baseline_plan(0, 10), ConfigError);
    CHECK_THROWS_AS(directive_at(build_plan(4, 2, 10, 0), -1), ScheduleError);
}

TEST_CASE("every unit's directive matches a step-by-step walk") {
    for (int layers : {1, 2, 6, 8, 12}) {
        for (int stages = 1; stages <= layers; ++stages) {
            if (layers % stages) continue;
            for (std::int64_t t_inc : {1, 7, 100, 333}) {
                const auto plan = build_plan(layers, stages, t_inc, 5);
                const int m = layers / stages;
                std::int64_t sum = 0;
                for (const auto& b : plan.budgets) sum += b.phase1_units + b.phase2_units;
                CHECK(sum == t_inc);

                // Independent walk: stage of unit u is the i with
                // floor((i-1)T/S) <= u < floor(iT/S).
                for (std::int64_t u = 0; u < t_inc + 5; ++u) {
                    const auto d = directive_at(plan, u);
                    if (u >= t_inc) {
                        CHECK(d.mode == Mode::continual);
                        CHECK(d.active_depth == layers);
                        continue;
                    }
                    int stage = 1;
                    while (u >= t_inc * stage / stages) ++stage;
                    const std::int64_t start = t_inc * (stage - 1) / stages;
                    const std::int64_t len = t_inc * stage / stages - start;
                    const bool p1 = u - start < len / 2;
                    CHECK(d.stage == stage);
                    CHECK(d.mode == (p1 ? Mode::phase1 : Mode::phase2));
                    CHECK(d.active_depth == stage * m);
                    CHECK(d.grad_depth_lo == (p1 ? (stage - 1) * m + 1 : 1));
                    CHECK(d.train_embeddings_head == (!p1 || stage == 1));
                }
            }
        }
    }
}

TEST_CASE("one stage trains exactly like the baseline") {
    const auto inc = build_plan(6, 1, 50, 10);
    const auto base = baseline_plan(6, 60);
    for (std::int64_t u = 0; u < 60; ++u) {
        const auto a = directive_at(inc, u);
        const auto b = directive_at(base, u);
        CHECK(a.active_depth == b.active_depth);
        CHECK(a.grad_depth_lo == b.grad_depth_lo);
        CHECK(a.train_embeddings_head == b.train_embeddings_head);
    }
    CHECK(directive_at(base, 1000).mode == Mode::baseline);
}

TEST_CASE("phase split other than one half") {
    const auto plan = build_plan(4, 2, 100, 0, Rational(1, 4));
    CHECK(plan.budgets[0].phase1_units == 12);
    CHECK(plan.budgets[0].phase2_units == 38);
    const auto all_p2 = build_plan(4, 2, 100, 0, Rational(0));
    CHECK(directive_at(all_p2, 0).mode == Mode::phase2);
}

TEST_CASE("exact segments carry unrounded budgets") {
    const auto plan = build_plan(16, 8, 10000, 0);
    const auto segs = exact_segments(plan, Rational(10000));
    REQUIRE(segs.size() == 16);
    for (const auto& s : segs) CHECK(s.units == Rational(625));
    const auto odd = exact_segments(build_plan(12, 12, 10000, 0), Rational(10000));
    CHECK(odd[0].units == Rational(1250, 3));
}

TEST_CASE("directive labels round trip") {
    const auto plan = build_plan(12, 4, 10000, 100);
    for (std::int64_t u : {0, 1300, 2600, 9000, 10050}) {
        const auto d = directive_at(plan, u);
        CHECK(parse_directive_label(d.label(), 12, 4) == d);
    }
    CHECK(parse_directive_label("baseline", 12, 1).active_depth == 12);
    CHECK_THROWS_AS(parse_directive_label("phase3:1", 12, 4), DataError);
    CHECK_THROWS_AS(parse_directive_label("phase1:5", 12, 4), ScheduleError);
}

TEST_CASE("plan description") {
    const auto text = describe(build_plan(4, 2, 10, 3));
    CHECK(text.find("stage_budgets = [[2, 3], [2, 3]]") != std::string::npos);
    CHECK(text.find("continual_steps = 3") != std::string::npos);
}
