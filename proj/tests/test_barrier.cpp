// SPDX-License-Identifier: MIT
#include <chaosflow/barrier.hpp>

#include <gtest/gtest.h>

using namespace chaosflow;

TEST(Barrier, Evaluation) {
    EXPECT_EQ(Barrier::constant(1.5)(0.3), 1.5);
    EXPECT_DOUBLE_EQ(Barrier::linear(1.0, -0.5)(0.5), 0.75);
    const Barrier pl = Barrier::piecewise_linear({0.0, 0.5, 1.0}, {1.0, 2.0, 1.0});
    EXPECT_DOUBLE_EQ(pl(0.25), 1.5);
    EXPECT_DOUBLE_EQ(pl(1.0), 1.0);
    EXPECT_DOUBLE_EQ(pl.slope(0.75), -2.0);
    EXPECT_DOUBLE_EQ(pl.max_value(1.0), 2.0);
    EXPECT_DOUBLE_EQ(pl.min_value(0.4), 1.0);
    const Barrier sb = Barrier::sampled(TimeGrid(1.0, 2), {1.0, 3.0, 2.0});
    EXPECT_DOUBLE_EQ(sb(0.75), 2.5);
    EXPECT_DOUBLE_EQ(sb.mean_slope(0.0, 1.0), 1.0);
}

TEST(Barrier, RejectsInvalid) {
    EXPECT_THROW(Barrier::constant(0.0), Error);
    EXPECT_THROW(Barrier::linear(-1.0, 3.0), Error);
    EXPECT_THROW(Barrier::piecewise_linear({0.0, 0.5, 0.4}, {1, 1, 1}), Error);
    EXPECT_THROW(Barrier::piecewise_linear({0.1, 1.0}, {1, 1}), Error);
    EXPECT_THROW(Barrier::sampled(TimeGrid(1.0, 2), {1.0, 2.0}), Error);
}

TEST(Barrier, ClosedFormFlag) {
    EXPECT_TRUE(Barrier::constant(1.0).has_closed_form());
    EXPECT_TRUE(Barrier::linear(1.0, 1.0).has_closed_form());
    EXPECT_FALSE(Barrier::sample([](double) { return 1.0; }, 1.0, 8).has_closed_form());
}
