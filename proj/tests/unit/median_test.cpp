#include "kva/error.hpp"
#include "kva/linear.hpp"
#include "kva/median.hpp"
#include "kva/montecarlo.hpp"

#include "support/instances.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace kva;

namespace {

median::MedianEstimate clipped_sample_median(double mean, double sd, std::size_t n,
                                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(mean, sd);
    std::vector<double> xs(n);
    for (auto& x : xs) x = std::max(normal(rng), 0.0);
    return median::empirical_median(xs);
}

} // namespace

TEST(MedianOfPositivePart, Examples) {
    EXPECT_EQ(median::median_of_positive_part(5.0, 0.0), 5.0);
    EXPECT_EQ(median::median_of_positive_part(-3.0, 1.0), 0.0);
    EXPECT_EQ(median::median_of_positive_part(2.0, 7.0), 2.0);
    const auto emp = clipped_sample_median(2.0, 7.0, 1'000'000, 1);
    EXPECT_NEAR(emp.value, 2.0, 4.0 * emp.std_error);
}

TEST(MedianOfPositivePart, DegenerateWhenNeverPositive) {
    for (double mean : {0.0, -1.0}) {
        try {
            median::median_of_positive_part(mean, 0.0);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::degenerate_distribution);
        }
    }
}

TEST(MedianOfPositivePart, AgreesWithClippedSamples) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> mean(-5.0, 5.0);
    std::uniform_real_distribution<double> sd(0.1, 5.0);
    for (int i = 0; i < 500; ++i) {
        const double m = mean(rng);
        const double s = sd(rng);
        const auto emp = clipped_sample_median(m, s, 20'000, 1000 + i);
        // 5 stderr keeps the false-alarm rate over 500 draws near 1e-3.
        EXPECT_NEAR(emp.value, median::median_of_positive_part(m, s), 5.0 * emp.std_error)
            << "mean " << m << " sd " << s;
    }
}

TEST(EmpiricalMedian, OrderStatistics) {
    std::vector<double> odd{5.0, 1.0, 3.0};
    EXPECT_EQ(median::empirical_median(odd).value, 3.0);
    std::vector<double> even{4.0, 1.0, 3.0, 2.0};
    EXPECT_EQ(median::empirical_median(even).value, 2.5);
    std::vector<double> empty;
    EXPECT_THROW(median::empirical_median(empty), Error);
}

TEST(SolvencyCheck, Examples) {
    const auto vm = test::canon();
    const auto c = test::canon_constraint();
    EXPECT_TRUE(median::solvency_check(vm, c, 0.0, 0.0));
    // A large negative price leaves negative cash that no drift can offset.
    auto m = test::canon_model();
    m.m1 = m.s0 * 1.02;
    const auto flat = validate_model(m);
    EXPECT_FALSE(median::solvency_check(flat, c, 0.0, -50.0));
    EXPECT_FALSE(median::solvency_check(vm, c, 0.0, -20.0));
}

TEST(SolvencyCheck, AgreesWithLinearValue) {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 100; ++i) {
        const auto inst = test::random_instance(rng);
        const auto vm = validate_model(inst.model);
        for (double q : test::feasible_q_grid(vm, inst.constraint, 5)) {
            const double price = 10.0 * normal(rng);
            const double v = linear::linear_value(vm, inst.constraint, q, price);
            EXPECT_EQ(median::solvency_check(vm, inst.constraint, q, price), v > 0.0);
        }
    }
}

TEST(MedianPrice, CanonEqualsLinearBits) {
    const auto vm = test::canon();
    const auto c = test::canon_constraint();
    const auto res = median::median_price(vm, c, Deal{0.1});
    EXPECT_TRUE(res.solvency_ok);
    EXPECT_EQ(res.price, linear::price_exact(vm, c, Deal{0.1}).price_exact);
    EXPECT_NEAR(res.price, 0.123685, 2e-6);
    EXPECT_EQ(median::median_price(vm, c, Deal{0.0}).price, 0.0);
}

TEST(MedianPrice, StructuralEqualityOnRandomInstances) {
    std::mt19937_64 rng(43);
    for (int i = 0; i < 100; ++i) {
        const auto inst = test::random_instance(rng);
        const auto vm = validate_model(inst.model);
        for (double q : test::feasible_q_grid(vm, inst.constraint)) {
            const auto res = median::median_price(vm, inst.constraint, Deal{q});
            EXPECT_EQ(res.price, linear::price_exact(vm, inst.constraint, Deal{q}).price_exact);
        }
    }
}

TEST(MedianPrice, EmpiricalMedianIndifference) {
    const auto vm = test::canon();
    const auto c = test::canon_constraint();
    // Antithetic pairs would make the sample median of an affine X equal its mean.
    const auto batch = mc::sample(vm, 1'000'000, 42, false);
    const auto base = linear::price_exact(vm, c, Deal{0.0});
    const auto deal = median::median_price(vm, c, Deal{0.1});
    const EquityEvaluator ev0(vm, c.c0, base.theta_star, 0.0, 0.0);
    const EquityEvaluator evq(vm, c.c0, deal.delegate.theta_star, 0.1, deal.price);
    const auto m0 = median::positive_part_median(ev0, batch);
    const auto mq = median::positive_part_median(evq, batch);
    EXPECT_NEAR(mq.value, m0.value, 4.0 * std::hypot(m0.std_error, mq.std_error));
    EXPECT_NEAR(m0.value, ev0.mean(), 4.0 * m0.std_error);
}
