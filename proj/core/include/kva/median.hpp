#pragma once

#include "kva/linear.hpp"
#include "kva/model.hpp"
#include "kva/montecarlo.hpp"

#include <vector>

namespace kva::median {

/// Only Gaussian X is supported: the median of X is its mean, which is
/// what reduces the median objective to the mean objective.
struct MedianResult {
    double price = 0.0;
    bool solvency_ok = false;
    linear::LinearSolution delegate;
};

/// M[X⁺] = (M[X])⁺ for Gaussian X. Throws DegenerateDistribution when
/// P[X > 0] = 0 (std 0 and mean <= 0).
double median_of_positive_part(double dist_mean, double dist_std);

/// True iff some theta in Theta(q) has E[X(theta, q)] > 0 at this price.
bool solvency_check(const ValidatedModel& model, const CapitalConstraint& constraint, double q,
                    double price);

/// Indifference price of the median objective. Throws
/// SolvencyAssumptionViolated when the bank is not solvent on average at
/// q = 0 or at (q, P(q)).
MedianResult median_price(const ValidatedModel& model, const CapitalConstraint& constraint,
                          const Deal& deal);

struct MedianEstimate {
    double value = 0.0;
    double std_error = 0.0; // half-width of the +-1 sigma binomial order-statistic band
    std::size_t n = 0;
};

/// Sample median with a distribution-free standard error from the order
/// statistics at ranks n/2 +- sqrt(n)/2. Reorders `values`.
MedianEstimate empirical_median(std::vector<double>& values);

/// Sample median of X⁺ over the batch.
MedianEstimate positive_part_median(const EquityEvaluator& ev, const mc::SampleBatch& batch);

} // namespace kva::median
