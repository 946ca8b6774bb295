#include "kva/median.hpp"

#include "kva/error.hpp"

#include <algorithm>
#include <cmath>

namespace kva::median {

double median_of_positive_part(double dist_mean, double dist_std) {
    if (!std::isfinite(dist_mean) || !std::isfinite(dist_std) || dist_std < 0.0)
        throw Error(Errc::invalid_argument, "mean must be finite and std non-negative");
    if (dist_std == 0.0 && dist_mean <= 0.0)
        throw Error(Errc::degenerate_distribution, "P[X > 0] = 0, the positive part has no "
                                                   "informative median");
    return std::max(dist_mean, 0.0);
}

bool solvency_check(const ValidatedModel& model, const CapitalConstraint& constraint, double q,
                    double price) {
    return linear::max_expected_equity(model, constraint, q, price) > 0.0;
}

MedianResult median_price(const ValidatedModel& model, const CapitalConstraint& constraint,
                          const Deal& deal) {
    if (!solvency_check(model, constraint, 0.0, 0.0))
        throw Error(Errc::solvency_assumption_violated,
                    "no admissible strategy has positive expected equity at q = 0");
    MedianResult out;
    out.delegate = linear::price_exact(model, constraint, deal);
    if (!solvency_check(model, constraint, deal.q, out.delegate.price_exact))
        throw Error(Errc::solvency_assumption_violated,
                    "no admissible strategy has positive expected equity with the deal");
    out.price = out.delegate.price_exact;
    out.solvency_ok = true;
    return out;
}

MedianEstimate empirical_median(std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n == 0) throw Error(Errc::invalid_argument, "median of an empty sample");
    MedianEstimate out;
    out.n = n;
    std::sort(values.begin(), values.end());
    out.value = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);

    // The rank of the median is Binomial(n, 1/2): mean n/2, sd sqrt(n)/2.
    const double centre = 0.5 * static_cast<double>(n);
    const double spread = 0.5 * std::sqrt(static_cast<double>(n));
    const auto clamp = [&](double r) {
        return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(n - 1)));
    };
    const std::size_t lo = clamp(std::floor(centre - spread));
    const std::size_t hi = clamp(std::ceil(centre + spread));
    // Larger side, so an atom at zero below the median cannot shrink it.
    out.std_error = std::max(values[hi] - out.value, out.value - values[lo]);
    return out;
}

MedianEstimate positive_part_median(const EquityEvaluator& ev, const mc::SampleBatch& batch) {
    if (ev.dim() != batch.dim())
        throw Error(Errc::dimension_mismatch, "evaluator and batch dimensions differ");
    std::vector<double> values(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        values[i] = std::max(ev.on_row(batch.row(i)), 0.0);
    return empirical_median(values);
}

} // namespace kva::median
