#pragma once

#include "kva/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

namespace kva::mc {

/// Rows per independently seeded chunk.
inline constexpr std::size_t kChunkRows = std::size_t{1} << 16;

struct Estimate {
    double value = 0.0;
    double std_error = 0.0; // sample standard deviation / sqrt(n)
    std::size_t n = 0;
};

/// Streaming mean/variance (Welford) with an order-fixed merge.
struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) noexcept {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    void merge(const Moments& other) noexcept {
        if (other.n == 0) return;
        if (n == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n);
        const double nb = static_cast<double>(other.n);
        const double delta = other.mean - mean;
        const double total = na + nb;
        mean += delta * nb / total;
        m2 += other.m2 + delta * delta * na * nb / total;
        n += other.n;
    }

    Estimate estimate() const noexcept {
        Estimate e;
        e.value = mean;
        e.n = n;
        e.std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n))
                            : 0.0;
        return e;
    }
};

/// Seeded draws of (S1, Y) stored row-major as (s1_1, ..., s1_d, y).
class SampleBatch {
public:
    std::size_t size() const noexcept { return n_; }
    int dim() const noexcept { return dim_; }
    std::size_t stride() const noexcept { return static_cast<std::size_t>(dim_) + 1; }
    std::uint64_t seed() const noexcept { return seed_; }
    bool antithetic() const noexcept { return antithetic_; }

    const double* row(std::size_t i) const noexcept { return data_.data() + i * stride(); }
    std::span<const double> s1(std::size_t i) const noexcept {
        return {row(i), static_cast<std::size_t>(dim_)};
    }
    double y(std::size_t i) const noexcept { return row(i)[dim_]; }
    const std::vector<double>& data() const noexcept { return data_; }

    std::size_t chunk_count() const noexcept { return (n_ + kChunkRows - 1) / kChunkRows; }

private:
    std::size_t n_ = 0;
    int dim_ = 0;
    std::uint64_t seed_ = 0;
    bool antithetic_ = false;
    std::vector<double> data_;

    friend SampleBatch sample(const ValidatedModel&, std::size_t, std::uint64_t, bool, unsigned);
};

/// Seed of chunk `chunk` derived from the batch seed.
std::uint64_t chunk_seed(std::uint64_t seed, std::size_t chunk) noexcept;

/// Number of workers used when a call passes 0.
unsigned default_workers() noexcept;

namespace detail {

/// Runs fn(chunk) for every chunk. Each chunk must write only its own
/// output slot, so results do not depend on the worker count.
template <class Fn>
void for_each_chunk(std::size_t chunks, unsigned workers, Fn&& fn) {
    if (workers == 0) workers = default_workers();
    const auto threads = static_cast<unsigned>(std::min<std::size_t>(workers, chunks));
    if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < chunks; c = next++) fn(c);
        });
}

} // namespace detail

/// Chunked per-row statistics: fn(row, out) writes `width` values per row;
/// returns their moments merged in chunk order.
template <class RowFn>
std::vector<Moments> row_moments(const SampleBatch& batch, std::size_t width, RowFn&& fn,
                                 unsigned workers = 0) {
    const std::size_t chunks = batch.chunk_count();
    std::vector<std::vector<Moments>> partial(chunks, std::vector<Moments>(width));
    detail::for_each_chunk(chunks, workers, [&](std::size_t c) {
        std::vector<double> out(width);
        auto& acc = partial[c];
        const std::size_t end = std::min(batch.size(), (c + 1) * kChunkRows);
        for (std::size_t i = c * kChunkRows; i < end; ++i) {
            fn(batch.row(i), out.data());
            for (std::size_t k = 0; k < width; ++k) acc[k].add(out[k]);
        }
    });
    std::vector<Moments> total(width);
    for (const auto& p : partial)
        for (std::size_t k = 0; k < width; ++k) total[k].merge(p[k]);
    return total;
}

template <class RowFn>
Estimate estimate_mean(const SampleBatch& batch, RowFn&& fn, unsigned workers = 0) {
    auto m = row_moments(
        batch, 1, [&](const double* row, double* out) { out[0] = fn(row); }, workers);
    return m[0].estimate();
}

/// Raw standard normals, n rows of `width`, using the same chunked seeding
/// as sample(). Antithetic rows come in (z, -z) pairs.
std::vector<double> standard_normals(std::size_t n, std::size_t width, std::uint64_t seed,
                                     bool antithetic, unsigned workers = 0);

/// Draws (S1, Y) = mean + L z. Requires n >= 2, and n even when antithetic.
SampleBatch sample(const ValidatedModel& model, std::size_t n, std::uint64_t seed,
                   bool antithetic, unsigned workers = 0);

/// E[X⁺] over the batch.
Estimate positive_part_value(const EquityEvaluator& ev, const SampleBatch& batch,
                             unsigned workers = 0);

/// E[X] over the batch.
Estimate plain_value(const EquityEvaluator& ev, const SampleBatch& batch, unsigned workers = 0);

/// Fraction of rows with X > 0.
Estimate survival_probability(const EquityEvaluator& ev, const SampleBatch& batch,
                              unsigned workers = 0);

/// Paired estimate of E[X_a⁺ - X_b⁺] on common draws.
Estimate positive_part_difference(const EquityEvaluator& a, const EquityEvaluator& b,
                                  const SampleBatch& batch, unsigned workers = 0);

/// Sample covariance of columns i and j (column d is Y).
Estimate sample_covariance(const SampleBatch& batch, int i, int j, unsigned workers = 0);

/// Per-row contribution of the psi(0) estimator at q = 0, P = 0:
/// central indicator differences of X shifted by +-h W, W = Y + slope (1+r+lambda),
/// combined by Richardson extrapolation across consecutive h.
class Psi0Kernel {
public:
    Psi0Kernel(const ValidatedModel& model, double c0, const Vector& theta_star,
               double price_slope, std::vector<double> h_grid);

    std::size_t h_count() const noexcept { return h_.size(); }

    /// Central difference at h_grid[k].
    double central_difference(const double* row, std::size_t k) const noexcept;

    /// Richardson combination of h_grid[k] and h_grid[k + 1].
    double extrapolated(const double* row, std::size_t k) const noexcept;

    /// Finest extrapolation: the psi(0) contribution of this row.
    double operator()(const double* row) const noexcept {
        return extrapolated(row, h_.size() - 2);
    }

private:
    EquityEvaluator ev_;
    double slope_shift_;
    std::vector<double> h_;
};

struct Psi0Estimate {
    Estimate value;
    std::vector<Estimate> central_differences; // one per h
    std::vector<Estimate> extrapolations;      // one per consecutive pair
};

/// psi(0) = lim E[W (1{X + hW > 0} - 1{X > 0}) / h], W = Y + slope (1+r+lambda),
/// by common-random-number central differences and Richardson extrapolation.
/// Throws NoConvergence if a coarser extrapolation differs from the finest
/// by more than 5 standard errors.
Psi0Estimate estimate_psi0(const ValidatedModel& model, const CapitalConstraint& constraint,
                           const Vector& theta_star, double price_slope,
                           const SampleBatch& batch, std::span<const double> h_grid,
                           unsigned workers = 0);

} // namespace kva::mc
