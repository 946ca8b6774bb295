#include "kva/montecarlo.hpp"

#include "kva/error.hpp"

#include <random>
#include <string>

namespace kva::mc {
namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Fills rows [0, rows) of a chunk with standard normals.
void fill_chunk_normals(double* out, std::size_t rows, std::size_t width, std::uint64_t seed,
                        std::size_t chunk, bool antithetic) {
    std::mt19937_64 engine(chunk_seed(seed, chunk));
    std::normal_distribution<double> normal;
    if (!antithetic) {
        for (std::size_t i = 0; i < rows * width; ++i) out[i] = normal(engine);
        return;
    }
    for (std::size_t i = 0; i + 1 < rows; i += 2) {
        double* first = out + i * width;
        double* second = first + width;
        for (std::size_t k = 0; k < width; ++k) {
            first[k] = normal(engine);
            second[k] = -first[k];
        }
    }
}

void check_size(std::size_t n, bool antithetic) {
    if (n < 2) throw Error(Errc::invalid_argument, "a batch needs at least two draws");
    if (antithetic && n % 2 != 0)
        throw Error(Errc::invalid_argument, "antithetic batches need an even number of draws");
}

void check_dim(const EquityEvaluator& ev, const SampleBatch& batch) {
    if (ev.dim() != batch.dim())
        throw Error(Errc::dimension_mismatch, "evaluator dimension " + std::to_string(ev.dim()) +
                                                  " differs from batch dimension " +
                                                  std::to_string(batch.dim()));
}

} // namespace

std::uint64_t chunk_seed(std::uint64_t seed, std::size_t chunk) noexcept {
    return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(chunk));
}

unsigned default_workers() noexcept {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

std::vector<double> standard_normals(std::size_t n, std::size_t width, std::uint64_t seed,
                                     bool antithetic, unsigned workers) {
    check_size(n, antithetic);
    std::vector<double> out(n * width);
    const std::size_t chunks = (n + kChunkRows - 1) / kChunkRows;
    detail::for_each_chunk(chunks, workers, [&](std::size_t c) {
        const std::size_t begin = c * kChunkRows;
        const std::size_t rows = std::min(n, begin + kChunkRows) - begin;
        fill_chunk_normals(out.data() + begin * width, rows, width, seed, c, antithetic);
    });
    return out;
}

SampleBatch sample(const ValidatedModel& model, std::size_t n, std::uint64_t seed,
                   bool antithetic, unsigned workers) {
    check_size(n, antithetic);
    const int d = model.dim();
    const std::size_t width = static_cast<std::size_t>(d) + 1;

    Vector mean(d + 1);
    mean.head(d) = model.raw().m1;
    mean[d] = model.raw().m_y;
    const Matrix& factor = model.covariance_factor();

    SampleBatch batch;
    batch.n_ = n;
    batch.dim_ = d;
    batch.seed_ = seed;
    batch.antithetic_ = antithetic;
    batch.data_.resize(n * width);

    const std::size_t chunks = batch.chunk_count();
    detail::for_each_chunk(chunks, workers, [&](std::size_t c) {
        const std::size_t begin = c * kChunkRows;
        const std::size_t rows = std::min(n, begin + kChunkRows) - begin;
        std::vector<double> z(rows * width);
        fill_chunk_normals(z.data(), rows, width, seed, c, antithetic);
        double* dst = batch.data_.data() + begin * width;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* zi = z.data() + i * width;
            double* xi = dst + i * width;
            for (std::size_t r = 0; r < width; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= r; ++k) acc += factor(r, k) * zi[k];
                xi[r] = mean[static_cast<Eigen::Index>(r)] + acc;
            }
        }
    });
    return batch;
}

Estimate positive_part_value(const EquityEvaluator& ev, const SampleBatch& batch,
                             unsigned workers) {
    check_dim(ev, batch);
    return estimate_mean(
        batch, [&](const double* row) { return std::max(ev.on_row(row), 0.0); }, workers);
}

Estimate plain_value(const EquityEvaluator& ev, const SampleBatch& batch, unsigned workers) {
    check_dim(ev, batch);
    return estimate_mean(batch, [&](const double* row) { return ev.on_row(row); }, workers);
}

Estimate survival_probability(const EquityEvaluator& ev, const SampleBatch& batch,
                              unsigned workers) {
    check_dim(ev, batch);
    return estimate_mean(
        batch, [&](const double* row) { return ev.on_row(row) > 0.0 ? 1.0 : 0.0; }, workers);
}

Estimate positive_part_difference(const EquityEvaluator& a, const EquityEvaluator& b,
                                  const SampleBatch& batch, unsigned workers) {
    check_dim(a, batch);
    check_dim(b, batch);
    return estimate_mean(
        batch,
        [&](const double* row) {
            return std::max(a.on_row(row), 0.0) - std::max(b.on_row(row), 0.0);
        },
        workers);
}

Estimate sample_covariance(const SampleBatch& batch, int i, int j, unsigned workers) {
    if (i < 0 || j < 0 || i > batch.dim() || j > batch.dim())
        throw Error(Errc::dimension_mismatch, "covariance column out of range");
    auto means = row_moments(
        batch, 2,
        [&](const double* row, double* out) {
            out[0] = row[i];
            out[1] = row[j];
        },
        workers);
    const double mi = means[0].mean;
    const double mj = means[1].mean;
    auto est = estimate_mean(
        batch, [&](const double* row) { return (row[i] - mi) * (row[j] - mj); }, workers);
    const double n = static_cast<double>(batch.size());
    est.value *= n / (n - 1.0);
    return est;
}

Psi0Kernel::Psi0Kernel(const ValidatedModel& model, double c0, const Vector& theta_star,
                       double price_slope, std::vector<double> h_grid)
    : ev_(model, c0, theta_star, 0.0, 0.0), slope_shift_(price_slope * model.accrual()),
      h_(std::move(h_grid)) {
    if (h_.size() < 2)
        throw Error(Errc::invalid_argument, "h_grid needs at least two step sizes");
    for (std::size_t k = 0; k < h_.size(); ++k) {
        if (!(h_[k] > 0.0) || !std::isfinite(h_[k]))
            throw Error(Errc::invalid_argument, "h_grid entries must be positive");
        if (k > 0 && !(h_[k] < h_[k - 1]))
            throw Error(Errc::invalid_argument, "h_grid must be strictly decreasing");
    }
}

double Psi0Kernel::central_difference(const double* row, std::size_t k) const noexcept {
    const double x = ev_.on_row(row);
    const double w = row[ev_.dim()] + slope_shift_;
    const double h = h_[k];
    const double up = x + h * w > 0.0 ? 1.0 : 0.0;
    const double down = x - h * w > 0.0 ? 1.0 : 0.0;
    return w * (up - down) / (2.0 * h);
}

double Psi0Kernel::extrapolated(const double* row, std::size_t k) const noexcept {
    // Central differences have an even error expansion in h.
    const double t = h_[k + 1] / h_[k];
    const double t2 = t * t;
    return (central_difference(row, k + 1) - t2 * central_difference(row, k)) / (1.0 - t2);
}

Psi0Estimate estimate_psi0(const ValidatedModel& model, const CapitalConstraint& constraint,
                           const Vector& theta_star, double price_slope,
                           const SampleBatch& batch, std::span<const double> h_grid,
                           unsigned workers) {
    constraint.validate();
    const Psi0Kernel kernel(model, constraint.c0, theta_star, price_slope,
                            std::vector<double>(h_grid.begin(), h_grid.end()));
    if (model.dim() != batch.dim())
        throw Error(Errc::dimension_mismatch, "model and batch dimensions differ");

    const std::size_t m = kernel.h_count();
    const std::size_t pairs = m - 1;
    // Columns: central differences, extrapolations, then coarse-minus-finest gaps.
    const std::size_t width = m + pairs + (pairs - 1);
    auto moments = row_moments(
        batch, width,
        [&](const double* row, double* out) {
            for (std::size_t k = 0; k < m; ++k) out[k] = kernel.central_difference(row, k);
            const double finest = kernel.extrapolated(row, pairs - 1);
            for (std::size_t k = 0; k < pairs; ++k) {
                const double e = k + 1 == pairs ? finest : kernel.extrapolated(row, k);
                out[m + k] = e;
                if (k + 1 < pairs) out[m + pairs + k] = e - finest;
            }
        },
        workers);

    Psi0Estimate result;
    for (std::size_t k = 0; k < m; ++k) result.central_differences.push_back(moments[k].estimate());
    for (std::size_t k = 0; k < pairs; ++k)
        result.extrapolations.push_back(moments[m + k].estimate());
    result.value = result.extrapolations.back();

    for (std::size_t k = 0; k + 1 < pairs; ++k) {
        const Estimate gap = moments[m + pairs + k].estimate();
        if (std::abs(gap.value) > 5.0 * gap.std_error)
            throw Error(Errc::no_convergence,
                        "Richardson extrapolations disagree across h_grid (gap " +
                            std::to_string(gap.value) + ", stderr " +
                            std::to_string(gap.std_error) + ")");
    }
    return result;
}

} // namespace kva::mc
