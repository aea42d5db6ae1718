#include "ddl/core/kernels.hpp"

#include <cmath>
#include <cstdint>

#include "ddl/errors.hpp"

namespace ddl::core {

namespace {

// Parallelism pays only above this size; below it the serial path runs.
// Results are identical either way.
constexpr std::size_t kParallelCutoff = 1 << 14;

void check_same(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("kernel operand length mismatch");
}

double chunk_sum_sq(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double chunk_sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

}  // namespace

namespace ref {

std::vector<double> axpy(double a, std::span<const double> x, std::span<const double> y) {
    check_same(x.size(), y.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + y[i];
    return out;
}

void axpy_inplace(double a, std::span<const double> x, std::span<double> y) {
    check_same(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

std::vector<double> subtract(std::span<const double> x, std::span<const double> y) {
    check_same(x.size(), y.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return out;
}

void scale_inplace(double a, std::span<double> x) {
    for (auto& v : x) v *= a;
}

double l2_norm(std::span<const double> x) {
    double total = 0.0;
    for (std::size_t c = 0; c < x.size(); c += kReduceChunk)
        total += chunk_sum_sq(x.data() + c, std::min(kReduceChunk, x.size() - c));
    return std::sqrt(total);
}

double sum(std::span<const double> x) {
    double total = 0.0;
    for (std::size_t c = 0; c < x.size(); c += kReduceChunk)
        total += chunk_sum(x.data() + c, std::min(kReduceChunk, x.size() - c));
    return total;
}

}  // namespace ref

std::vector<double> axpy(double a, std::span<const double> x, std::span<const double> y) {
    check_same(x.size(), y.size());
    std::vector<double> out(x.size());
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (x.size() < kParallelCutoff) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = a * x[i] + y[i];
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = a * x[i] + y[i];
    }
    return out;
}

void axpy_inplace(double a, std::span<const double> x, std::span<double> y) {
    check_same(x.size(), y.size());
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (x.size() < kParallelCutoff) {
        for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) y[i] += a * x[i];
    }
}

std::vector<double> subtract(std::span<const double> x, std::span<const double> y) {
    check_same(x.size(), y.size());
    std::vector<double> out(x.size());
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (x.size() < kParallelCutoff) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
    }
    return out;
}

void scale_inplace(double a, std::span<double> x) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (x.size() < kParallelCutoff) {
        for (std::int64_t i = 0; i < n; ++i) x[i] *= a;
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) x[i] *= a;
    }
}

double l2_norm(std::span<const double> x) {
    const std::int64_t nchunks = static_cast<std::int64_t>((x.size() + kReduceChunk - 1) / kReduceChunk);
    if (x.size() < kParallelCutoff) return ref::l2_norm(x);
    std::vector<double> partials(nchunks);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < nchunks; ++c) {
        std::size_t begin = static_cast<std::size_t>(c) * kReduceChunk;
        partials[c] = chunk_sum_sq(x.data() + begin, std::min(kReduceChunk, x.size() - begin));
    }
    double total = 0.0;
    for (double p : partials) total += p;
    return std::sqrt(total);
}

double sum(std::span<const double> x) {
    const std::int64_t nchunks = static_cast<std::int64_t>((x.size() + kReduceChunk - 1) / kReduceChunk);
    if (x.size() < kParallelCutoff) return ref::sum(x);
    std::vector<double> partials(nchunks);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < nchunks; ++c) {
        std::size_t begin = static_cast<std::size_t>(c) * kReduceChunk;
        partials[c] = chunk_sum(x.data() + begin, std::min(kReduceChunk, x.size() - begin));
    }
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

}  // namespace ddl::core
