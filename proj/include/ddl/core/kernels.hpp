#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ddl::core {

// Element kernels shared by every module. Reductions accumulate per fixed
// 4096-element chunk and then fold the chunk partials in order, so the
// result is bit-identical for any thread count, including the serial
// reference below.
constexpr std::size_t kReduceChunk = 4096;

/// a*x + y elementwise into a fresh vector; inputs unmodified.
std::vector<double> axpy(double a, std::span<const double> x, std::span<const double> y);

/// y += a*x in place.
void axpy_inplace(double a, std::span<const double> x, std::span<double> y);

/// x - y elementwise.
std::vector<double> subtract(std::span<const double> x, std::span<const double> y);

void scale_inplace(double a, std::span<double> x);

double l2_norm(std::span<const double> x);

double sum(std::span<const double> x);

// Serial reference implementations, kept for testing and benchmarking the
// OpenMP kernels against. Same chunked reduction order.
namespace ref {
std::vector<double> axpy(double a, std::span<const double> x, std::span<const double> y);
void axpy_inplace(double a, std::span<const double> x, std::span<double> y);
std::vector<double> subtract(std::span<const double> x, std::span<const double> y);
void scale_inplace(double a, std::span<double> x);
double l2_norm(std::span<const double> x);
double sum(std::span<const double> x);
}  // namespace ref

}  // namespace ddl::core
