#pragma once

#include <cstdint>
#include <string>

namespace ddl::bw {

enum class Method { kDp, kDecoupled, kDecoupledInt4 };

struct BandwidthQuery {
    double model_bits = 0.0;
    double fragment_bits = 0.0;  // peak fragment payload
    double step_time_s = 1.0;    // T_math
    std::uint32_t datacenters = 2;
    double bandwidth_bits_per_s = 0.0;
    Method method = Method::kDp;
    std::uint32_t sync_interval = 24;  // H
    std::uint32_t overlap = 2;         // tau
    double overhead = 1.0;             // protocol overhead multiplier
};

/// Ring all-reduce traffic factor 2(D-1)/D.
double ring_factor(std::uint32_t datacenters);

/// T_math / (T_math + T_comm). Data-parallel moves the whole model every
/// step; the decoupled path moves one fragment hidden under tau compute
/// steps; int4 divides the payload bits by 4.
double compute_utilization(const BandwidthQuery& q);

/// Inverse of compute_utilization in the bandwidth argument. For the
/// decoupled methods a target of 1.0 returns the minimal bandwidth that
/// fully hides the transfer under the overlap window.
double required_bandwidth(const BandwidthQuery& q, double target_cu);

/// Four CSV grids (step 1 s / 5 s x 2 / 8 datacenters), methods as rows and
/// target utilizations as columns, bandwidths in Gbit/s.
std::string bw_table_csv(double model_bits, double fragment_bits, std::uint32_t sync_interval,
                         std::uint32_t overlap);

}  // namespace ddl::bw
