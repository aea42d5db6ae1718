#include "ddl/bw/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ddl/errors.hpp"

namespace ddl::bw {

double ring_factor(std::uint32_t datacenters) {
    if (datacenters < 2) throw ConfigError("ring factor needs at least two datacenters");
    double d = static_cast<double>(datacenters);
    return 2.0 * (d - 1.0) / d;
}

namespace {

double payload_bits(const BandwidthQuery& q) {
    double bits = q.method == Method::kDp ? q.model_bits : q.fragment_bits;
    if (q.method == Method::kDecoupledInt4) bits /= 4.0;
    return bits * q.overhead;
}

}  // namespace

double compute_utilization(const BandwidthQuery& q) {
    if (q.bandwidth_bits_per_s <= 0.0) throw ConfigError("compute_utilization needs bandwidth > 0");
    if (q.step_time_s <= 0.0) throw ConfigError("compute_utilization needs step time > 0");
    double transfer_s = payload_bits(q) * ring_factor(q.datacenters) / q.bandwidth_bits_per_s;
    double comm_s = transfer_s;
    if (q.method != Method::kDp)
        comm_s = std::max(0.0, transfer_s - static_cast<double>(q.overlap) * q.step_time_s);
    return q.step_time_s / (q.step_time_s + comm_s);
}

double required_bandwidth(const BandwidthQuery& q, double target_cu) {
    if (q.step_time_s <= 0.0) throw ConfigError("required_bandwidth needs step time > 0");
    double bits = payload_bits(q) * ring_factor(q.datacenters);
    if (q.method == Method::kDp) {
        if (!(target_cu > 0.0 && target_cu < 1.0))
            throw ConfigError("data-parallel target utilization must be in (0, 1)");
        double comm_s = q.step_time_s * (1.0 - target_cu) / target_cu;
        return bits / comm_s;
    }
    if (!(target_cu > 0.0 && target_cu <= 1.0))
        throw ConfigError("decoupled target utilization must be in (0, 1]");
    double hidden_s = static_cast<double>(q.overlap) * q.step_time_s;
    if (target_cu == 1.0) return bits / hidden_s;
    double comm_s = q.step_time_s * (1.0 - target_cu) / target_cu;
    return bits / (hidden_s + comm_s);
}

std::string bw_table_csv(double model_bits, double fragment_bits, std::uint32_t sync_interval,
                         std::uint32_t overlap) {
    const double cus[] = {0.50, 0.75, 0.90, 0.95, 0.99};
    const double steps[] = {1.0, 5.0};
    const std::uint32_t dcs[] = {2, 8};
    std::ostringstream out;
    out << "step_s,datacenters,method,cu50,cu75,cu90,cu95,cu99\n";
    for (double step : steps) {
        for (std::uint32_t d : dcs) {
            for (Method method : {Method::kDp, Method::kDecoupled, Method::kDecoupledInt4}) {
                BandwidthQuery q;
                q.model_bits = model_bits;
                q.fragment_bits = fragment_bits;
                q.step_time_s = step;
                q.datacenters = d;
                q.method = method;
                q.sync_interval = sync_interval;
                q.overlap = overlap;
                const char* name = method == Method::kDp
                                       ? "dp"
                                       : (method == Method::kDecoupled ? "decoupled"
                                                                       : "decoupled_int4");
                out << step << ',' << d << ',' << name;
                for (double cu : cus) {
                    char cell[32];
                    std::snprintf(cell, sizeof(cell), ",%.6g",
                                  required_bandwidth(q, cu) / 1e9);
                    out << cell;
                }
                out << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace ddl::bw
