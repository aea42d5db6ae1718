#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ddl/bw/bandwidth.hpp"
#include "ddl/errors.hpp"

using namespace ddl;
using bw::BandwidthQuery;
using bw::Method;

namespace {
BandwidthQuery base_query(Method method) {
    BandwidthQuery q;
    q.model_bits = 5e9 * 16;               // bf16-equivalent payload
    q.fragment_bits = q.model_bits / 24.0;  // balanced fragments at P = H = 24
    q.step_time_s = 1.0;
    q.datacenters = 2;
    q.method = method;
    q.sync_interval = 24;
    q.overlap = 2;
    return q;
}
}  // namespace

TEST_CASE("ring factor examples") {
    CHECK(bw::ring_factor(2) == 1.0);
    CHECK(bw::ring_factor(8) == 1.75);
    CHECK_THROWS_AS(bw::ring_factor(1), ConfigError);
}

TEST_CASE("decoupled transfers hidden under the overlap reach full utilization") {
    auto q = base_query(Method::kDecoupled);
    q.bandwidth_bits_per_s = q.fragment_bits;  // transfer takes 1 s <= tau * step
    CHECK(bw::compute_utilization(q) == 1.0);
    q.bandwidth_bits_per_s = q.fragment_bits / 10.0;  // 10 s transfer, 8 s exposed
    CHECK(bw::compute_utilization(q) == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("dp utilization scales with bandwidth and ring factor") {
    auto q = base_query(Method::kDp);
    q.bandwidth_bits_per_s = q.model_bits;  // 1 s comm at 2 DCs
    CHECK(bw::compute_utilization(q) == doctest::Approx(0.5));
    q.datacenters = 8;
    CHECK(bw::compute_utilization(q) == doctest::Approx(1.0 / 2.75));
}

TEST_CASE("required bandwidth inverts compute utilization to 1e-9") {
    for (Method method : {Method::kDp, Method::kDecoupled, Method::kDecoupledInt4}) {
        for (double target : {0.5, 0.75, 0.9, 0.99}) {
            auto q = base_query(method);
            q.bandwidth_bits_per_s = bw::required_bandwidth(q, target);
            CHECK(bw::compute_utilization(q) == doctest::Approx(target).epsilon(1e-9));
        }
    }
    auto q = base_query(Method::kDecoupled);
    double minimal = bw::required_bandwidth(q, 1.0);
    q.bandwidth_bits_per_s = minimal;
    CHECK(bw::compute_utilization(q) == 1.0);
    q.bandwidth_bits_per_s = minimal * 0.99;
    CHECK(bw::compute_utilization(q) < 1.0);
}

TEST_CASE("ring-factor ratio of dp requirements is exactly 1.75 at any target") {
    for (double target : {0.5, 0.9, 0.99}) {
        auto q2 = base_query(Method::kDp);
        auto q8 = base_query(Method::kDp);
        q8.datacenters = 8;
        CHECK(bw::required_bandwidth(q8, target) / bw::required_bandwidth(q2, target) == 1.75);
    }
}

TEST_CASE("dp needs at least H times the decoupled bandwidth at equal utilization") {
    for (double target : {0.5, 0.75, 0.9, 0.95, 0.99}) {
        auto dp = base_query(Method::kDp);
        auto dec = base_query(Method::kDecoupled);
        double ratio = bw::required_bandwidth(dp, target) / bw::required_bandwidth(dec, target);
        CHECK(ratio >= static_cast<double>(dp.sync_interval));
    }
}

TEST_CASE("int4 needs exactly a quarter of the uncompressed decoupled bandwidth") {
    for (double target : {0.5, 0.9, 0.99, 1.0}) {
        auto dec = base_query(Method::kDecoupled);
        auto int4 = base_query(Method::kDecoupledInt4);
        CHECK(bw::required_bandwidth(int4, target) ==
              bw::required_bandwidth(dec, target) / 4.0);
    }
}

TEST_CASE("utilization is monotone in bandwidth and step time") {
    auto q = base_query(Method::kDp);
    q.bandwidth_bits_per_s = 1e10;
    double base = bw::compute_utilization(q);
    q.bandwidth_bits_per_s = 2e10;
    CHECK(bw::compute_utilization(q) > base);
    q.step_time_s = 5.0;
    double at5s = bw::compute_utilization(q);
    q.step_time_s = 1.0;
    CHECK(at5s > bw::compute_utilization(q));
}

TEST_CASE("the table has four grids and three methods each") {
    auto csv = bw::bw_table_csv(5e9 * 16, 5e9 * 16 / 24.0, 24, 2);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);  // header + 4*3 rows
    CHECK(csv.find("decoupled_int4") != std::string::npos);
}
