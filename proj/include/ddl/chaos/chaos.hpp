#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddl/causality/rng.hpp"

namespace ddl::chaos {

struct ChaosConfig {
    bool enabled = true;
    double mtbi_chip_s = 31'536'000.0;  // 1 year
    std::uint64_t n_chip = 1'200'000;
    std::uint64_t chips_per_slice = 256;
    double downscale_s = 30.0;  // learner-wide stall per failure burst
    double upscale_s = 30.0;    // returning-slice warmup occupation
    // Exponentiated Weibull repair: F(x) = (1 - exp(-(x/scale)^k))^alpha.
    // Defaults give a 10-minute median.
    double repair_alpha = 2.0;
    double repair_k = 1.5;
    double repair_scale_s = 523.17;

    // Speed model: per-learner base multiplier applied to the step time,
    // plus uniform per-step jitter of +/- jitter_frac.
    double base_step_s = 5.0;
    std::vector<double> learner_speed;  // empty = all 1.0
    double jitter_frac = 0.0;

    // Full learner crashes (state loss, recovered via a peer).
    double crash_rate_per_s = 0.0;

    std::uint64_t slices_per_learner(std::uint64_t learners) const {
        return n_chip / (learners * chips_per_slice);
    }
    double speed_of(std::size_t m) const {
        return m < learner_speed.size() ? learner_speed[m] : 1.0;
    }
};

struct GoodputMeter {
    double useful_slice_time = 0.0;
    double allocated_slice_time = 0.0;
    double stepping_time = 0.0;
    double wall_time = 0.0;

    double goodput() const { return allocated_slice_time > 0 ? useful_slice_time / allocated_slice_time : 1.0; }
    double uptime() const { return wall_time > 0 ? stepping_time / wall_time : 1.0; }
};

/// MTBF_cluster = MTBI_chip / N_chip.
double cluster_mtbf(double mtbi_chip_s, std::uint64_t n_chip);

/// Simulated chips/slices per learner with failure bookkeeping.
struct ClusterState {
    enum class SliceStatus : std::uint8_t { kUp, kFailed, kWarming };

    ClusterState() = default;
    ClusterState(std::uint32_t learners, std::uint64_t slices_per_learner);

    std::uint32_t learners = 0;
    std::uint64_t slices_per_learner = 0;
    std::vector<SliceStatus> status;       // learner-major slice index
    std::vector<std::uint64_t> up_count;   // per learner

    std::uint64_t total_slices() const { return status.size(); }
    std::uint32_t learner_of(std::uint64_t slice) const {
        return static_cast<std::uint32_t>(slice / slices_per_learner);
    }
    void mark_failed(std::uint64_t slice);
    void mark_warming(std::uint64_t slice);
    void mark_up(std::uint64_t slice);
};

struct SliceFailure {
    std::uint64_t slice = 0;
    double at_offset_s = 0.0;   // arrival offset inside the sampled window
    double repair_s = 0.0;      // exponentiated-Weibull repair delay
};

/// Poisson(dt / MTBF_cluster) failures mapped onto uniformly chosen up
/// slices, each with a repair delay drawn from the exponentiated Weibull.
std::vector<SliceFailure> sample_failures(ClusterState& state, double dt_s, double mtbf_s,
                                          rng::Stream& stream);

/// Effective slices / nominal slices for learner m, in [0, 1].
double effective_batch_scale(const ClusterState& state, std::uint32_t m);

/// Per-learner stall/capacity/crash timeline for the training engine. All
/// times in virtual nanoseconds.
struct LearnerTimeline {
    struct Interval {
        std::int64_t begin_ns = 0;
        std::int64_t end_ns = 0;
    };
    std::vector<Interval> stalls;                              // merged, sorted
    std::vector<std::pair<std::int64_t, double>> capacity;    // (from, scale), sorted
    std::vector<std::int64_t> crashes_ns;                     // full state-loss events

    double capacity_at(std::int64_t t_ns) const;
    // Earliest un-stalled instant >= t.
    std::int64_t clear_of_stalls(std::int64_t t_ns) const;
};

/// One chaos realization for M learners over the horizon.
std::vector<LearnerTimeline> build_timelines(const ChaosConfig& cfg, std::uint32_t learners,
                                             double horizon_s, std::uint64_t seed);

/// Meter a decoupled M-learner cell: each failure stalls only its learner
/// for downscale_s (concurrent failures are absorbed into the running
/// reconfiguration); repaired slices warm up for upscale_s without stalling
/// peers. Uptime counts base-step windows in which at least one learner was
/// stepping.
GoodputMeter simulate_decoupled_cell(const ChaosConfig& cfg, std::uint32_t learners,
                                     std::uint64_t steps, std::uint64_t seed);

/// The M=1 monolith. elastic=true matches the decoupled single-learner
/// semantics. elastic=false models restart-per-failure: every failure
/// enqueues a serialized full-cluster outage of downscale_s + upscale_s.
GoodputMeter simulate_monolith(const ChaosConfig& cfg, std::uint64_t steps, std::uint64_t seed,
                               bool elastic);

/// dp_elastic_baseline of the experiment harness.
GoodputMeter dp_elastic_baseline(const ChaosConfig& cfg, std::uint64_t steps, std::uint64_t seed);

struct UpsizeDowntime {
    double dp_s = 0.0;
    double diloco_s = 0.0;
};

/// Replica-upsize downtime: data-parallel pays the transfer of three model
/// copies up front; the decoupled path hides it under H steps.
UpsizeDowntime upsize_downtime(double model_bytes, double bandwidth_bits_per_s, double step_time_s,
                               std::uint64_t sync_interval);

struct TableCell {
    std::uint32_t learners = 0;
    std::uint64_t n_chip = 0;
    bool elastic = true;
    double goodput = 0.0;
    double uptime = 0.0;
};

/// The goodput/uptime grid across M x N_chip, including the no-elasticity
/// M=1 row. Cells run in parallel; each cell is independently seeded.
std::vector<TableCell> goodput_table(const ChaosConfig& base, const std::vector<std::uint32_t>& ms,
                                     const std::vector<std::uint64_t>& chips, std::uint64_t steps,
                                     std::uint64_t seed);

std::string table_to_csv(const std::vector<TableCell>& cells);

}  // namespace ddl::chaos
