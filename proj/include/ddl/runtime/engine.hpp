#pragma once

#include <functional>
#include <memory>
#include <string>

#include "ddl/chaos/chaos.hpp"
#include "ddl/resilience/snapshot.hpp"
#include "ddl/runtime/learner.hpp"
#include "ddl/runtime/syncer.hpp"

namespace ddl::runtime {

struct EngineConfig {
    harness::TaskSpec task;
    std::uint32_t learners = 1;   // M
    std::uint32_t quorum = 1;     // K
    std::uint32_t sync_interval = 1;  // H
    std::int32_t overlap = 2;     // tau
    std::int64_t rounds = 100;    // T
    frag::FragmentPlan plan;      // offsets assigned
    agg::MergeConfig merge;
    optim::InnerOptConfig inner;
    optim::OuterOptConfig outer;
    double alpha = 0.0;
    GraceConfig grace;
    chaos::ChaosConfig chaos;     // chaos.enabled gates failure injection
    LinkModel link;               // learner <-> syncer
    LinkModel peer_link;          // learner <-> learner recovery transfers
    std::uint64_t seed = 1;
    std::int64_t snapshot_interval = 0;
    double horizon_s = 0.0;       // 0 = run until the syncer finishes
    double pull_timeout_factor = 10.0;
    bool ml_enabled = true;       // false: protocol-only (synthetic tapes)
    bool record = false;
    std::string record_path;
    causality::TapeHeader tape_header;
    // scavenging schedule, times in virtual seconds
    std::vector<std::pair<std::uint32_t, double>> joins;
    std::vector<std::pair<std::uint32_t, double>> leaves;
};

struct RecoveryProbe {
    // peer state copy at transfer time, anchor, newcomer
    std::function<void(WorkerId newcomer, std::int64_t anchor, const core::ParamStore& peer_params,
                       std::vector<double> peer_m, std::vector<double> peer_v,
                       std::uint64_t peer_steps)>
        on_transfer;
    std::function<void(WorkerId newcomer, const core::ParamStore& adopted)> on_complete;
    LearnerWorker::CompletionProbe on_complete_detail;
};

struct EngineResult {
    core::ParamStore global;
    std::vector<core::ParamStore> learner_params;
    std::vector<std::uint64_t> learner_ticks;
    std::vector<std::uint64_t> expected_ticks;  // chaos-only pacing, no protocol
    SyncerStats syncer;
    chaos::GoodputMeter meter;
    causality::Tape tape;
    std::uint64_t max_pending_fragments = 0;
    std::uint64_t max_contribution_staleness = 0;
    std::vector<std::int64_t> recovery_first_staleness;
    std::uint64_t recoveries_completed = 0;
    VirtualTime virtual_end_ns = 0;

    double mean_admitted() const {
        return syncer.merges ? static_cast<double>(syncer.admitted_total) /
                                   static_cast<double>(syncer.merges)
                             : 0.0;
    }
};

/// Single-context discrete-event scheduler interleaving the same worker
/// handlers the live engine runs. All nondeterminism comes from named seeded
/// streams, so a (config, seed) pair fully determines the run.
class DetEngine {
  public:
    explicit DetEngine(EngineConfig cfg);
    ~DetEngine();

    /// Fresh run from initial parameters.
    EngineResult run(SnapshotSink* sink = nullptr, RecoveryProbe* probe = nullptr);

    /// Resume a crashed run from a consistent snapshot: workers restored,
    /// captured in-flight messages re-injected, absent learners recovered.
    EngineResult resume(const resilience::SnapshotBundle& bundle, SnapshotSink* sink = nullptr,
                        RecoveryProbe* probe = nullptr);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ddl::runtime
