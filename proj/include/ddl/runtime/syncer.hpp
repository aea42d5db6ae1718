#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ddl/agg/aggregate.hpp"
#include "ddl/frag/plan.hpp"
#include "ddl/harness/task.hpp"
#include "ddl/optim/optimizers.hpp"
#include "ddl/runtime/grace.hpp"
#include "ddl/runtime/services.hpp"

namespace ddl::runtime {

struct SyncerConfig {
    WorkerId id = 0;
    std::uint32_t learners = 1;  // M; learner ids are 0..M-1
    std::uint32_t quorum = 1;    // K
    std::int32_t overlap = 2;    // tau
    std::int64_t rounds = 0;     // T
    const frag::FragmentPlan* plan = nullptr;
    agg::MergeConfig merge;
    optim::OuterOptConfig outer;
    GraceConfig grace;
    harness::TaskSpec task;
    double pull_timeout_factor = 10.0;
    std::int64_t snapshot_interval = 0;  // T_c, 0 = off
    double initial_step_ema_s = 1.0;
};

struct SyncerStats {
    std::uint64_t rounds_completed = 0;
    std::uint64_t merges = 0;
    std::uint64_t admitted_total = 0;
    std::uint64_t stalled_rounds = 0;
    std::uint64_t snapshots_begun = 0;
    std::uint64_t snapshots_completed = 0;
    std::uint64_t in_flight_captured = 0;
};

/// The sharded syncer, collapsed to one logical worker whose merge reduces
/// per-shard partial sums in shard-id order. Maintains global params,
/// per-fragment outer optimizers, quorum/grace admission and the
/// marker-based snapshot protocol.
class SyncerWorker {
  public:
    explicit SyncerWorker(SyncerConfig cfg);

    void start(Services& svc);
    void on_message(Services& svc, Message msg);
    void on_wake(Services& svc, std::uint64_t token);

    bool done() const { return t_ > cfg_.rounds; }
    std::int64_t round() const { return t_; }
    const core::ParamStore& params() const { return theta_; }
    core::ParamStore& params() { return theta_; }
    const causality::VectorClock& vclock() const { return vclock_; }
    const SyncerStats& stats() const { return stats_; }
    double ema_step_s() const { return ema_step_; }

    /// Called after every merged round with (round, fragment, contributors).
    std::function<void(std::int64_t, std::uint32_t, const std::vector<agg::LearnerContribution>&)>
        on_round_complete;

    // -- replay surgery: same merge/outer arithmetic, decisions from tape ---
    std::vector<double> replay_round(std::int64_t round, std::uint32_t fragment,
                                     const std::vector<agg::LearnerContribution>& contribs);
    /// Position the syncer step for snapshot serialization during replay.
    void replay_round_marker(std::int64_t round) {
        t_ = round;
        vclock_.advance(cfg_.id, static_cast<Step>(round));
    }

    std::vector<std::uint8_t> serialize_state() const;
    void restore_state(std::span<const std::uint8_t> blob);
    void resume_at(Services& svc, std::int64_t round);
    /// End-of-run sweep for a snapshot still waiting on dead learners.
    void finalize_if_pending(Services& svc) { try_finalize_snapshot(svc); }

    bool embedding_fragment(std::uint32_t p) const { return embedding_fragment_[p]; }

  private:
    enum class Phase { kIdle, kCollect, kGrace, kPull };

    void open_round(Services& svc);
    void check_quorum(Services& svc);
    void close_quorum(Services& svc);
    void complete_round(Services& svc);
    std::vector<WorkerId> eligible_learners() const;
    void maybe_begin_snapshot(Services& svc);
    void snapshot_bookkeeping(Services& svc, const Message& msg);
    void try_finalize_snapshot(Services& svc);
    Message stamped(Payload payload);

    SyncerConfig cfg_;
    core::ParamStore theta_;
    std::vector<optim::OuterOpt> outer_;
    std::vector<bool> embedding_fragment_;
    std::int64_t t_ = 1;
    causality::VectorClock vclock_;
    SyncerStats stats_;

    struct MetaEntry {
        bool valid = false;
        Step t_m = 0;
        std::int64_t known_syncer = 0;
        VirtualTime recv_ns = 0;
        VirtualTime prev_recv_ns = -1;
        std::vector<std::uint64_t> c_steps;
        std::vector<std::uint64_t> c_tokens;
    };
    std::vector<MetaEntry> meta_;

    Phase phase_ = Phase::kIdle;
    std::int32_t frag_ = -1;
    VirtualTime round_open_ns_ = 0;
    VirtualTime quorum_ns_ = 0;
    VirtualTime close_ns_ = 0;
    std::vector<WorkerId> admitted_;
    std::vector<std::optional<agg::LearnerContribution>> pulls_;
    bool require_new_metadata_ = false;

    double ema_step_ = 0.0;
    double ema_quorum_ = 0.0;
    double ema_sync_ = 0.0;
    bool ema_step_init_ = false;
    bool ema_quorum_init_ = false;
    bool ema_sync_init_ = false;

    // snapshot protocol
    std::int64_t snapshot_in_progress_ = -1;
    std::int64_t last_snapshot_ = 0;
    std::vector<bool> marker_returned_;
    std::vector<Message> in_flight_;
};

}  // namespace ddl::runtime
