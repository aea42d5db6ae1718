#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "ddl/agg/aggregate.hpp"
#include "ddl/frag/plan.hpp"
#include "ddl/harness/task.hpp"
#include "ddl/optim/optimizers.hpp"
#include "ddl/runtime/services.hpp"

namespace ddl::runtime {

struct LearnerConfig {
    WorkerId id = 0;
    WorkerId syncer = 0;
    harness::TaskSpec task;
    optim::InnerOptConfig inner;
    double alpha = 0.0;  // interpolation on fragment receipt
    const frag::FragmentPlan* plan = nullptr;
    std::int64_t snapshot_interval = 0;  // T_c in syncer steps, 0 = off
    std::int64_t recovery_budget = 0;    // H
    bool start_recovering = false;       // scavenged joiners recover first
};

/// One learner: inner optimization on its own shard, per-fragment counters,
/// fragment application, snapshot-marker handling and the recovery protocol.
/// The same instance runs under the deterministic engine, the live engine
/// and the tape replay driver.
class LearnerWorker {
  public:
    enum class Mode { kActive, kAwaitingAnchor, kAwaitingTransfer };

    explicit LearnerWorker(LearnerConfig cfg);

    // -- Algorithm-1 loop body, split into engine-driven phases ------------
    /// Inner optimization and metadata send. Returns tokens consumed.
    std::uint64_t tick(Services& svc, double capacity_scale);
    /// Same control flow without the ML arithmetic; drives synthetic tapes.
    std::uint64_t tick_protocol_only(Services& svc, double capacity_scale);
    /// Apply all pending global fragments (and snapshot markers) in order.
    void drain(Services& svc);
    /// Answer queued fragment pulls from the current (pre-drain) state.
    void answer_pulls(Services& svc);

    void on_message(Services& svc, Message msg);
    void on_wake(Services& svc, std::uint64_t token);

    /// Full failure: model and optimizer state are lost, the local step
    /// counter survives with the worker identity.
    void crash(Services& svc);

    // -- replay-path state surgery (same arithmetic as the live path) ------
    std::uint64_t replay_step(std::uint64_t tokens);
    void replay_apply(Services& svc, std::int64_t round, std::uint32_t fragment,
                      std::span<const double> values);
    agg::LearnerContribution replay_pull(std::uint32_t fragment) const;
    void replay_adopt(const RecoveryPayloadMsg& payload);
    RecoveryPayloadMsg replay_serve(std::int64_t anchor) const;
    void replay_crash();

    // -- state access -------------------------------------------------------
    Mode mode() const { return mode_; }
    WorkerId id() const { return cfg_.id; }
    Step local_step() const { return t_m_; }
    std::int64_t t_global_known() const { return t_global_known_; }
    const core::ParamStore& params() const { return theta_; }
    core::ParamStore& params() { return theta_; }
    const causality::VectorClock& vclock() const { return vclock_; }
    std::uint64_t counters_steps(std::size_t p) const { return c_steps_[p]; }
    std::uint64_t counters_tokens(std::size_t p) const { return c_tokens_[p]; }
    std::int64_t last_applied_round(std::size_t p) const { return last_applied_round_[p]; }
    std::size_t pending_fragments() const { return pending_.size(); }
    std::uint64_t checkpoint_count() const { return checkpoints_taken_; }
    std::int64_t recovery_anchor() const { return recovery_anchor_; }

    std::vector<std::uint8_t> serialize_state(std::uint64_t ckpt_seq) const;
    void restore_state(std::span<const std::uint8_t> blob);

    /// Test/probe hook: observes the state a recovery transfer ships.
    using TransferProbe =
        std::function<void(WorkerId newcomer, std::int64_t anchor, const core::ParamStore& params,
                           std::vector<double> opt_m, std::vector<double> opt_v,
                           std::uint64_t opt_steps)>;
    const TransferProbe* recovery_transfer_probe = nullptr;

    /// Fired when a recovery completes: the adopted payload, the buffered
    /// broadcasts replayed onto it, and the resulting state.
    using CompletionProbe = std::function<void(WorkerId id, const RecoveryPayloadMsg& payload,
                                               const std::vector<Message>& buffered,
                                               const core::ParamStore& adopted)>;
    const CompletionProbe* recovery_completion_probe = nullptr;

  private:
    void do_inner_step(std::uint64_t step, std::size_t examples);
    void apply_global_fragment(Services& svc, const GlobalFragmentMsg& msg);
    void observe_syncer_step(Services& svc, Step syncer_step);
    void send_metadata(Services& svc);
    void begin_recovery(Services& svc, const GlobalFragmentMsg& first);
    void finish_recovery(Services& svc, const RecoveryPayloadMsg& payload);
    void try_serve_recovery(Services& svc);
    Message stamped(Payload payload);

    LearnerConfig cfg_;
    Mode mode_ = Mode::kActive;

    core::ParamStore theta_;
    optim::InnerOpt inner_;
    Step t_m_ = 0;
    std::int64_t t_global_known_ = 0;
    std::vector<std::uint64_t> c_steps_;
    std::vector<std::uint64_t> c_tokens_;
    std::vector<std::int64_t> last_applied_round_;
    causality::VectorClock vclock_;

    std::deque<Message> pending_;       // undrained global fragments
    std::deque<Message> pending_pulls_;

    // recovery (newcomer side)
    std::int64_t recovery_anchor_ = -1;
    WorkerId recovery_peer_ = kNoWorker;
    std::vector<Message> recovery_buffer_;
    std::uint32_t recovery_attempts_ = 0;
    // recovery (peer side)
    std::vector<std::pair<WorkerId, std::int64_t>> pending_recovery_requests_;

    // snapshot markers
    std::int64_t last_marker_ = 0;
    std::uint64_t checkpoints_taken_ = 0;
};

}  // namespace ddl::runtime
