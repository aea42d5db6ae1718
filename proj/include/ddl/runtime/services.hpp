#pragma once

#include <cstdint>
#include <functional>

#include "ddl/causality/tape.hpp"
#include "ddl/runtime/message.hpp"

namespace ddl::runtime {

struct LinkModel {
    VirtualTime latency_ns = 0;
    double bandwidth_bits_per_s = 0.0;  // <= 0 means infinite

    VirtualTime transfer_ns(std::size_t payload_bits) const {
        VirtualTime t = latency_ns;
        if (bandwidth_bits_per_s > 0.0)
            t += static_cast<VirtualTime>(static_cast<double>(payload_bits) /
                                              bandwidth_bits_per_s * kNsPerSecond +
                                          0.5);
        return t;
    }
};

/// Persistence hook the resilience module supplies; workers hand over their
/// serialized state when marker logic fires. Null sink = checkpointing off.
class SnapshotSink {
  public:
    virtual ~SnapshotSink() = default;
    virtual void learner_checkpoint(WorkerId learner, std::int64_t snapshot_id,
                                    std::vector<std::uint8_t> state, std::uint64_t ckpt_seq) = 0;
    virtual void syncer_checkpoint(std::int64_t snapshot_id, std::vector<std::uint8_t> state) = 0;
    virtual void syncer_snapshot_complete(std::int64_t snapshot_id,
                                          const std::vector<WorkerId>& absent,
                                          const std::vector<Message>& in_flight) = 0;
};

// Event ordering phases within one virtual instant: deliveries and syncer
// machinery first, then pull answering from pre-drain state, then the
// learner drain that applies pending global fragments.
constexpr int kPhaseDeliver = 0;
constexpr int kPhaseAnswer = 1;
constexpr int kPhaseDrain = 2;

// Wake tokens.
constexpr std::uint64_t kTokenTick = 1;
constexpr std::uint64_t kTokenDrain = 2;
constexpr std::uint64_t kTokenAnswerPulls = 3;
constexpr std::uint64_t kTokenGraceExpiry = 4;
constexpr std::uint64_t kTokenPullTimeout = 5;

/// What a worker can do to the outside world. The deterministic engine and
/// the live (threaded) engine implement the same surface, so handler code is
/// identical in both modes.
class Services {
  public:
    virtual ~Services() = default;
    virtual VirtualTime now() const = 0;
    virtual void send(WorkerId to, Message msg) = 0;
    /// Wake `who` at `at` with a token; phase breaks ties within an instant.
    virtual void wake_at(WorkerId who, VirtualTime at, std::uint64_t token,
                         int phase = kPhaseDeliver) = 0;
    virtual void record(causality::TapeEvent event) = 0;
    virtual bool recording() const = 0;
    /// Sequence number the next recorded event will get (0 if not recording).
    virtual std::uint64_t next_record_seq() const = 0;
    /// Lowest-id currently healthy learner other than `requester`, or
    /// kNoWorker when none exists.
    virtual WorkerId pick_recovery_peer(WorkerId requester) = 0;
    virtual SnapshotSink* snapshot_sink() = 0;
};

constexpr WorkerId kNoWorker = 0xFFFF;

}  // namespace ddl::runtime
