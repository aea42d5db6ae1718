#pragma once

#include <map>
#include <optional>

#include "ddl/runtime/engine.hpp"

namespace ddl::runtime {

struct ReplayResult {
    core::ParamStore global;
    std::vector<core::ParamStore> learner_params;
    std::uint64_t events_processed = 0;
    std::uint64_t snapshots_seen = 0;
    bool crashed = false;  // stopped at the requested snapshot boundary

    std::uint64_t global_checksum() const { return core::checksum(global.all()); }
    std::vector<std::uint64_t> learner_checksums() const {
        std::vector<std::uint64_t> out;
        for (const auto& p : learner_params) out.push_back(core::checksum(p.all()));
        return out;
    }
};

/// Deterministic replay: the tape supplies every quorum decision, pull
/// anchor, apply point and failure; the driver recomputes the arithmetic
/// through the same worker code the recording run used. Bitwise-identical
/// parameters or a ReplayIntegrityError.
class ReplayDriver {
  public:
    ReplayDriver(const causality::Tape& tape, EngineConfig cfg);

    /// Full replay; optional snapshot persistence through `sink`.
    ReplayResult run(SnapshotSink* sink = nullptr);

    /// Replay that stops ("crashes") right after the n-th completed snapshot
    /// (1-based). Snapshot files up to that point are on disk.
    ReplayResult run_until_snapshot(int crash_after, SnapshotSink* sink);

    /// Continue a replay from a consistent snapshot: restores worker states
    /// and skips every event already inside the cut.
    ReplayResult resume(const resilience::SnapshotBundle& bundle, SnapshotSink* sink = nullptr);

  private:
    ReplayResult execute(SnapshotSink* sink, int crash_after,
                         const resilience::SnapshotBundle* bundle);

    const causality::Tape& tape_;
    EngineConfig cfg_;
};

/// Header guard: hash and shape must match the configuration exactly.
void validate_tape_header(const causality::TapeHeader& header, const EngineConfig& cfg);

}  // namespace ddl::runtime
