#pragma once

#include "ddl/runtime/engine.hpp"

namespace ddl::runtime {

struct LiveResult {
    core::ParamStore global;
    std::vector<core::ParamStore> learner_params;
    std::vector<std::uint64_t> learner_ticks;
    SyncerStats syncer;
    causality::Tape tape;
    double wall_seconds = 0.0;
};

/// One thread per learner plus one for the syncer, FIFO channels, wall-clock
/// time. Same worker handler code as the deterministic engine; chaos is not
/// injected here (live chaos runs replay pre-generated tapes instead).
LiveResult run_live(const EngineConfig& cfg, SnapshotSink* sink = nullptr);

}  // namespace ddl::runtime
