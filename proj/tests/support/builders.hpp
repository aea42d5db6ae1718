#pragma once

// Shared experiment-config builders for the runtime and resilience suites.

#include "ddl/config.hpp"

namespace builders {

/// Small MLP run: M learners, H = P fragments, tau = 2, zero-latency links.
inline ddl::ExperimentConfig mlp(std::uint32_t learners, std::uint32_t fragments,
                                 std::int64_t rounds, std::uint64_t seed) {
    ddl::ExperimentConfig cfg;
    cfg.task.family = ddl::harness::TaskFamily::kMlpClassifier;
    cfg.task.seed = seed;
    cfg.task.batch_examples = 8;
    cfg.learners = learners;
    cfg.task.shards = learners;
    cfg.quorum = 1;
    cfg.fragments = fragments;
    cfg.sync_interval = fragments;
    cfg.overlap = 2;
    cfg.rounds = rounds;
    cfg.step_time_s = 0.05;
    cfg.inner.lr = 2e-3;
    cfg.seed = seed;
    return cfg;
}

/// Chaos defaults matching the per-learner 150k-chip regime.
inline void add_chaos(ddl::ExperimentConfig& cfg, std::uint64_t chips_per_learner = 150'000) {
    cfg.chaos_enabled = true;
    cfg.chaos.n_chip = chips_per_learner * cfg.learners;
    cfg.chaos.chips_per_slice = 256;
    cfg.step_time_s = 5.0;
    cfg.chaos.downscale_s = 30.0;
    cfg.chaos.upscale_s = 30.0;
}

}  // namespace builders
