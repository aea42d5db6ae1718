#pragma once

#include <string>

#include "ddl/runtime/engine.hpp"

namespace ddl {

enum class PlanStrategy { kBalanced, kTensor, kLayer };

/// The whole experiment configuration, parsed from flat key=value text with
/// section prefixes. Unknown keys are rejected; every field has a default.
struct ExperimentConfig {
    harness::TaskSpec task;

    std::uint32_t learners = 4;       // runtime.learners
    std::uint32_t quorum = 1;         // runtime.quorum
    std::uint32_t sync_interval = 6;  // runtime.sync_interval
    std::uint32_t fragments = 6;      // runtime.fragments
    std::int32_t overlap = 2;         // runtime.overlap
    std::int64_t rounds = 200;        // runtime.rounds
    PlanStrategy strategy = PlanStrategy::kBalanced;
    double alpha = 0.0;
    double step_time_s = 0.1;
    double horizon_s = 0.0;
    double link_latency_s = 0.0;
    double link_bandwidth_bits = 0.0;  // 0 = infinite
    double peer_bandwidth_bits = 0.0;
    std::int64_t snapshot_interval = 0;
    std::string joins;   // "learner@seconds;..." scavenging arrivals
    std::string leaves;
    double pull_timeout_factor = 10.0;

    agg::MergeConfig merge;
    optim::InnerOptConfig inner;
    optim::OuterOptConfig outer;
    runtime::GraceConfig grace;

    bool chaos_enabled = false;
    chaos::ChaosConfig chaos;
    double repair_median_s = 600.0;

    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string mode = "det";  // det | live

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_text(const std::string& text);

    /// Normalized "key=value" lines of the effective configuration, sorted;
    /// the basis of the config hash and the replay guard.
    std::string canonical_text() const;
    std::uint64_t hash() const;

    void validate() const;
    frag::FragmentPlan build_plan() const;
    runtime::EngineConfig engine_config() const;
};

}  // namespace ddl
