#pragma once

#include <string>

#include "ddl/config.hpp"

namespace ddl::harness {

struct ExperimentReport {
    std::string method;  // "decoupled" | "dp"
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double goodput = 1.0;
    double uptime = 1.0;
    double mean_admitted = 0.0;
    std::uint64_t rounds_completed = 0;
    std::uint64_t stalled_rounds = 0;
    std::uint64_t recoveries = 0;
    double virtual_seconds = 0.0;
    std::uint64_t global_checksum = 0;

    std::string to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// Full protocol run in deterministic mode; the loss is the held-out eval
/// loss of the final global model.
ExperimentReport run_decoupled(const ExperimentConfig& cfg,
                               runtime::SnapshotSink* sink = nullptr,
                               causality::Tape* tape_out = nullptr);

/// The data-parallel baseline at the same token budget.
ExperimentReport run_dp(const ExperimentConfig& cfg);

double eval_loss(const TaskSpec& task, const core::ParamStore& params);

}  // namespace ddl::harness
