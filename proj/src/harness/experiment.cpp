#include "ddl/harness/experiment.hpp"

#include <sstream>

#include <json.hpp>

namespace ddl::harness {

using nlohmann::json;

std::string ExperimentReport::to_json() const {
    json j;
    j["method"] = method;
    j["seed"] = seed;
    j["final_loss"] = final_loss;
    j["goodput"] = goodput;
    j["uptime"] = uptime;
    j["mean_admitted"] = mean_admitted;
    j["rounds_completed"] = rounds_completed;
    j["stalled_rounds"] = stalled_rounds;
    j["recoveries"] = recoveries;
    j["virtual_seconds"] = virtual_seconds;
    j["global_checksum"] = global_checksum;
    return j.dump(2);
}

std::string ExperimentReport::csv_header() {
    return "method,seed,final_loss,goodput,uptime,mean_admitted,rounds_completed,"
           "stalled_rounds,recoveries,virtual_seconds,global_checksum";
}

std::string ExperimentReport::csv_row() const {
    std::ostringstream out;
    out << method << ',' << seed << ',' << final_loss << ',' << goodput << ',' << uptime << ','
        << mean_admitted << ',' << rounds_completed << ',' << stalled_rounds << ',' << recoveries
        << ',' << virtual_seconds << ',' << global_checksum;
    return out.str();
}

double eval_loss(const TaskSpec& task, const core::ParamStore& params) {
    return loss(task, params, eval_batch(task));
}

ExperimentReport run_decoupled(const ExperimentConfig& cfg, runtime::SnapshotSink* sink,
                               causality::Tape* tape_out) {
    auto ec = cfg.engine_config();
    ec.record = tape_out != nullptr || ec.record;
    runtime::DetEngine engine(ec);
    auto result = engine.run(sink);

    ExperimentReport report;
    report.method = "decoupled";
    report.seed = cfg.seed;
    report.final_loss = eval_loss(ec.task, result.global);
    report.goodput = cfg.chaos_enabled ? result.meter.goodput() : 1.0;
    report.uptime = cfg.chaos_enabled ? result.meter.uptime() : 1.0;
    report.mean_admitted = result.mean_admitted();
    report.rounds_completed = result.syncer.rounds_completed;
    report.stalled_rounds = result.syncer.stalled_rounds;
    report.recoveries = result.recoveries_completed;
    report.virtual_seconds = runtime::ns_to_seconds(result.virtual_end_ns);
    report.global_checksum = core::checksum(result.global.all());
    if (tape_out) *tape_out = std::move(result.tape);
    return report;
}

ExperimentReport run_dp(const ExperimentConfig& cfg) {
    TaskSpec task = cfg.task;
    task.shards = cfg.learners;
    auto params = run_dp_reference(task, static_cast<std::uint64_t>(cfg.rounds), cfg.inner);

    ExperimentReport report;
    report.method = "dp";
    report.seed = cfg.seed;
    report.final_loss = eval_loss(task, params);
    report.rounds_completed = static_cast<std::uint64_t>(cfg.rounds);
    report.global_checksum = core::checksum(params.all());
    if (cfg.chaos_enabled) {
        auto meter = chaos::dp_elastic_baseline(cfg.engine_config().chaos,
                                                static_cast<std::uint64_t>(cfg.rounds), cfg.seed);
        report.goodput = meter.goodput();
        report.uptime = meter.uptime();
    }
    return report;
}

}  // namespace ddl::harness
