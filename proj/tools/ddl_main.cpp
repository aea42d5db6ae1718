#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ddl/bw/bandwidth.hpp"
#include "ddl/config.hpp"
#include "ddl/errors.hpp"
#include "ddl/harness/experiment.hpp"
#include "ddl/log.hpp"
#include "ddl/runtime/live.hpp"
#include "ddl/runtime/replay.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::int64_t seed_override = -1;
    std::string out_dir;
};

ddl::ExperimentConfig load_config(const CommonOpts& opts) {
    auto cfg = ddl::ExperimentConfig::parse_file(opts.config_path);
    if (opts.seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
        cfg.task.seed = cfg.seed;
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

void write_report(const ddl::ExperimentConfig& cfg, const ddl::harness::ExperimentReport& report) {
    fs::create_directories(cfg.out_dir);
    std::string stem = cfg.out_dir + "/report_" + report.method + "_" + std::to_string(report.seed);
    {
        std::ofstream out(stem + ".json");
        out << report.to_json() << '\n';
    }
    {
        std::ofstream out(stem + ".csv");
        auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
        out << "# generated_ms=" << wall << '\n';
        out << ddl::harness::ExperimentReport::csv_header() << '\n';
        out << report.csv_row() << '\n';
    }
    std::cout << report.to_json() << std::endl;
}

int cmd_train(const CommonOpts& opts, const std::string& method, const std::string& record_path,
              const std::string& mode_override) {
    auto cfg = load_config(opts);
    if (!mode_override.empty()) cfg.mode = mode_override;

    if (method == "dp") {
        write_report(cfg, ddl::harness::run_dp(cfg));
        return 0;
    }

    if (cfg.mode == "live") {
        auto ec = cfg.engine_config();
        ec.record = !record_path.empty();
        ec.record_path = record_path;
        auto result = ddl::runtime::run_live(ec);
        ddl::harness::ExperimentReport report;
        report.method = "decoupled";
        report.seed = cfg.seed;
        report.final_loss = ddl::harness::eval_loss(ec.task, result.global);
        report.rounds_completed = result.syncer.rounds_completed;
        report.mean_admitted = result.syncer.merges
                                   ? static_cast<double>(result.syncer.admitted_total) /
                                         static_cast<double>(result.syncer.merges)
                                   : 0.0;
        report.global_checksum = ddl::core::checksum(result.global.all());
        write_report(cfg, report);
        return 0;
    }

    auto ec = cfg.engine_config();
    ec.record = !record_path.empty();
    ec.record_path = record_path;
    ddl::runtime::DetEngine engine(ec);
    auto result = engine.run();

    ddl::harness::ExperimentReport report;
    report.method = "decoupled";
    report.seed = cfg.seed;
    report.final_loss = ddl::harness::eval_loss(ec.task, result.global);
    report.goodput = cfg.chaos_enabled ? result.meter.goodput() : 1.0;
    report.uptime = cfg.chaos_enabled ? result.meter.uptime() : 1.0;
    report.mean_admitted = result.mean_admitted();
    report.rounds_completed = result.syncer.rounds_completed;
    report.stalled_rounds = result.syncer.stalled_rounds;
    report.recoveries = result.recoveries_completed;
    report.virtual_seconds = ddl::runtime::ns_to_seconds(result.virtual_end_ns);
    report.global_checksum = ddl::core::checksum(result.global.all());
    write_report(cfg, report);
    return 0;
}

int cmd_tape_replay(const CommonOpts& opts, const std::string& tape_path) {
    auto cfg = load_config(opts);
    auto tape = ddl::causality::Tape::load(tape_path);
    ddl::runtime::ReplayDriver driver(tape, cfg.engine_config());
    auto result = driver.run();
    std::cout << "{\n  \"global_checksum\": " << result.global_checksum()
              << ",\n  \"learner_checksums\": [";
    auto sums = result.learner_checksums();
    for (std::size_t i = 0; i < sums.size(); ++i) std::cout << (i ? ", " : "") << sums[i];
    std::cout << "],\n  \"events\": " << result.events_processed << "\n}" << std::endl;
    return 0;
}

int cmd_tape_synth(const CommonOpts& opts, const std::string& out_path) {
    auto cfg = load_config(opts);
    auto ec = cfg.engine_config();
    ec.ml_enabled = false;
    ec.record = true;
    ec.record_path = out_path;
    ddl::runtime::DetEngine engine(ec);
    auto result = engine.run();
    std::cout << "{ \"events\": " << result.tape.events.size()
              << ", \"rounds\": " << result.syncer.rounds_completed
              << ", \"goodput\": " << result.meter.goodput()
              << ", \"uptime\": " << result.meter.uptime() << " }" << std::endl;
    return 0;
}

int cmd_chaos_table(std::uint64_t steps, std::uint64_t seed, double mtbi_years, double step_s,
                    const std::string& out_path) {
    ddl::chaos::ChaosConfig base;
    base.mtbi_chip_s = mtbi_years * 31'536'000.0;
    base.base_step_s = step_s;
    std::vector<std::uint32_t> ms = {1, 2, 4, 8, 16};
    std::vector<std::uint64_t> chips = {150'000, 300'000, 600'000, 1'200'000, 2'400'000};
    auto cells = ddl::chaos::goodput_table(base, ms, chips, steps, seed);
    auto csv = ddl::chaos::table_to_csv(cells);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
        std::cout << "wrote " << out_path << std::endl;
    }
    return 0;
}

int cmd_bw_table(double model_bits, double fragment_bits, std::uint32_t sync_interval,
                 std::uint32_t overlap, const std::string& out_path) {
    if (fragment_bits <= 0.0) fragment_bits = model_bits / static_cast<double>(sync_interval);
    auto csv = ddl::bw::bw_table_csv(model_bits, fragment_bits, sync_interval, overlap);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
        std::cout << "wrote " << out_path << std::endl;
    }
    return 0;
}

int cmd_plan_inspect(const CommonOpts& opts, const std::string& strategy) {
    auto cfg = load_config(opts);
    if (strategy == "balanced")
        cfg.strategy = ddl::PlanStrategy::kBalanced;
    else if (strategy == "tensor")
        cfg.strategy = ddl::PlanStrategy::kTensor;
    else if (strategy == "layer")
        cfg.strategy = ddl::PlanStrategy::kLayer;
    else if (!strategy.empty())
        throw ddl::ConfigError("strategy must be balanced, tensor or layer");
    auto model = ddl::harness::model_tensors(cfg.task);
    auto plan = cfg.build_plan();
    std::cout << ddl::frag::serialize_plan(plan, model);
    std::cout << "# max fragment load: " << plan.max_load(model) << " elements\n";
    return 0;
}

int cmd_ckpt_resume(const CommonOpts& opts, const std::string& dir, const std::string& tape_path,
                    std::int64_t snapshot_id) {
    auto cfg = load_config(opts);
    auto bundle = snapshot_id >= 0 ? ddl::resilience::load_snapshot(dir, snapshot_id)
                                   : ddl::resilience::load_latest_snapshot(dir);
    auto ec = cfg.engine_config();
    if (bundle.config_hash != ec.tape_header.config_hash)
        throw ddl::SnapshotIntegrityError("snapshot was taken under a different configuration");

    if (!tape_path.empty()) {
        auto tape = ddl::causality::Tape::load(tape_path);
        ddl::runtime::ReplayDriver driver(tape, std::move(ec));
        auto result = driver.resume(bundle);
        std::cout << "{ \"resumed_from\": " << bundle.snapshot_id
                  << ", \"global_checksum\": " << result.global_checksum() << " }" << std::endl;
        return 0;
    }
    ddl::runtime::DetEngine engine(std::move(ec));
    auto result = engine.resume(bundle);
    ddl::harness::ExperimentReport report;
    report.method = "decoupled";
    report.seed = cfg.seed;
    report.final_loss = ddl::harness::eval_loss(cfg.engine_config().task, result.global);
    report.rounds_completed = result.syncer.rounds_completed;
    report.global_checksum = ddl::core::checksum(result.global.all());
    write_report(cfg, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asynchronous fragment-synchronized training testbed"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string method = "decoupled";
    std::string record_path;
    std::string mode_override;
    std::string tape_path;
    std::string out_path;
    std::string strategy;
    std::string ckpt_dir;
    std::int64_t snapshot_id = -1;
    std::uint64_t steps = 100'000;
    std::uint64_t table_seed = 7;
    double mtbi_years = 1.0;
    double step_s = 5.0;
    double model_bits = 5e9 * 16;
    double fragment_bits = 0.0;
    std::uint32_t bw_h = 24, bw_tau = 2;

    auto add_common = [&](CLI::App* cmd, bool config_required = true) {
        auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
        if (config_required) c->required();
        cmd->add_option("--seed", opts.seed_override, "seed override");
        cmd->add_option("--out", opts.out_dir, "output directory");
    };

    auto* train = app.add_subcommand("train", "run an experiment and write its report");
    add_common(train);
    train->add_option("--method", method, "decoupled | dp")->check(CLI::IsMember({"decoupled", "dp"}));
    train->add_option("--record", record_path, "record the event tape to this path");
    train->add_option("--mode", mode_override, "det | live")->check(CLI::IsMember({"det", "live"}));

    auto* tape = app.add_subcommand("tape", "record, replay and synthesize event tapes");
    auto* tape_replay = tape->add_subcommand("replay", "deterministically re-execute a tape");
    add_common(tape_replay);
    tape_replay->add_option("--tape", tape_path, "tape file")->required();
    auto* tape_synth = tape->add_subcommand("synth", "generate a synthetic tape from the chaos model");
    add_common(tape_synth);
    tape_synth->add_option("--tape-out", out_path, "output tape path")->required();

    auto* chaos_cmd = app.add_subcommand("chaos", "failure-model tables");
    auto* chaos_table = chaos_cmd->add_subcommand("table", "goodput/uptime grid across M x N_chip");
    chaos_table->add_option("--steps", steps, "virtual steps per cell");
    chaos_table->add_option("--seed", table_seed, "grid seed");
    chaos_table->add_option("--mtbi-years", mtbi_years, "per-chip mean time between interruptions");
    chaos_table->add_option("--step-s", step_s, "virtual step duration in seconds");
    chaos_table->add_option("--out", out_path, "CSV path (stdout if omitted)");

    auto* bw_cmd = app.add_subcommand("bw", "bandwidth calculator");
    auto* bw_table = bw_cmd->add_subcommand("table", "required bandwidth per compute-utilization target");
    bw_table->add_option("--model-bits", model_bits, "model payload in bits");
    bw_table->add_option("--fragment-bits", fragment_bits, "peak fragment bits (default model/H)");
    bw_table->add_option("--sync-interval", bw_h, "H");
    bw_table->add_option("--overlap", bw_tau, "tau");
    bw_table->add_option("--out", out_path, "CSV path (stdout if omitted)");

    auto* plan_cmd = app.add_subcommand("plan", "fragmentation plans");
    auto* plan_inspect = plan_cmd->add_subcommand("inspect", "print a plan, one line per fragment");
    add_common(plan_inspect);
    plan_inspect->add_option("--strategy", strategy, "balanced | tensor | layer");

    auto* ckpt = app.add_subcommand("ckpt", "consistent snapshots");
    auto* ckpt_resume = ckpt->add_subcommand("resume", "resume a run from a snapshot directory");
    add_common(ckpt_resume);
    ckpt_resume->add_option("--dir", ckpt_dir, "snapshot root directory")->required();
    ckpt_resume->add_option("--tape", tape_path, "tape for bitwise continuation");
    ckpt_resume->add_option("--snapshot", snapshot_id, "snapshot id (default: latest)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opts, method, record_path, mode_override);
        if (tape_replay->parsed()) return cmd_tape_replay(opts, tape_path);
        if (tape_synth->parsed()) return cmd_tape_synth(opts, out_path);
        if (chaos_table->parsed())
            return cmd_chaos_table(steps, table_seed, mtbi_years, step_s, out_path);
        if (bw_table->parsed())
            return cmd_bw_table(model_bits, fragment_bits, bw_h, bw_tau, out_path);
        if (plan_inspect->parsed()) return cmd_plan_inspect(opts, strategy);
        if (ckpt_resume->parsed())
            return cmd_ckpt_resume(opts, ckpt_dir, tape_path, snapshot_id);
        std::cerr << "no subcommand selected" << std::endl;
        return 2;
    } catch (const ddl::ReplayIntegrityError& e) {
        std::cerr << "replay integrity error: " << e.what();
        if (e.offending_seq >= 0) std::cerr << " (seq " << e.offending_seq << ")";
        std::cerr << std::endl;
        return 3;
    } catch (const ddl::SnapshotIntegrityError& e) {
        std::cerr << "snapshot integrity error: " << e.what() << std::endl;
        return 4;
    } catch (const ddl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
