// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ddl/bw/bandwidth.hpp"
#include "ddl/core/kernels.hpp"
#include "ddl/config.hpp"
#include "ddl/harness/experiment.hpp"
#include "ddl/runtime/replay.hpp"
#include "../support/builders.hpp"
#include "../support/oracles.hpp"

using namespace ddl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Check {
    Outcome outcome;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            outcome.pass = false;
            if (!outcome.detail.empty()) outcome.detail += "; ";
            outcome.detail += what;
        }
    }
    void note(const std::string& info) {
        if (outcome.detail.empty()) outcome.detail = info;
    }
};

double rel_gap(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

// --- 1. record/replay determinism under chaos --------------------------------

Outcome criterion_determinism() {
    Check c;
    auto cfg = builders::mlp(2, 4, 50, 1001);
    builders::add_chaos(cfg);
    cfg.chaos.jitter_frac = 0.1;
    auto ec = cfg.engine_config();
    ec.record = true;
    runtime::DetEngine engine(ec);
    auto recorded = engine.run();
    c.require(recorded.syncer.rounds_completed == 50, "run did not complete 50 rounds");

    runtime::ReplayDriver driver(recorded.tape, cfg.engine_config());
    auto replayed = driver.run();
    c.require(core::checksum(recorded.global.all()) == replayed.global_checksum(),
              "global parameters diverged");
    auto sums = replayed.learner_checksums();
    for (std::size_t m = 0; m < 2; ++m)
        c.require(core::checksum(recorded.learner_params[m].all()) == sums[m],
                  "learner " + std::to_string(m) + " diverged");
    std::ostringstream info;
    info << recorded.tape.events.size() << " events, checksums equal";
    c.note(info.str());
    return c.outcome;
}

// --- 2. degenerate equivalences ----------------------------------------------

Outcome criterion_degenerate() {
    Check c;

    // (a) M=1, H=P=1, mu=0, eta=1, alpha=0 against plain inner training
    ExperimentConfig cfg;
    cfg.task.family = harness::TaskFamily::kLinearRegression;
    cfg.task.seed = 2002;
    cfg.task.lin_dim = 16;
    cfg.task.lin_shard_samples = 32;
    cfg.task.batch_examples = 32;
    cfg.learners = 1;
    cfg.task.shards = 1;
    cfg.quorum = 1;
    cfg.fragments = 1;
    cfg.sync_interval = 1;
    cfg.overlap = 2;
    cfg.rounds = 300;
    cfg.step_time_s = 0.01;
    cfg.inner.kind = optim::InnerKind::kSgd;
    cfg.inner.lr = 0.05;
    cfg.outer.lr = 1.0;
    cfg.outer.momentum = 0.0;
    cfg.grace.enabled = false;
    cfg.seed = 2002;
    runtime::DetEngine engine(cfg.engine_config());
    auto dec = engine.run();

    core::ParamStore plain = harness::init_params(cfg.task);
    core::ParamStore grad(harness::model_tensors(cfg.task));
    optim::InnerOpt inner(cfg.inner, plain.size());
    for (std::uint64_t k = 1; k <= 300; ++k) {
        auto batch = harness::sample_batch(cfg.task, 0, k, cfg.task.batch_examples);
        harness::loss_and_grad(cfg.task, plain, batch, grad);
        inner.step(plain.all(), grad.all());
    }
    c.require(dec.learner_ticks[0] == 300, "learner step count off: " +
                                               std::to_string(dec.learner_ticks[0]));
    c.require(core::checksum(dec.learner_params[0].all()) == core::checksum(plain.all()),
              "(a) learner != plain inner-optimizer training bitwise");
    c.require(core::checksum(dec.global.all()) == core::checksum(plain.all()),
              "(a) global != plain inner-optimizer training bitwise");

    // (b) K=M, tau=0, no chaos against a blocking fragment-wise loop
    auto bcfg = builders::mlp(3, 4, 40, 2003);
    bcfg.quorum = 3;
    bcfg.overlap = 0;
    bcfg.grace.enabled = false;
    runtime::DetEngine bengine(bcfg.engine_config());
    auto bdec = bengine.run();

    oracles::BlockingReference ref;
    ref.task = bcfg.task;
    ref.task.shards = 3;
    auto plan = bcfg.build_plan();
    ref.plan = &plan;
    ref.merge = bcfg.merge;
    ref.inner_cfg = bcfg.inner;
    ref.outer_cfg = bcfg.outer;
    ref.alpha = bcfg.alpha;
    std::vector<core::ParamStore> ref_learners;
    auto ref_global = ref.run(40, &ref_learners);
    c.require(core::checksum(bdec.global.all()) == core::checksum(ref_global.all()),
              "(b) global != blocking reference bitwise");
    for (std::size_t m = 0; m < 3; ++m)
        c.require(core::checksum(bdec.learner_params[m].all()) ==
                      core::checksum(ref_learners[m].all()),
                  "(b) learner " + std::to_string(m) + " != blocking reference");
    c.note("both equivalences bitwise");
    return c.outcome;
}

// --- 3. snapshot / resume ----------------------------------------------------

Outcome criterion_snapshot_resume() {
    Check c;
    auto cfg = builders::mlp(2, 4, 40, 3001);
    cfg.snapshot_interval = 8;  // rounds 8,16,24,32,40: five snapshots
    cfg.chaos.jitter_frac = 0.1;
    auto ec = cfg.engine_config();
    ec.record = true;
    runtime::DetEngine engine(ec);
    auto recorded = engine.run();

    std::string root = "/tmp/ddl_acceptance_snapshots";
    fs::remove_all(root);
    resilience::DirectorySink sink(root, cfg.hash());
    runtime::ReplayDriver full(recorded.tape, cfg.engine_config());
    auto uninterrupted = full.run(&sink);
    c.require(uninterrupted.snapshots_seen == 5,
              "expected 5 snapshots, saw " + std::to_string(uninterrupted.snapshots_seen));

    for (int k = 1; k <= 5 && c.outcome.pass; ++k) {
        std::string crash_root = root + "_k" + std::to_string(k);
        fs::remove_all(crash_root);
        resilience::DirectorySink crash_sink(crash_root, cfg.hash());
        runtime::ReplayDriver crashing(recorded.tape, cfg.engine_config());
        auto partial = crashing.run_until_snapshot(k, &crash_sink);
        c.require(partial.crashed, "crash point " + std::to_string(k) + " not reached");

        auto bundle = resilience::load_latest_snapshot(crash_root);
        runtime::ReplayDriver resuming(recorded.tape, cfg.engine_config());
        auto resumed = resuming.resume(bundle);
        c.require(resumed.global_checksum() == uninterrupted.global_checksum(),
                  "global diverged after crash at snapshot " + std::to_string(k));
        c.require(resumed.learner_checksums() == uninterrupted.learner_checksums(),
                  "learners diverged after crash at snapshot " + std::to_string(k));
        fs::remove_all(crash_root);
    }
    fs::remove_all(root);
    c.note("5 crash points, all bitwise equal");
    return c.outcome;
}

// --- 4. recovery bound -------------------------------------------------------

Outcome criterion_recovery() {
    Check c;
    std::uint64_t recoveries = 0;
    std::uint64_t shadow_checked = 0;
    std::int64_t max_staleness = 0;
    runtime::RecoveryProbe probe;

    for (std::uint64_t seed : {4001u, 4002u, 4003u, 4004u}) {
        auto cfg = builders::mlp(4, 4, 100000, seed);
        cfg.task.batch_examples = 4;
        cfg.step_time_s = 0.5;
        cfg.horizon_s = 700.0;
        cfg.rounds = 1'000'000;
        auto ec = cfg.engine_config();
        ec.chaos.enabled = true;
        ec.chaos.n_chip = 4 * 256;      // one slice per learner
        ec.chaos.mtbi_chip_s = 1e18;    // no slice failures
        ec.chaos.crash_rate_per_s = 1.0 / 60.0;  // frequent full crashes
        auto plan = cfg.build_plan();

        std::uint64_t seed_shadow_fail = 0;
        probe.on_complete_detail = [&](runtime::WorkerId,
                                       const runtime::RecoveryPayloadMsg& payload,
                                       const std::vector<runtime::Message>& buffered,
                                       const core::ParamStore& adopted) {
            core::ParamStore shadow = adopted;
            std::copy(payload.params.begin(), payload.params.end(), shadow.all().begin());
            for (const auto& msg : buffered) {
                const auto& frag = std::get<runtime::GlobalFragmentMsg>(msg.payload);
                ddl::frag::write_fragment(shadow, plan, frag.fragment, frag.values);
            }
            if (core::checksum(shadow.all()) != core::checksum(adopted.all()))
                ++seed_shadow_fail;
            ++shadow_checked;
        };

        runtime::DetEngine engine(ec);
        auto result = engine.run(nullptr, &probe);
        recoveries += result.recoveries_completed;
        for (auto s : result.recovery_first_staleness) max_staleness = std::max(max_staleness, s);
        c.require(seed_shadow_fail == 0, "shadow-learner mismatch in seed " + std::to_string(seed));
    }
    c.require(recoveries >= 100,
              "only " + std::to_string(recoveries) + " recovery events (need 100)");
    c.require(max_staleness <= 4, "first-contribution staleness " +
                                      std::to_string(max_staleness) + " exceeds H=4");
    std::ostringstream info;
    info << recoveries << " recoveries, " << shadow_checked
         << " shadow checks, max first-contribution staleness " << max_staleness;
    c.note(info.str());
    return c.outcome;
}

// --- 5. goodput table --------------------------------------------------------

Outcome criterion_goodput_table() {
    Check c;
    chaos::ChaosConfig base;  // 1-year MTBI, 30 s reconfig, 10-minute repair median
    std::vector<std::uint32_t> ms = {1, 2, 4, 8, 16};
    std::vector<std::uint64_t> chips = {150'000, 300'000, 600'000, 1'200'000, 2'400'000};
    std::uint64_t steps = 100'000;
    auto cells = chaos::goodput_table(base, ms, chips, steps, 9091);

    auto find = [&](std::uint32_t m, std::uint64_t n, bool elastic) -> const chaos::TableCell& {
        for (const auto& cell : cells)
            if (cell.learners == m && cell.n_chip == n && cell.elastic == elastic) return cell;
        throw std::logic_error("cell missing");
    };

    double g_8_12 = find(8, 1'200'000, true).goodput * 100.0;
    c.require(std::fabs(g_8_12 - 88.0) <= 5.0,
              "M=8/1.2m goodput " + std::to_string(g_8_12) + "% not within 88 +/- 5");
    double g_rigid = find(1, 150'000, false).goodput * 100.0;
    c.require(std::fabs(g_rigid - 72.0) <= 5.0,
              "no-elasticity M=1/150k goodput " + std::to_string(g_rigid) + "% not within 72 +/- 5");

    double worst_diag = 0.0;
    for (std::size_t i = 0; i + 1 < ms.size(); ++i) {
        for (std::size_t j = 0; j + 1 < chips.size(); ++j) {
            double a = find(ms[i], chips[j], true).goodput;
            double b = find(ms[i + 1], chips[j + 1], true).goodput;
            worst_diag = std::max(worst_diag, std::fabs(a - b) * 100.0);
        }
    }
    c.require(worst_diag <= 3.0,
              "diagonal rule violated: " + std::to_string(worst_diag) + " points");

    double worst_uptime = 1.0;
    for (std::uint32_t m : {4u, 8u, 16u})
        for (std::uint64_t n : chips) worst_uptime = std::min(worst_uptime, find(m, n, true).uptime);
    c.require(worst_uptime >= 0.99, "uptime for M >= 4 dropped to " + std::to_string(worst_uptime));

    std::ostringstream info;
    info.precision(3);
    info << "M=8/1.2m " << g_8_12 << "%, rigid " << g_rigid << "%, diag " << worst_diag
         << "pt, min uptime(M>=4) " << worst_uptime * 100 << "%";
    c.note(info.str());
    return c.outcome;
}

// --- 6. merge math -----------------------------------------------------------

Outcome criterion_merge_math() {
    Check c;
    rng::Stream s(606, "acceptance.merge");
    // equal-norm random inputs: output norm R to machine precision
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t dim = 8 + s.next_below(64);
        std::size_t m_count = 2 + s.next_below(7);
        double target = std::exp(2.0 * s.next_normal());
        std::vector<agg::LearnerContribution> contribs;
        std::vector<double> weights;
        std::vector<double> zero(dim, 0.0);
        for (std::size_t m = 0; m < m_count; ++m) {
            std::vector<double> delta(dim);
            for (auto& v : delta) v = s.next_normal();
            double norm = core::l2_norm(delta);
            for (auto& v : delta) v = -(v / norm * target);
            agg::LearnerContribution lc;
            lc.learner_id = static_cast<std::uint16_t>(m);
            lc.theta_frag = delta;
            lc.c_steps = 1;
            lc.c_tokens = 1;
            contribs.push_back(std::move(lc));
            weights.push_back(0.25 + s.next_unit());
        }
        // inputs constructed with norm exactly... up to rounding; measure it
        double measured = core::l2_norm(agg::outer_gradient(zero, contribs[0].theta_frag));
        auto out = agg::merge_rda(contribs, weights, zero);
        c.require(rel_gap(core::l2_norm(out), measured) < 1e-9,
                  "rda norm drifted beyond machine precision");
    }
    // orthonormal inputs: norm ratio rda/avg = sqrt(M) within 1e-9
    for (std::size_t m_count : {2u, 4u, 8u, 16u}) {
        std::vector<agg::LearnerContribution> contribs;
        std::vector<double> weights(m_count, 1.0);
        std::vector<double> zero(m_count, 0.0);
        for (std::size_t m = 0; m < m_count; ++m) {
            std::vector<double> frag(m_count, 0.0);
            frag[m] = -1.0;
            agg::LearnerContribution lc;
            lc.learner_id = static_cast<std::uint16_t>(m);
            lc.theta_frag = frag;
            lc.c_steps = 1;
            lc.c_tokens = 1;
            contribs.push_back(std::move(lc));
        }
        double ratio = core::l2_norm(agg::merge_rda(contribs, weights, zero)) /
                       core::l2_norm(agg::merge_avg(contribs, weights, zero));
        c.require(std::fabs(ratio - std::sqrt(double(m_count))) < 1e-9,
                  "rda:avg ratio off at M=" + std::to_string(m_count));
    }
    c.note("norm invariance and sqrt(M) ratios hold");
    return c.outcome;
}

// --- 7. bin packing ----------------------------------------------------------

Outcome criterion_bin_packing() {
    Check c;
    rng::Stream s(707, "acceptance.packing");
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t bins = 2 + s.next_below(3);
        std::size_t n = bins + s.next_below(12 - bins + 1);
        std::vector<core::TensorSpec> model;
        std::vector<std::uint64_t> sizes;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t size = 1 + s.next_below(64);
            sizes.push_back(size);
            model.push_back({"t" + std::to_string(i), size, core::TensorKind::kOther, -1});
        }
        auto plan = frag::plan_balanced(model, bins);
        auto greedy = static_cast<double>(plan.max_load(model));
        auto optimal = static_cast<double>(oracles::brute_force_optimal_load(sizes, bins));
        double bound = 4.0 / 3.0 - 1.0 / (3.0 * static_cast<double>(bins));
        worst = std::max(worst, greedy / optimal);
        c.require(greedy <= bound * optimal + 1e-9,
                  "greedy exceeded the bound on trial " + std::to_string(trial));
    }
    std::ostringstream info;
    info.precision(4);
    info << "200 instances, worst greedy/optimal ratio " << worst;
    c.note(info.str());
    return c.outcome;
}

// --- 8. ml parity ------------------------------------------------------------

Outcome criterion_ml_parity() {
    Check c;
    std::ostringstream info;
    info.precision(3);
    for (std::uint64_t seed : {8101u, 8102u, 8103u, 8104u, 8105u}) {
        auto cfg = builders::mlp(4, 6, 400, seed);
        cfg.task.batch_examples = 16;
        cfg.inner.lr = 3e-3;

        auto dp = harness::run_dp(cfg);
        auto dec = harness::run_decoupled(cfg);
        double clean_gap = rel_gap(dec.final_loss, dp.final_loss);
        c.require(clean_gap <= 0.05, "seed " + std::to_string(seed) + ": no-chaos gap " +
                                         std::to_string(clean_gap) + " > 5%");

        auto chaotic_cfg = cfg;
        builders::add_chaos(chaotic_cfg, 150'000);
        auto chaotic = harness::run_decoupled(chaotic_cfg);
        double chaos_gap = rel_gap(chaotic.final_loss, dp.final_loss);
        c.require(chaos_gap <= 0.10, "seed " + std::to_string(seed) + ": chaos gap " +
                                         std::to_string(chaos_gap) + " > 10%");

        auto baseline = chaos::dp_elastic_baseline(chaotic_cfg.engine_config().chaos,
                                                   20'000, seed);
        c.require(chaotic.goodput > baseline.goodput(),
                  "seed " + std::to_string(seed) + ": goodput " +
                      std::to_string(chaotic.goodput) + " not above the elastic baseline " +
                      std::to_string(baseline.goodput()));
        info << " s" << seed << ":" << clean_gap * 100 << "%/" << chaos_gap * 100 << "%";
    }
    c.note("gaps per seed (clean/chaos):" + info.str());
    return c.outcome;
}

// --- 9. grace window ---------------------------------------------------------

Outcome criterion_grace() {
    Check c;
    auto base = builders::mlp(4, 4, 1'000'000, 9001);
    base.task.batch_examples = 4;
    base.chaos.learner_speed = {1.0, 1.18, 1.0, 1.18};  // two hardware classes
    base.chaos.jitter_frac = 0.1;
    base.step_time_s = 0.05;
    base.horizon_s = 30.0;

    auto no_grace = base;
    no_grace.grace.enabled = false;
    runtime::DetEngine e1(no_grace.engine_config());
    auto r1 = e1.run();

    auto with_grace = base;
    with_grace.grace.enabled = true;
    runtime::DetEngine e2(with_grace.engine_config());
    auto r2 = e2.run();

    c.require(r2.mean_admitted() >= 1.5 * r1.mean_admitted(),
              "grace mean admitted " + std::to_string(r2.mean_admitted()) + " < 1.5 x " +
                  std::to_string(r1.mean_admitted()));
    std::uint64_t idle_violations = 0;
    for (std::size_t m = 0; m < 4; ++m) {
        if (r1.learner_ticks[m] != r1.expected_ticks[m]) ++idle_violations;
        if (r2.learner_ticks[m] != r2.expected_ticks[m]) ++idle_violations;
    }
    c.require(idle_violations == 0, "syncer-induced learner idle detected");
    std::ostringstream info;
    info.precision(3);
    info << "mean admitted " << r1.mean_admitted() << " -> " << r2.mean_admitted()
         << ", zero induced idle";
    c.note(info.str());
    return c.outcome;
}

// --- 10. bandwidth calculator --------------------------------------------------

Outcome criterion_bandwidth() {
    Check c;
    bw::BandwidthQuery q;
    q.model_bits = 5e9 * 16;
    q.fragment_bits = q.model_bits / 24.0;
    q.step_time_s = 1.0;
    q.sync_interval = 24;
    q.overlap = 2;

    for (double target : {0.5, 0.75, 0.9, 0.95, 0.99}) {
        auto dp2 = q;
        dp2.method = bw::Method::kDp;
        auto dp8 = dp2;
        dp8.datacenters = 8;
        c.require(bw::required_bandwidth(dp8, target) / bw::required_bandwidth(dp2, target) ==
                      1.75,
                  "8-DC/2-DC ratio not exactly 1.75");

        auto dec = q;
        dec.method = bw::Method::kDecoupled;
        c.require(bw::required_bandwidth(dp2, target) / bw::required_bandwidth(dec, target) >=
                      24.0,
                  "dp/decoupled ratio below H at cu=" + std::to_string(target));

        auto int4 = q;
        int4.method = bw::Method::kDecoupledInt4;
        c.require(bw::required_bandwidth(int4, target) ==
                      bw::required_bandwidth(dec, target) / 4.0,
                  "int4 requirement not exactly a quarter");
    }
    c.note("ring ratio exact, dp/decoupled >= H, int4 = f64/4 exact");
    return c.outcome;
}

// --- 11. quantizer -------------------------------------------------------------

Outcome criterion_quantizer() {
    Check c;
    rng::Stream s(1111, "acceptance.quant");
    for (int trial = 0; trial < 10'000; ++trial) {
        std::size_t dim = 1 + s.next_below(48);
        std::vector<double> x(dim);
        double magnitude = std::exp(4.0 * s.next_normal());
        for (auto& v : x) v = magnitude * s.next_normal();
        auto q = agg::quantize_int4(x);
        auto dq = agg::dequantize_int4(q);
        for (std::size_t i = 0; i < dim; ++i)
            if (std::fabs(dq[i] - x[i]) > q.scale / 2) {
                c.require(false, "round-trip error above scale/2 on trial " +
                                     std::to_string(trial));
                return c.outcome;
            }
    }
    c.note("10000 fragments within scale/2");
    return c.outcome;
}

}  // namespace

int main() {
    using CriterionFn = std::function<Outcome()>;
    std::vector<std::pair<std::string, CriterionFn>> criteria = {
        {"determinism: record/replay bitwise under chaos", criterion_determinism},
        {"degenerate equivalences (plain inner training; blocking loop)", criterion_degenerate},
        {"snapshot/resume bitwise at every boundary", criterion_snapshot_resume},
        {"recovery bound and shadow equivalence over 100+ events", criterion_recovery},
        {"goodput table: pinned cells, diagonal rule, uptime", criterion_goodput_table},
        {"merge math: rda norm invariance and sqrt(M) ratio", criterion_merge_math},
        {"bin packing within (4/3 - 1/(3P)) of optimal on 200 instances", criterion_bin_packing},
        {"ml parity: decoupled vs dp within 5%/10%, goodput above baseline", criterion_ml_parity},
        {"grace window: 1.5x admitted, zero induced idle", criterion_grace},
        {"bandwidth calculator: exact ratios", criterion_bandwidth},
        {"quantizer round-trip within scale/2 on 10^4 fragments", criterion_quantizer},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration_cast<std::chrono::duration<double>>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        std::printf("[%s] criterion %2zu: %s (%.2fs)%s%s\n", outcome.pass ? "PASS" : "FAIL",
                    i + 1, criteria[i].first.c_str(), secs, outcome.detail.empty() ? "" : " - ",
                    outcome.detail.c_str());
        if (!outcome.pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
