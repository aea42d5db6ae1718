#include "ddl/runtime/replay.hpp"

#include <algorithm>

#include "ddl/core/bytes.hpp"

#include "ddl/errors.hpp"
#include "ddl/log.hpp"

namespace ddl::runtime {

namespace {

/// Minimal service surface for tape-driven execution: no time, no sends, a
/// live snapshot sink and the tape cursor as the checkpoint sequence.
class ReplayServices final : public Services {
  public:
    VirtualTime now() const override { return 0; }
    void send(WorkerId, Message) override {}
    void wake_at(WorkerId, VirtualTime, std::uint64_t, int) override {}
    void record(causality::TapeEvent) override {}
    bool recording() const override { return false; }
    std::uint64_t next_record_seq() const override { return seq_; }
    WorkerId pick_recovery_peer(WorkerId) override { return kNoWorker; }
    SnapshotSink* snapshot_sink() override { return sink_; }

    SnapshotSink* sink_ = nullptr;
    std::uint64_t seq_ = 0;
};

}  // namespace

void validate_tape_header(const causality::TapeHeader& header, const EngineConfig& cfg) {
    if (header.config_hash != cfg.tape_header.config_hash)
        throw ReplayIntegrityError("tape config hash does not match the configuration");
    if (header.learners != cfg.learners || header.quorum != cfg.quorum ||
        header.sync_interval != cfg.sync_interval ||
        header.fragments != cfg.plan.fragment_count() ||
        header.overlap != static_cast<std::uint32_t>(cfg.overlap))
        throw ReplayIntegrityError("tape shape (M/K/H/P/tau) does not match the configuration");
}

ReplayDriver::ReplayDriver(const causality::Tape& tape, EngineConfig cfg)
    : tape_(tape), cfg_(std::move(cfg)) {
    validate_tape_header(tape_.header, cfg_);
}

ReplayResult ReplayDriver::run(SnapshotSink* sink) { return execute(sink, -1, nullptr); }

ReplayResult ReplayDriver::run_until_snapshot(int crash_after, SnapshotSink* sink) {
    return execute(sink, crash_after, nullptr);
}

ReplayResult ReplayDriver::resume(const resilience::SnapshotBundle& bundle, SnapshotSink* sink) {
    return execute(sink, -1, &bundle);
}

ReplayResult ReplayDriver::execute(SnapshotSink* sink, int crash_after,
                                   const resilience::SnapshotBundle* bundle) {
    using causality::EventKind;

    ReplayServices svc;
    svc.sink_ = sink;

    LearnerConfig lc;
    lc.syncer = static_cast<WorkerId>(cfg_.learners);
    lc.task = cfg_.task;
    lc.inner = cfg_.inner;
    lc.alpha = cfg_.alpha;
    lc.plan = &cfg_.plan;
    lc.snapshot_interval = cfg_.snapshot_interval;
    lc.recovery_budget = cfg_.sync_interval;
    std::vector<std::unique_ptr<LearnerWorker>> learners;
    for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
        lc.id = static_cast<WorkerId>(m);
        learners.push_back(std::make_unique<LearnerWorker>(lc));
    }

    SyncerConfig sc;
    sc.id = static_cast<WorkerId>(cfg_.learners);
    sc.learners = cfg_.learners;
    sc.quorum = cfg_.quorum;
    sc.overlap = cfg_.overlap;
    sc.rounds = cfg_.rounds;
    sc.plan = &cfg_.plan;
    sc.merge = cfg_.merge;
    sc.outer = cfg_.outer;
    sc.grace = cfg_.grace;
    sc.task = cfg_.task;
    sc.snapshot_interval = cfg_.snapshot_interval;
    SyncerWorker syncer(sc);

    // Resume bookkeeping: events already inside the cut are skipped.
    std::vector<std::uint64_t> skip_below(cfg_.learners, 0);
    std::int64_t resume_round = -1;
    if (bundle) {
        syncer.restore_state(bundle->syncer_state);
        resume_round = bundle->snapshot_id;
        for (const auto& [m, blob] : bundle->learner_states) {
            learners[m]->restore_state(blob);
            core::ByteReader r(blob);
            r.u16();
            r.u64();
            r.i64();
            skip_below[m] = r.u64();  // ckpt_seq recorded at checkpoint time
        }
        std::uint64_t end_seq = 0;
        for (const auto& ev : tape_.events)
            if (ev.kind == EventKind::kSnapshotEnd && ev.anchor == bundle->snapshot_id)
                end_seq = ev.seq;
        for (WorkerId m : bundle->absent) {
            learners[m]->replay_crash();
            skip_below[m] = end_seq;
        }
    }

    // Per-round contribution staging (keyed for idempotent re-staging on
    // resume), pending recovery transfers, and computed broadcasts.
    std::map<std::int64_t, std::map<WorkerId, agg::LearnerContribution>> staged;
    std::map<std::pair<WorkerId, std::int64_t>, RecoveryPayloadMsg> transfers;
    std::map<std::int64_t, std::pair<std::uint32_t, std::vector<double>>> broadcasts;

    // While a snapshot is open, every pull or transfer whose sender had not
    // yet seen the marker belongs to the cut, exactly like the live
    // in-flight capture. Persisted at snapshot end.
    const WorkerId syncer_id = static_cast<WorkerId>(cfg_.learners);
    std::int64_t capture_anchor = -1;
    std::map<std::pair<std::int64_t, WorkerId>, agg::LearnerContribution> captured_pulls;
    std::map<std::pair<WorkerId, std::int64_t>, RecoveryPayloadMsg> captured_serves;

    if (bundle) {
        // In-flight state captured by the cut: pull answers already sent but
        // not merged, and recovery transfers not yet adopted.
        for (const auto& msg : bundle->in_flight) {
            if (msg.kind() == MsgKind::kFragmentPayload) {
                const auto& p = std::get<FragmentPayloadMsg>(msg.payload);
                agg::LearnerContribution c;
                c.learner_id = msg.sender;
                c.fragment_id = p.fragment;
                c.c_steps = p.c_steps;
                c.c_tokens = p.c_tokens;
                c.theta_frag = p.values;
                staged[p.round][msg.sender] = std::move(c);
            } else if (msg.kind() == MsgKind::kRecoveryPayload) {
                const auto& p = std::get<RecoveryPayloadMsg>(msg.payload);
                transfers[{msg.sender, p.anchor}] = p;
            }
        }
    }

    ReplayResult result;
    for (const auto& ev : tape_.events) {
        svc.seq_ = ev.seq;
        bool is_learner = ev.worker < cfg_.learners;
        if (bundle) {
            if (is_learner && ev.seq < skip_below[ev.worker]) continue;
            if (!is_learner && ev.kind == EventKind::kQuorumClose && ev.round < resume_round)
                continue;
            if (!is_learner &&
                (ev.kind == EventKind::kSnapshotBegin || ev.kind == EventKind::kSnapshotEnd) &&
                ev.anchor <= resume_round)
                continue;
            // Contributions for rounds before the cut never merge again.
            if (is_learner && ev.kind == EventKind::kFragmentPull && ev.round < resume_round)
                continue;
        }
        ++result.events_processed;

        switch (ev.kind) {
            case EventKind::kStep: {
                auto& learner = *learners[ev.worker];
                if (learner.local_step() + 1 != ev.local_step)
                    throw ReplayIntegrityError("step event references unknown step", ev.seq);
                learner.replay_step(ev.tokens);
                break;
            }
            case EventKind::kMetadataRecv:
                break;
            case EventKind::kFragmentPull: {
                auto& learner = *learners[ev.worker];
                if (learner.local_step() != ev.local_step)
                    throw ReplayIntegrityError("pull event at mismatched learner step", ev.seq);
                auto c = learner.replay_pull(static_cast<std::uint32_t>(ev.fragment));
                if (c.c_steps != ev.c_steps || c.c_tokens != ev.c_tokens)
                    throw ReplayIntegrityError("pull counters diverged from the recording",
                                               ev.seq);
                if (capture_anchor >= 0 &&
                    ev.vclock.get(syncer_id) < static_cast<causality::Step>(capture_anchor))
                    captured_pulls[{ev.round, ev.worker}] = c;
                staged[ev.round][ev.worker] = std::move(c);
                break;
            }
            case EventKind::kQuorumClose: {
                auto it = staged.find(ev.round);
                if (it == staged.end() || it->second.empty())
                    throw ReplayIntegrityError("quorum close without staged contributions",
                                               ev.seq);
                std::vector<agg::LearnerContribution> contribs;
                for (auto& [who, c] : it->second) contribs.push_back(std::move(c));
                staged.erase(it);
                // Mirror the live round: zero-progress pulls never merge.
                std::erase_if(contribs, [](const agg::LearnerContribution& c) {
                    return c.c_steps == 0 || c.c_tokens == 0;
                });
                std::vector<WorkerId> ids;
                for (const auto& c : contribs) ids.push_back(c.learner_id);
                auto admitted = ev.admitted;
                std::sort(admitted.begin(), admitted.end());
                if (ids != admitted)
                    throw ReplayIntegrityError("merged learner set diverged from the recording",
                                               ev.seq);
                auto values = syncer.replay_round(ev.round,
                                                  static_cast<std::uint32_t>(ev.fragment),
                                                  contribs);
                broadcasts[ev.round] = {static_cast<std::uint32_t>(ev.fragment),
                                        std::move(values)};
                break;
            }
            case EventKind::kFragmentApply: {
                auto it = broadcasts.find(ev.round);
                if (it == broadcasts.end())
                    throw ReplayIntegrityError("apply references an unmerged round", ev.seq);
                if (it->second.first != static_cast<std::uint32_t>(ev.fragment))
                    throw ReplayIntegrityError("apply fragment does not match the round", ev.seq);
                learners[ev.worker]->replay_apply(svc, ev.round,
                                                  static_cast<std::uint32_t>(ev.fragment),
                                                  it->second.second);
                break;
            }
            case EventKind::kFailure:
                if (ev.detail == "crash") learners[ev.worker]->replay_crash();
                break;
            case EventKind::kRecovery: {
                if (ev.detail == "serve") {
                    auto& peer = *learners[ev.worker];
                    if (peer.local_step() != ev.peer_step)
                        throw ReplayIntegrityError("recovery peer at mismatched step", ev.seq);
                    auto payload = peer.replay_serve(ev.anchor);
                    if (capture_anchor >= 0 &&
                        ev.vclock.get(syncer_id) < static_cast<causality::Step>(capture_anchor))
                        captured_serves[{ev.peer, ev.anchor}] = payload;
                    transfers[{ev.peer, ev.anchor}] = std::move(payload);
                } else {
                    auto it = transfers.find({ev.worker, ev.anchor});
                    if (it == transfers.end())
                        throw ReplayIntegrityError("recovery adoption without a staged transfer",
                                                   ev.seq);
                    learners[ev.worker]->replay_adopt(it->second);
                    transfers.erase(it);
                }
                break;
            }
            case EventKind::kSnapshotBegin:
                capture_anchor = ev.anchor;
                captured_pulls.clear();
                captured_serves.clear();
                if (sink) {
                    syncer.replay_round_marker(ev.anchor);
                    sink->syncer_checkpoint(ev.anchor, syncer.serialize_state());
                }
                break;
            case EventKind::kSnapshotEnd: {
                ++result.snapshots_seen;
                capture_anchor = -1;
                if (sink) {
                    // Stage the cut's in-flight state: unmerged pull answers
                    // and unadopted transfers survive a crash through the
                    // snapshot rather than through re-execution.
                    std::vector<Message> in_flight;
                    for (const auto& [key, c] : captured_pulls) {
                        Message msg;
                        msg.sender = key.second;
                        FragmentPayloadMsg p;
                        p.round = key.first;
                        p.fragment = c.fragment_id;
                        p.c_steps = c.c_steps;
                        p.c_tokens = c.c_tokens;
                        p.values = c.theta_frag;
                        msg.payload = std::move(p);
                        in_flight.push_back(std::move(msg));
                    }
                    for (const auto& [key, payload] : captured_serves) {
                        Message msg;
                        msg.sender = key.first;
                        msg.payload = payload;
                        in_flight.push_back(std::move(msg));
                    }
                    sink->syncer_snapshot_complete(ev.anchor, ev.admitted, in_flight);
                }
                if (crash_after > 0 &&
                    result.snapshots_seen == static_cast<std::uint64_t>(crash_after)) {
                    result.crashed = true;
                    result.global = syncer.params();
                    for (auto& l : learners) result.learner_params.push_back(l->params());
                    return result;
                }
                break;
            }
        }
    }

    result.global = syncer.params();
    for (auto& l : learners) result.learner_params.push_back(l->params());
    return result;
}

}  // namespace ddl::runtime
