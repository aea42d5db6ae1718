#include "ddl/runtime/syncer.hpp"

#include <algorithm>

#include "ddl/core/bytes.hpp"
#include "ddl/errors.hpp"
#include "ddl/log.hpp"

namespace ddl::runtime {

SyncerWorker::SyncerWorker(SyncerConfig cfg)
    : cfg_(std::move(cfg)), theta_(harness::init_params(cfg_.task)) {
    if (!cfg_.plan) throw ConfigError("syncer needs a fragment plan");
    if (cfg_.quorum < 1 || cfg_.quorum > cfg_.learners)
        throw ConfigError("quorum must satisfy 1 <= K <= M");
    auto model = harness::model_tensors(cfg_.task);
    std::size_t fragments = cfg_.plan->fragment_count();
    outer_.reserve(fragments);
    embedding_fragment_.resize(fragments, false);
    for (std::size_t p = 0; p < fragments; ++p) {
        outer_.emplace_back(cfg_.outer, cfg_.plan->load(model, p));
        for (std::size_t id : cfg_.plan->tensors_of(p))
            if (model[id].kind == core::TensorKind::kEmbedding) embedding_fragment_[p] = true;
    }
    meta_.resize(cfg_.learners);
    marker_returned_.resize(cfg_.learners, false);
    ema_step_ = cfg_.initial_step_ema_s;
    ema_step_init_ = cfg_.initial_step_ema_s > 0.0;
}

Message SyncerWorker::stamped(Payload payload) {
    Message msg;
    msg.sender = cfg_.id;
    msg.vclock = vclock_;
    msg.payload = std::move(payload);
    return msg;
}

void SyncerWorker::start(Services& svc) {
    vclock_.advance(cfg_.id, static_cast<Step>(t_));
    open_round(svc);
}

void SyncerWorker::open_round(Services& svc) {
    while (t_ <= cfg_.rounds && cfg_.plan->eligible_fragment(t_) < 0) {
        ++t_;
        vclock_.advance(cfg_.id, static_cast<Step>(t_));
    }
    if (t_ > cfg_.rounds) {
        phase_ = Phase::kIdle;
        try_finalize_snapshot(svc);
        return;
    }
    vclock_.advance(cfg_.id, static_cast<Step>(t_));
    frag_ = static_cast<std::int32_t>(cfg_.plan->eligible_fragment(t_));
    phase_ = Phase::kCollect;
    round_open_ns_ = svc.now();
    maybe_begin_snapshot(svc);
    check_quorum(svc);
}

std::vector<WorkerId> SyncerWorker::eligible_learners() const {
    // Fresh enough to be merging against the right previous global
    // fragment: the learner has seen a broadcast from within the overlap
    // horizon. tau = 0 clamps to 1; the most recent broadcast a learner can
    // possibly know when round t opens is round t-1's.
    std::int64_t horizon = std::max<std::int64_t>(cfg_.overlap, 1);
    std::vector<WorkerId> out;
    for (std::uint32_t m = 0; m < cfg_.learners; ++m)
        if (meta_[m].valid && meta_[m].known_syncer >= t_ - horizon)
            out.push_back(static_cast<WorkerId>(m));
    return out;
}

void SyncerWorker::check_quorum(Services& svc) {
    if (phase_ != Phase::kCollect || require_new_metadata_) return;
    auto eligible = eligible_learners();
    if (eligible.size() < cfg_.quorum) return;
    quorum_ns_ = svc.now();
    double quorum_s = ns_to_seconds(quorum_ns_ - round_open_ns_);
    ema_quorum_ = ema_update(ema_quorum_, quorum_s, cfg_.grace.ema_decay, ema_quorum_init_);
    ema_quorum_init_ = true;

    double grace_s = 0.0;
    if (cfg_.grace.enabled && cfg_.overlap >= 1)
        grace_s = grace_window(cfg_.grace, ema_step_, ema_quorum_, ema_sync_, cfg_.overlap);
    if (grace_s > 0.0) {
        phase_ = Phase::kGrace;
        svc.wake_at(cfg_.id, svc.now() + seconds_to_ns(grace_s),
                    kTokenGraceExpiry + 8 * static_cast<std::uint64_t>(t_));
    } else {
        close_quorum(svc);
    }
}

void SyncerWorker::close_quorum(Services& svc) {
    admitted_ = eligible_learners();
    std::sort(admitted_.begin(), admitted_.end());
    phase_ = Phase::kPull;
    close_ns_ = svc.now();
    pulls_.assign(cfg_.learners, std::nullopt);
    for (WorkerId m : admitted_) {
        PullRequestMsg req;
        req.round = t_;
        req.fragment = static_cast<std::uint32_t>(frag_);
        svc.send(m, stamped(std::move(req)));
    }
    double timeout_s = std::max(cfg_.pull_timeout_factor * ema_step_, 1e-3);
    svc.wake_at(cfg_.id, svc.now() + seconds_to_ns(timeout_s),
                kTokenPullTimeout + 8 * static_cast<std::uint64_t>(t_));
}

void SyncerWorker::on_wake(Services& svc, std::uint64_t token) {
    std::uint64_t kind = token % 8;
    std::int64_t round = static_cast<std::int64_t>(token / 8);
    if (round != t_) return;  // stale timer from an already-finished round
    if (kind == kTokenGraceExpiry && phase_ == Phase::kGrace) {
        phase_ = Phase::kCollect;
        close_quorum(svc);
    } else if (kind == kTokenPullTimeout && phase_ == Phase::kPull) {
        DDL_LOG_DEBUG("round %lld pull timeout; completing with received subset",
                      static_cast<long long>(t_));
        complete_round(svc);
    }
}

void SyncerWorker::on_message(Services& svc, Message msg) {
    snapshot_bookkeeping(svc, msg);
    vclock_.merge_from(msg.vclock);
    switch (msg.kind()) {
        case MsgKind::kMetadata: {
            const auto& meta = std::get<MetadataMsg>(msg.payload);
            auto& entry = meta_[msg.sender];
            if (entry.valid) {
                double obs = ns_to_seconds(svc.now() - entry.recv_ns);
                if (obs > 0.0) {
                    ema_step_ = ema_update(ema_step_, obs, cfg_.grace.ema_decay, ema_step_init_);
                    ema_step_init_ = true;
                }
            }
            entry.prev_recv_ns = entry.valid ? entry.recv_ns : -1;
            entry.valid = true;
            entry.t_m = meta.t_m;
            entry.known_syncer = static_cast<std::int64_t>(msg.vclock.get(cfg_.id));
            entry.recv_ns = svc.now();
            entry.c_steps = meta.c_steps;
            entry.c_tokens = meta.c_tokens;
            require_new_metadata_ = false;

            if (svc.recording()) {
                causality::TapeEvent ev;
                ev.kind = causality::EventKind::kMetadataRecv;
                ev.worker = msg.sender;
                ev.local_step = meta.t_m;
                ev.vclock = msg.vclock;
                svc.record(std::move(ev));
            }
            check_quorum(svc);
            return;
        }
        case MsgKind::kFragmentPayload: {
            const auto& payload = std::get<FragmentPayloadMsg>(msg.payload);
            if (phase_ != Phase::kPull || payload.round != t_ ||
                payload.fragment != static_cast<std::uint32_t>(frag_))
                return;  // stale response from an abandoned or finished round
            if (pulls_[msg.sender].has_value()) return;
            agg::LearnerContribution c;
            c.learner_id = msg.sender;
            c.fragment_id = payload.fragment;
            c.c_steps = payload.c_steps;
            c.c_tokens = payload.c_tokens;
            c.theta_frag = payload.values;
            pulls_[msg.sender] = std::move(c);

            bool all = true;
            for (WorkerId m : admitted_)
                if (!pulls_[m].has_value()) all = false;
            if (all) complete_round(svc);
            return;
        }
        default:
            DDL_LOG_WARN("syncer dropping unexpected message kind %d",
                         static_cast<int>(msg.kind()));
    }
}

void SyncerWorker::complete_round(Services& svc) {
    phase_ = Phase::kIdle;
    std::vector<agg::LearnerContribution> contribs;
    for (WorkerId m : admitted_)
        if (pulls_[m].has_value() && pulls_[m]->c_steps > 0 && pulls_[m]->c_tokens > 0)
            contribs.push_back(std::move(*pulls_[m]));

    if (contribs.empty()) {
        // Availability breach for this round: no usable contribution.
        // Re-collect once fresh metadata arrives; the round number holds.
        ++stats_.stalled_rounds;
        require_new_metadata_ = true;
        phase_ = Phase::kCollect;
        round_open_ns_ = svc.now();
        return;
    }

    double sync_s = ns_to_seconds(svc.now() - close_ns_);
    ema_sync_ = ema_update(ema_sync_, sync_s, cfg_.grace.ema_decay, ema_sync_init_);
    ema_sync_init_ = true;

    auto fragment = static_cast<std::uint32_t>(frag_);
    auto broadcast = replay_round(t_, fragment, contribs);

    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kQuorumClose;
        ev.worker = cfg_.id;
        ev.local_step = static_cast<Step>(t_);
        ev.vclock = vclock_;
        ev.round = t_;
        ev.fragment = frag_;
        for (const auto& c : contribs) ev.admitted.push_back(c.learner_id);
        svc.record(std::move(ev));
    }

    stats_.rounds_completed += 1;
    stats_.merges += 1;
    stats_.admitted_total += contribs.size();
    if (on_round_complete) on_round_complete(t_, fragment, contribs);

    GlobalFragmentMsg out;
    out.round = t_;
    out.fragment = fragment;
    out.values = std::move(broadcast);
    for (std::uint32_t m = 0; m < cfg_.learners; ++m) svc.send(static_cast<WorkerId>(m), stamped(out));

    try_finalize_snapshot(svc);
    ++t_;
    vclock_.advance(cfg_.id, static_cast<Step>(t_));
    open_round(svc);
}

std::vector<double> SyncerWorker::replay_round(std::int64_t round, std::uint32_t fragment,
                                               const std::vector<agg::LearnerContribution>& contribs) {
    auto prev = frag::read_fragment(theta_, *cfg_.plan, fragment);
    auto delta = agg::merge(contribs, prev, cfg_.merge, embedding_fragment_[fragment]);
    auto next = outer_[fragment].step(prev, delta);
    frag::write_fragment(theta_, *cfg_.plan, fragment, next);
    t_ = std::max(t_, round);
    vclock_.advance(cfg_.id, static_cast<Step>(round));
    return next;
}

// --- snapshot protocol ------------------------------------------------------

void SyncerWorker::maybe_begin_snapshot(Services& svc) {
    if (cfg_.snapshot_interval <= 0 || snapshot_in_progress_ >= 0) return;
    if (t_ % cfg_.snapshot_interval != 0 || t_ <= last_snapshot_) return;
    snapshot_in_progress_ = t_;
    ++stats_.snapshots_begun;
    std::fill(marker_returned_.begin(), marker_returned_.end(), false);
    in_flight_.clear();
    if (auto* sink = svc.snapshot_sink()) sink->syncer_checkpoint(t_, serialize_state());
    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kSnapshotBegin;
        ev.worker = cfg_.id;
        ev.local_step = static_cast<Step>(t_);
        ev.vclock = vclock_;
        ev.anchor = t_;
        svc.record(std::move(ev));
    }
}

void SyncerWorker::snapshot_bookkeeping(Services& svc, const Message& msg) {
    if (snapshot_in_progress_ < 0) return;
    std::int64_t seen = static_cast<std::int64_t>(msg.vclock.get(cfg_.id));
    if (seen < snapshot_in_progress_) {
        // Sent before the learner saw the marker: belongs to the cut.
        in_flight_.push_back(msg);
        ++stats_.in_flight_captured;
    } else if (!marker_returned_[msg.sender]) {
        marker_returned_[msg.sender] = true;
        try_finalize_snapshot(svc);
    }
}

void SyncerWorker::try_finalize_snapshot(Services& svc) {
    if (snapshot_in_progress_ < 0) return;
    double stall_horizon_s = std::max(cfg_.pull_timeout_factor * ema_step_, 1e-3);
    std::vector<WorkerId> absent;
    for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
        if (marker_returned_[m]) continue;
        bool failed = !meta_[m].valid ||
                      ns_to_seconds(svc.now() - meta_[m].recv_ns) > stall_horizon_s;
        if (!failed) return;  // healthy learner still owes its marker
        absent.push_back(static_cast<WorkerId>(m));
    }
    if (auto* sink = svc.snapshot_sink())
        sink->syncer_snapshot_complete(snapshot_in_progress_, absent, in_flight_);
    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kSnapshotEnd;
        ev.worker = cfg_.id;
        ev.local_step = static_cast<Step>(t_);
        ev.vclock = vclock_;
        ev.anchor = snapshot_in_progress_;
        ev.admitted = absent;  // reused field: learners omitted from the cut
        svc.record(std::move(ev));
    }
    ++stats_.snapshots_completed;
    last_snapshot_ = snapshot_in_progress_;
    snapshot_in_progress_ = -1;
    in_flight_.clear();
}

// --- state blob -------------------------------------------------------------

std::vector<std::uint8_t> SyncerWorker::serialize_state() const {
    core::ByteWriter w;
    w.i64(t_);
    w.f64_vec(theta_.all());
    w.u64(outer_.size());
    for (const auto& opt : outer_) w.f64_vec(opt.momentum_state());
    w.f64(ema_step_);
    w.f64(ema_quorum_);
    w.f64(ema_sync_);
    w.u8(static_cast<std::uint8_t>((ema_step_init_ ? 1 : 0) | (ema_quorum_init_ ? 2 : 0) |
                                   (ema_sync_init_ ? 4 : 0)));
    w.i64(last_snapshot_);
    w.u64(vclock_.entries().size());
    for (const auto& [wk, s] : vclock_.entries()) {
        w.u16(wk);
        w.u64(s);
    }
    return w.take();
}

void SyncerWorker::restore_state(std::span<const std::uint8_t> blob) {
    core::ByteReader r(blob);
    t_ = r.i64();
    auto params = r.f64_vec();
    if (params.size() != theta_.size()) throw SnapshotIntegrityError("global parameter shape mismatch");
    std::copy(params.begin(), params.end(), theta_.all().begin());
    std::uint64_t fragments = r.u64();
    if (fragments != outer_.size()) throw SnapshotIntegrityError("outer state shape mismatch");
    for (auto& opt : outer_) {
        auto v = r.f64_vec();
        opt.restore_momentum(v);
    }
    ema_step_ = r.f64();
    ema_quorum_ = r.f64();
    ema_sync_ = r.f64();
    std::uint8_t flags = r.u8();
    ema_step_init_ = flags & 1;
    ema_quorum_init_ = flags & 2;
    ema_sync_init_ = flags & 4;
    last_snapshot_ = r.i64();
    std::uint64_t entries = r.u64();
    causality::VectorClock vc;
    for (std::uint64_t i = 0; i < entries; ++i) {
        WorkerId wk = r.u16();
        Step s = r.u64();
        vc.advance(wk, s);
    }
    vclock_ = vc;
    phase_ = Phase::kIdle;
    snapshot_in_progress_ = -1;
    for (auto& m : meta_) m = MetaEntry{};
}

void SyncerWorker::resume_at(Services& svc, std::int64_t round) {
    t_ = round;
    last_snapshot_ = round;  // the snapshot being resumed must not re-begin
    vclock_.advance(cfg_.id, static_cast<Step>(t_));
    open_round(svc);
}

}  // namespace ddl::runtime
