#include "ddl/runtime/learner.hpp"

#include <algorithm>
#include <cmath>

#include "ddl/core/bytes.hpp"
#include "ddl/errors.hpp"
#include "ddl/log.hpp"

namespace ddl::runtime {

LearnerWorker::LearnerWorker(LearnerConfig cfg)
    : cfg_(std::move(cfg)),
      theta_(harness::init_params(cfg_.task)),
      inner_(cfg_.inner, theta_.size()) {
    if (!cfg_.plan) throw ConfigError("learner needs a fragment plan");
    std::size_t fragments = cfg_.plan->fragment_count();
    c_steps_.assign(fragments, 0);
    c_tokens_.assign(fragments, 0);
    last_applied_round_.assign(fragments, 0);
    if (cfg_.start_recovering) mode_ = Mode::kAwaitingAnchor;
}

Message LearnerWorker::stamped(Payload payload) {
    vclock_.advance(cfg_.id, t_m_);
    Message msg;
    msg.sender = cfg_.id;
    msg.vclock = vclock_;
    msg.payload = std::move(payload);
    return msg;
}

void LearnerWorker::do_inner_step(std::uint64_t step, std::size_t examples) {
    auto batch = harness::sample_batch(cfg_.task, cfg_.id, step, examples);
    core::ParamStore grad(harness::model_tensors(cfg_.task));
    harness::loss_and_grad(cfg_.task, theta_, batch, grad);
    inner_.step(theta_.all(), grad.all());
    t_m_ = step;
    for (std::size_t p = 0; p < c_steps_.size(); ++p) {
        c_steps_[p] += 1;
        c_tokens_[p] += batch.tokens;
    }
}

std::uint64_t LearnerWorker::tick(Services& svc, double capacity_scale) {
    if (mode_ != Mode::kActive) return 0;
    std::size_t examples = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg_.task.batch_examples) * capacity_scale));
    examples = std::max<std::size_t>(1, std::min(examples, cfg_.task.batch_examples));
    Step step = t_m_ + 1;
    do_inner_step(step, examples);
    std::uint64_t tokens = examples * cfg_.task.tokens_per_example();

    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kStep;
        ev.worker = cfg_.id;
        ev.local_step = t_m_;
        vclock_.advance(cfg_.id, t_m_);
        ev.vclock = vclock_;
        ev.tokens = tokens;
        svc.record(std::move(ev));
    }
    send_metadata(svc);
    svc.wake_at(cfg_.id, svc.now(), kTokenDrain, kPhaseDrain);
    return tokens;
}

std::uint64_t LearnerWorker::tick_protocol_only(Services& svc, double capacity_scale) {
    if (mode_ != Mode::kActive) return 0;
    std::size_t examples = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg_.task.batch_examples) * capacity_scale));
    examples = std::max<std::size_t>(1, std::min(examples, cfg_.task.batch_examples));
    t_m_ += 1;
    std::uint64_t tokens = examples * cfg_.task.tokens_per_example();
    for (std::size_t p = 0; p < c_steps_.size(); ++p) {
        c_steps_[p] += 1;
        c_tokens_[p] += tokens;
    }
    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kStep;
        ev.worker = cfg_.id;
        ev.local_step = t_m_;
        vclock_.advance(cfg_.id, t_m_);
        ev.vclock = vclock_;
        ev.tokens = tokens;
        svc.record(std::move(ev));
    }
    send_metadata(svc);
    svc.wake_at(cfg_.id, svc.now(), kTokenDrain, kPhaseDrain);
    return tokens;
}

void LearnerWorker::send_metadata(Services& svc) {
    MetadataMsg meta;
    meta.t_m = t_m_;
    meta.c_steps = c_steps_;
    meta.c_tokens = c_tokens_;
    svc.send(cfg_.syncer, stamped(std::move(meta)));
}

void LearnerWorker::on_message(Services& svc, Message msg) {
    switch (msg.kind()) {
        case MsgKind::kGlobalFragment: {
            if (mode_ == Mode::kAwaitingAnchor) {
                begin_recovery(svc, std::get<GlobalFragmentMsg>(msg.payload));
                // Only buffer under a live transfer; stale pre-anchor rounds
                // must never be applied after adoption.
                if (mode_ == Mode::kAwaitingTransfer) recovery_buffer_.push_back(std::move(msg));
                return;
            }
            if (mode_ == Mode::kAwaitingTransfer) {
                const auto& frag = std::get<GlobalFragmentMsg>(msg.payload);
                if (cfg_.recovery_budget > 0 &&
                    frag.round - recovery_anchor_ > cfg_.recovery_budget) {
                    // Budget blown: retry against this broadcast as the new anchor.
                    ++recovery_attempts_;
                    recovery_buffer_.clear();
                    recovery_peer_ = kNoWorker;
                    mode_ = Mode::kAwaitingAnchor;
                    begin_recovery(svc, frag);
                }
                if (mode_ == Mode::kAwaitingTransfer) recovery_buffer_.push_back(std::move(msg));
                return;
            }
            pending_.push_back(std::move(msg));
            return;
        }
        case MsgKind::kFragmentPullRequest:
            if (mode_ != Mode::kActive) return;  // absent learners stay silent
            pending_pulls_.push_back(std::move(msg));
            svc.wake_at(cfg_.id, svc.now(), kTokenAnswerPulls, kPhaseAnswer);
            return;
        case MsgKind::kRecoveryRequest: {
            pending_recovery_requests_.emplace_back(
                msg.sender, std::get<RecoveryRequestMsg>(msg.payload).anchor);
            try_serve_recovery(svc);
            return;
        }
        case MsgKind::kRecoveryPayload: {
            const auto& payload = std::get<RecoveryPayloadMsg>(msg.payload);
            if (mode_ == Mode::kAwaitingTransfer && payload.anchor == recovery_anchor_)
                finish_recovery(svc, payload);
            return;
        }
        default:
            DDL_LOG_WARN("learner %u dropping unexpected message kind %d", cfg_.id,
                         static_cast<int>(msg.kind()));
    }
}

void LearnerWorker::on_wake(Services& svc, std::uint64_t token) {
    if (token == kTokenDrain) drain(svc);
    if (token == kTokenAnswerPulls) answer_pulls(svc);
}

void LearnerWorker::answer_pulls(Services& svc) {
    while (!pending_pulls_.empty()) {
        Message req = std::move(pending_pulls_.front());
        pending_pulls_.pop_front();
        if (mode_ != Mode::kActive) continue;
        const auto& pull = std::get<PullRequestMsg>(req.payload);
        FragmentPayloadMsg reply;
        reply.round = pull.round;
        reply.fragment = pull.fragment;
        reply.t_m = t_m_;
        reply.c_steps = c_steps_[pull.fragment];
        reply.c_tokens = c_tokens_[pull.fragment];
        reply.values = frag::read_fragment(theta_, *cfg_.plan, pull.fragment);

        // Recorded at the learner's moment so the tape stays executable in
        // worker-local causal order even under delivery latency.
        if (svc.recording()) {
            causality::TapeEvent ev;
            ev.kind = causality::EventKind::kFragmentPull;
            ev.worker = cfg_.id;
            ev.local_step = t_m_;
            vclock_.advance(cfg_.id, t_m_);
            ev.vclock = vclock_;
            ev.round = pull.round;
            ev.fragment = static_cast<std::int32_t>(pull.fragment);
            ev.c_steps = reply.c_steps;
            ev.c_tokens = reply.c_tokens;
            svc.record(std::move(ev));
        }
        svc.send(cfg_.syncer, stamped(std::move(reply)));
    }
}

void LearnerWorker::drain(Services& svc) {
    while (!pending_.empty()) {
        Message msg = std::move(pending_.front());
        pending_.pop_front();
        // The marker precedes the payload: checkpoint against the state the
        // pre-marker messages produced, then apply.
        observe_syncer_step(svc, msg.vclock.get(cfg_.syncer));
        vclock_.merge_from(msg.vclock);
        apply_global_fragment(svc, std::get<GlobalFragmentMsg>(msg.payload));
    }
    try_serve_recovery(svc);
}

void LearnerWorker::apply_global_fragment(Services& svc, const GlobalFragmentMsg& msg) {
    auto local = frag::read_fragment(theta_, *cfg_.plan, msg.fragment);
    auto mixed = optim::apply_received_fragment(local, msg.values, cfg_.alpha);
    frag::write_fragment(theta_, *cfg_.plan, msg.fragment, mixed);
    c_steps_[msg.fragment] = 0;
    c_tokens_[msg.fragment] = 0;
    last_applied_round_[msg.fragment] = msg.round;
    t_global_known_ = std::max(t_global_known_, msg.round);
    vclock_.advance(cfg_.syncer, static_cast<Step>(msg.round));

    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kFragmentApply;
        ev.worker = cfg_.id;
        ev.local_step = t_m_;
        ev.vclock = vclock_;
        ev.round = msg.round;
        ev.fragment = static_cast<std::int32_t>(msg.fragment);
        svc.record(std::move(ev));
    }
}

void LearnerWorker::observe_syncer_step(Services& svc, Step syncer_step) {
    if (cfg_.snapshot_interval <= 0 || syncer_step == 0) return;
    std::int64_t boundary =
        (static_cast<std::int64_t>(syncer_step) / cfg_.snapshot_interval) * cfg_.snapshot_interval;
    if (boundary <= last_marker_ || boundary == 0) return;
    if (static_cast<std::int64_t>(syncer_step) > boundary)
        DDL_LOG_INFO("learner %u saw a skipped marker: checkpointing %lld against syncer step %llu",
                     cfg_.id, static_cast<long long>(boundary),
                     static_cast<unsigned long long>(syncer_step));
    last_marker_ = boundary;
    ++checkpoints_taken_;
    if (auto* sink = svc.snapshot_sink()) {
        std::uint64_t seq = svc.next_record_seq();
        sink->learner_checkpoint(cfg_.id, boundary, serialize_state(seq), seq);
    }
}

void LearnerWorker::begin_recovery(Services& svc, const GlobalFragmentMsg& first) {
    recovery_anchor_ = first.round;
    WorkerId peer = svc.pick_recovery_peer(cfg_.id);
    if (peer == kNoWorker) {
        // No healthy peer; stay anchored and retry on the next broadcast.
        mode_ = Mode::kAwaitingAnchor;
        recovery_buffer_.clear();
        return;
    }
    recovery_peer_ = peer;
    mode_ = Mode::kAwaitingTransfer;
    RecoveryRequestMsg req;
    req.anchor = recovery_anchor_;
    svc.send(peer, stamped(std::move(req)));
}

void LearnerWorker::finish_recovery(Services& svc, const RecoveryPayloadMsg& payload) {
    std::copy(payload.params.begin(), payload.params.end(), theta_.all().begin());
    inner_.restore(payload.opt_m, payload.opt_v, payload.opt_steps);
    std::fill(c_steps_.begin(), c_steps_.end(), 0);
    std::fill(c_tokens_.begin(), c_tokens_.end(), 0);
    t_global_known_ = payload.anchor;
    vclock_.advance(cfg_.syncer, static_cast<Step>(payload.anchor));
    mode_ = Mode::kActive;

    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kRecovery;
        ev.worker = cfg_.id;
        ev.local_step = t_m_;
        ev.vclock = vclock_;
        ev.peer = recovery_peer_;
        ev.peer_step = payload.peer_step;
        ev.anchor = payload.anchor;
        ev.detail = "adopt";
        svc.record(std::move(ev));
    }

    // Replay the buffered broadcasts in receipt order; overwrite semantics
    // make re-application of already-transferred rounds harmless.
    for (auto& msg : recovery_buffer_) {
        observe_syncer_step(svc, msg.vclock.get(cfg_.syncer));
        vclock_.merge_from(msg.vclock);
        apply_global_fragment(svc, std::get<GlobalFragmentMsg>(msg.payload));
    }
    if (recovery_completion_probe && *recovery_completion_probe)
        (*recovery_completion_probe)(cfg_.id, payload, recovery_buffer_, theta_);
    recovery_buffer_.clear();
    recovery_attempts_ = 0;
}

void LearnerWorker::try_serve_recovery(Services& svc) {
    if (pending_recovery_requests_.empty() || mode_ != Mode::kActive) return;
    std::vector<std::pair<WorkerId, std::int64_t>> still_pending;
    for (const auto& [requester, anchor] : pending_recovery_requests_) {
        if (static_cast<std::int64_t>(vclock_.get(cfg_.syncer)) >= anchor) {
            RecoveryPayloadMsg payload;
            payload.anchor = anchor;
            payload.peer_step = t_m_;
            auto all = theta_.all();
            payload.params.assign(all.begin(), all.end());
            payload.opt_m.assign(inner_.first_moment().begin(), inner_.first_moment().end());
            payload.opt_v.assign(inner_.second_moment().begin(), inner_.second_moment().end());
            payload.opt_steps = inner_.step_count();
            if (recovery_transfer_probe && *recovery_transfer_probe)
                (*recovery_transfer_probe)(requester, anchor, theta_, payload.opt_m,
                                           payload.opt_v, payload.opt_steps);
            // The outgoing transfer is taped at the peer's moment; replay
            // stages a copy here and the newcomer's adopt event consumes it.
            if (svc.recording()) {
                causality::TapeEvent ev;
                ev.kind = causality::EventKind::kRecovery;
                ev.worker = cfg_.id;
                ev.local_step = t_m_;
                vclock_.advance(cfg_.id, t_m_);
                ev.vclock = vclock_;
                ev.peer = requester;
                ev.peer_step = t_m_;
                ev.anchor = anchor;
                ev.detail = "serve";
                svc.record(std::move(ev));
            }
            svc.send(requester, stamped(std::move(payload)));
        } else {
            still_pending.emplace_back(requester, anchor);
        }
    }
    pending_recovery_requests_ = std::move(still_pending);
}

void LearnerWorker::crash(Services& svc) {
    theta_ = harness::init_params(cfg_.task);
    inner_ = optim::InnerOpt(cfg_.inner, theta_.size());
    std::fill(c_steps_.begin(), c_steps_.end(), 0);
    std::fill(c_tokens_.begin(), c_tokens_.end(), 0);
    std::fill(last_applied_round_.begin(), last_applied_round_.end(), 0);
    pending_.clear();
    pending_pulls_.clear();
    pending_recovery_requests_.clear();
    recovery_buffer_.clear();
    recovery_peer_ = kNoWorker;
    recovery_anchor_ = -1;
    mode_ = Mode::kAwaitingAnchor;

    if (svc.recording()) {
        causality::TapeEvent ev;
        ev.kind = causality::EventKind::kFailure;
        ev.worker = cfg_.id;
        ev.local_step = t_m_;
        ev.vclock = vclock_;
        ev.detail = "crash";
        svc.record(std::move(ev));
    }
}

// --- replay path ----------------------------------------------------------

std::uint64_t LearnerWorker::replay_step(std::uint64_t tokens) {
    std::size_t examples = static_cast<std::size_t>(tokens / cfg_.task.tokens_per_example());
    if (examples == 0 || tokens % cfg_.task.tokens_per_example() != 0)
        throw ReplayIntegrityError("step event tokens do not divide into examples");
    do_inner_step(t_m_ + 1, examples);
    return tokens;
}

void LearnerWorker::replay_apply(Services& svc, std::int64_t round, std::uint32_t fragment,
                                 std::span<const double> values) {
    observe_syncer_step(svc, static_cast<Step>(round));
    GlobalFragmentMsg msg;
    msg.round = round;
    msg.fragment = fragment;
    msg.values.assign(values.begin(), values.end());
    apply_global_fragment(svc, msg);
}

agg::LearnerContribution LearnerWorker::replay_pull(std::uint32_t fragment) const {
    agg::LearnerContribution c;
    c.learner_id = cfg_.id;
    c.fragment_id = fragment;
    c.c_steps = c_steps_[fragment];
    c.c_tokens = c_tokens_[fragment];
    c.theta_frag = frag::read_fragment(theta_, *cfg_.plan, fragment);
    return c;
}

void LearnerWorker::replay_adopt(const RecoveryPayloadMsg& payload) {
    std::copy(payload.params.begin(), payload.params.end(), theta_.all().begin());
    inner_.restore(payload.opt_m, payload.opt_v, payload.opt_steps);
    std::fill(c_steps_.begin(), c_steps_.end(), 0);
    std::fill(c_tokens_.begin(), c_tokens_.end(), 0);
    t_global_known_ = payload.anchor;
    vclock_.advance(cfg_.syncer, static_cast<Step>(payload.anchor));
    mode_ = Mode::kActive;
}

RecoveryPayloadMsg LearnerWorker::replay_serve(std::int64_t anchor) const {
    RecoveryPayloadMsg payload;
    payload.anchor = anchor;
    payload.peer_step = t_m_;
    payload.params.assign(theta_.all().begin(), theta_.all().end());
    payload.opt_m.assign(inner_.first_moment().begin(), inner_.first_moment().end());
    payload.opt_v.assign(inner_.second_moment().begin(), inner_.second_moment().end());
    payload.opt_steps = inner_.step_count();
    return payload;
}

void LearnerWorker::replay_crash() {
    theta_ = harness::init_params(cfg_.task);
    inner_ = optim::InnerOpt(cfg_.inner, theta_.size());
    std::fill(c_steps_.begin(), c_steps_.end(), 0);
    std::fill(c_tokens_.begin(), c_tokens_.end(), 0);
    std::fill(last_applied_round_.begin(), last_applied_round_.end(), 0);
    mode_ = Mode::kAwaitingAnchor;
}

// --- snapshot state -------------------------------------------------------

std::vector<std::uint8_t> LearnerWorker::serialize_state(std::uint64_t ckpt_seq) const {
    core::ByteWriter w;
    w.u16(cfg_.id);
    w.u64(t_m_);
    w.i64(t_global_known_);
    w.u64(ckpt_seq);
    w.u64_vec(c_steps_);
    w.u64_vec(c_tokens_);
    w.u64(last_applied_round_.size());
    for (auto r : last_applied_round_) w.i64(r);
    w.f64_vec(theta_.all());
    w.f64_vec(inner_.first_moment());
    w.f64_vec(inner_.second_moment());
    w.u64(inner_.step_count());
    w.i64(last_marker_);
    w.u64(vclock_.entries().size());
    for (const auto& [wk, s] : vclock_.entries()) {
        w.u16(wk);
        w.u64(s);
    }
    return w.take();
}

void LearnerWorker::restore_state(std::span<const std::uint8_t> blob) {
    core::ByteReader r(blob);
    WorkerId id = r.u16();
    if (id != cfg_.id) throw SnapshotIntegrityError("learner state blob for the wrong worker");
    t_m_ = r.u64();
    t_global_known_ = r.i64();
    r.u64();  // ckpt_seq: consumed by the replay driver, not the worker
    auto steps = r.u64_vec();
    auto tokens = r.u64_vec();
    if (steps.size() != c_steps_.size()) throw SnapshotIntegrityError("counter shape mismatch");
    c_steps_ = std::move(steps);
    c_tokens_ = std::move(tokens);
    std::uint64_t napplied = r.u64();
    if (napplied != last_applied_round_.size())
        throw SnapshotIntegrityError("applied-round shape mismatch");
    for (auto& v : last_applied_round_) v = r.i64();
    auto params = r.f64_vec();
    if (params.size() != theta_.size()) throw SnapshotIntegrityError("parameter shape mismatch");
    std::copy(params.begin(), params.end(), theta_.all().begin());
    auto m = r.f64_vec();
    auto v = r.f64_vec();
    std::uint64_t opt_steps = r.u64();
    inner_.restore(m, v, opt_steps);
    last_marker_ = r.i64();
    std::uint64_t entries = r.u64();
    causality::VectorClock vc;
    for (std::uint64_t i = 0; i < entries; ++i) {
        WorkerId wk = r.u16();
        Step s = r.u64();
        vc.advance(wk, s);
    }
    vclock_ = vc;
    mode_ = Mode::kActive;
    pending_.clear();
    pending_pulls_.clear();
    recovery_buffer_.clear();
}

}  // namespace ddl::runtime
