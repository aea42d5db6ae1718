#include "ddl/runtime/engine.hpp"

#include <algorithm>
#include <map>
#include <queue>

#include "ddl/errors.hpp"
#include "ddl/log.hpp"

namespace ddl::runtime {

namespace {
constexpr std::uint64_t kMaxEvents = 200'000'000;
}

struct DetEngine::Impl : Services {
    explicit Impl(EngineConfig cfg) : cfg_(std::move(cfg)) {
        syncer_id_ = static_cast<WorkerId>(cfg_.learners);
        if (cfg_.task.shards != cfg_.learners)
            throw ConfigError("task shard count must equal the learner count");

        double horizon = cfg_.horizon_s > 0.0 ? cfg_.horizon_s
                                              : 3600.0 * 24.0 * 365.0;  // pacing only
        if (cfg_.chaos.enabled)
            timelines_ = chaos::build_timelines(cfg_.chaos, cfg_.learners, horizon, cfg_.seed);
        else
            timelines_.resize(cfg_.learners);

        if (cfg_.record)
            recorder_ = std::make_unique<causality::TapeRecorder>(cfg_.tape_header,
                                                                  cfg_.record_path);

        joined_.assign(cfg_.learners, true);
        left_.assign(cfg_.learners, false);
        tick_scheduled_.assign(cfg_.learners, false);
        generation_.assign(cfg_.learners, 0);
        last_tick_end_.assign(cfg_.learners, 0);
        tick_count_.assign(cfg_.learners, 0);
        speed_streams_.reserve(cfg_.learners);
        for (std::uint32_t m = 0; m < cfg_.learners; ++m)
            speed_streams_.emplace_back(cfg_.seed, "speed", m);

        LearnerConfig lc;
        lc.syncer = syncer_id_;
        lc.task = cfg_.task;
        lc.inner = cfg_.inner;
        lc.alpha = cfg_.alpha;
        lc.plan = &cfg_.plan;
        lc.snapshot_interval = cfg_.snapshot_interval;
        lc.recovery_budget = cfg_.sync_interval;
        for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
            lc.id = static_cast<WorkerId>(m);
            lc.start_recovering = false;
            for (const auto& [who, at] : cfg_.joins)
                if (who == m) {
                    lc.start_recovering = true;
                    joined_[m] = false;
                }
            learners_.push_back(std::make_unique<LearnerWorker>(lc));
            ml_gate_.push_back(cfg_.ml_enabled);
        }

        SyncerConfig sc;
        sc.id = syncer_id_;
        sc.learners = cfg_.learners;
        sc.quorum = cfg_.quorum;
        sc.overlap = cfg_.overlap;
        sc.rounds = cfg_.rounds;
        sc.plan = &cfg_.plan;
        sc.merge = cfg_.merge;
        sc.outer = cfg_.outer;
        sc.grace = cfg_.grace;
        sc.task = cfg_.task;
        sc.pull_timeout_factor = cfg_.pull_timeout_factor;
        sc.snapshot_interval = cfg_.snapshot_interval;
        sc.initial_step_ema_s = cfg_.chaos.base_step_s;
        syncer_ = std::make_unique<SyncerWorker>(sc);

        syncer_->on_round_complete = [this](std::int64_t t, std::uint32_t p,
                                            const std::vector<agg::LearnerContribution>& cs) {
            for (const auto& c : cs) {
                auto& learner = *learners_[c.learner_id];
                std::int64_t applied = learner.last_applied_round(p);
                std::uint64_t staleness =
                    applied > 0 ? static_cast<std::uint64_t>(t - applied) : 0;
                result_.max_contribution_staleness =
                    std::max(result_.max_contribution_staleness, staleness);
                if (awaiting_first_contrib_[c.learner_id]) {
                    awaiting_first_contrib_[c.learner_id] = false;
                    result_.recovery_first_staleness.push_back(
                        applied > 0 ? t - applied : 0);
                }
            }
        };
        awaiting_first_contrib_.assign(cfg_.learners, false);
    }

    // ---- Services --------------------------------------------------------
    VirtualTime now() const override { return now_; }

    void send(WorkerId to, Message msg) override {
        const LinkModel& link = (msg.sender == syncer_id_ || to == syncer_id_)
                                    ? cfg_.link
                                    : cfg_.peer_link;
        VirtualTime delay = link.transfer_ns(msg.payload_bits());
        auto key = std::make_pair(msg.sender, to);
        VirtualTime at = std::max(now_ + delay, fifo_watermark_[key]);
        fifo_watermark_[key] = at;
        schedule(at, kPhaseDeliver, [this, to, m = std::move(msg)]() mutable { deliver(to, std::move(m)); });
    }

    void wake_at(WorkerId who, VirtualTime at, std::uint64_t token, int phase) override {
        schedule(at, phase, [this, who, token] {
            if (who == syncer_id_) {
                syncer_->on_wake(*this, token);
            } else {
                learners_[who]->on_wake(*this, token);
                after_learner_activity(who);
            }
        });
    }

    void record(causality::TapeEvent event) override {
        if (recorder_) recorder_->record(std::move(event));
    }
    bool recording() const override { return recorder_ != nullptr; }
    std::uint64_t next_record_seq() const override {
        return recorder_ ? recorder_->tape().events.size() : 0;
    }

    WorkerId pick_recovery_peer(WorkerId requester) override {
        for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
            if (m == requester || !joined_[m] || left_[m]) continue;
            if (learners_[m]->mode() != LearnerWorker::Mode::kActive) continue;
            if (crashed_now_[m]) continue;
            return static_cast<WorkerId>(m);
        }
        return kNoWorker;
    }

    SnapshotSink* snapshot_sink() override { return sink_; }

    // ---- scheduling ------------------------------------------------------
    struct Event {
        VirtualTime at;
        int phase;
        std::uint64_t seq;
        std::function<void()> fn;
    };
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            if (a.at != b.at) return a.at > b.at;
            if (a.phase != b.phase) return a.phase > b.phase;
            return a.seq > b.seq;
        }
    };

    void schedule(VirtualTime at, int phase, std::function<void()> fn) {
        queue_.push(Event{at, phase, next_seq_++, std::move(fn)});
    }

    void deliver(WorkerId to, Message msg) {
        if (to == syncer_id_) {
            syncer_->on_message(*this, std::move(msg));
            return;
        }
        if (!joined_[to] || left_[to]) return;  // not connected: dropped
        auto& learner = *learners_[to];
        bool was_inactive = learner.mode() != LearnerWorker::Mode::kActive;
        learner.on_message(*this, std::move(msg));
        if (was_inactive && learner.mode() == LearnerWorker::Mode::kActive) {
            // recovery finished
            ++result_.recoveries_completed;
            awaiting_first_contrib_[to] = true;
            if (probe_ && probe_->on_complete) probe_->on_complete(to, learner.params());
        }
        after_learner_activity(to);
    }

    void after_learner_activity(WorkerId m) {
        auto& learner = *learners_[m];
        result_.max_pending_fragments =
            std::max<std::uint64_t>(result_.max_pending_fragments, learner.pending_fragments());
        if (learner.mode() == LearnerWorker::Mode::kActive && !tick_scheduled_[m] && !left_[m] &&
            joined_[m] && !crashed_now_[m])
            schedule_tick(m);
    }

    // Next tick start honoring stalls and zero-capacity windows; ticks abort
    // and restart when a stall lands mid-step.
    void schedule_tick(std::uint32_t m) {
        if (syncer_->done() && learners_[m]->t_global_known() >= cfg_.rounds) return;
        if (cfg_.rounds > 0 && learners_[m]->t_global_known() >= cfg_.rounds) return;

        const auto& tl = timelines_[m];
        double speed = cfg_.chaos.speed_of(m);
        VirtualTime start = std::max(now_, last_tick_end_[m]);
        VirtualTime dur = 0;
        for (int guard = 0; guard < 1 << 20; ++guard) {
            start = tl.clear_of_stalls(start);
            if (cfg_.chaos.enabled) {
                // zero capacity = all slices down: the learner cannot step
                bool moved = false;
                while (tl.capacity_at(start) <= 0.0) {
                    VirtualTime next = next_capacity_change(tl, start);
                    if (next < 0) return;  // dead for the rest of the run
                    start = next;
                    moved = true;
                }
                if (moved) continue;
            }
            double jitter = cfg_.chaos.jitter_frac > 0.0
                                ? 1.0 + cfg_.chaos.jitter_frac *
                                            (2.0 * speed_streams_[m].next_unit() - 1.0)
                                : 1.0;
            dur = static_cast<VirtualTime>(cfg_.chaos.base_step_s * speed * jitter * kNsPerSecond);
            VirtualTime interrupted = first_stall_in(tl, start, start + dur);
            if (interrupted < 0) break;
            start = interrupted;  // aborted attempt; restart after the stall
        }
        if (horizon_ns_ > 0 && start + dur > horizon_ns_) return;

        tick_scheduled_[m] = true;
        std::uint64_t gen = generation_[m];
        double capacity = cfg_.chaos.enabled ? timelines_[m].capacity_at(start) : 1.0;
        schedule(start + dur, kPhaseDeliver, [this, m, gen, start, dur, capacity] {
            if (gen != generation_[m]) return;
            tick_scheduled_[m] = false;
            auto& learner = *learners_[m];
            if (learner.mode() != LearnerWorker::Mode::kActive) return;
            std::uint64_t tokens = ml_gate_[m] ? learner.tick(*this, capacity)
                                               : protocol_only_tick(m, capacity);
            (void)tokens;
            last_tick_end_[m] = now_;
            ++tick_count_[m];
            meter_useful_ += ns_to_seconds(dur) * capacity;
            stepping_[m].emplace_back(start, now_);
            after_learner_activity(m);
        });
    }

    // Synthetic-tape generation: same control flow, no ML arithmetic.
    std::uint64_t protocol_only_tick(std::uint32_t m, double capacity) {
        return learners_[m]->tick_protocol_only(*this, capacity);
    }

    VirtualTime next_capacity_change(const chaos::LearnerTimeline& tl, VirtualTime t) const {
        for (const auto& [at, scale] : tl.capacity)
            if (at > t && scale > 0.0) return at;
        return -1;
    }

    VirtualTime first_stall_in(const chaos::LearnerTimeline& tl, VirtualTime a,
                               VirtualTime b) const {
        for (const auto& iv : tl.stalls) {
            if (iv.begin_ns >= b) break;
            if (iv.begin_ns > a && iv.begin_ns < b) return iv.begin_ns;
        }
        return -1;
    }

    // ---- chaos lifecycle events -------------------------------------------
    void arm_lifecycle_events() {
        for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
            for (VirtualTime c : timelines_[m].crashes_ns)
                schedule(c, kPhaseDeliver, [this, m] { crash_learner(m); });
        }
        for (const auto& [m, at_s] : cfg_.joins)
            schedule(seconds_to_ns(at_s), kPhaseDeliver, [this, m = m] {
                joined_[m] = true;
                after_learner_activity(static_cast<WorkerId>(m));
            });
        for (const auto& [m, at_s] : cfg_.leaves)
            schedule(seconds_to_ns(at_s), kPhaseDeliver, [this, m = m] {
                left_[m] = true;
                ++generation_[m];
                tick_scheduled_[m] = false;
                if (recorder_) {
                    causality::TapeEvent ev;
                    ev.kind = causality::EventKind::kFailure;
                    ev.worker = static_cast<WorkerId>(m);
                    ev.local_step = learners_[m]->local_step();
                    ev.vclock = learners_[m]->vclock();
                    ev.detail = "leave";
                    record(std::move(ev));
                }
            });
    }

    void crash_learner(std::uint32_t m) {
        if (!joined_[m] || left_[m]) return;
        ++generation_[m];
        tick_scheduled_[m] = false;
        crashed_now_[m] = true;
        learners_[m]->crash(*this);
        crashed_now_[m] = false;
    }

    // ---- run loop ----------------------------------------------------------
    EngineResult run_loop() {
        std::uint64_t processed = 0;
        while (!queue_.empty()) {
            Event ev = std::move(const_cast<Event&>(queue_.top()));
            queue_.pop();
            if (horizon_ns_ > 0 && ev.at > horizon_ns_) break;
            if (ev.at < now_) throw std::logic_error("virtual time went backwards");
            now_ = ev.at;
            ev.fn();
            if (++processed > kMaxEvents) throw std::runtime_error("event budget exhausted");
            if (syncer_->done() && queue_.empty()) break;
        }
        syncer_->finalize_if_pending(*this);

        result_.global = syncer_->params();
        for (auto& l : learners_) result_.learner_params.push_back(l->params());
        result_.learner_ticks = tick_count_;
        result_.syncer = syncer_->stats();
        result_.virtual_end_ns = now_;
        finalize_meter();
        compute_expected_ticks();
        if (recorder_) result_.tape = recorder_->take();
        return std::move(result_);
    }

    void finalize_meter() {
        double horizon = ns_to_seconds(horizon_ns_ > 0 ? horizon_ns_ : now_);
        if (horizon <= 0.0) horizon = 1.0;
        double slices = cfg_.chaos.enabled
                            ? static_cast<double>(cfg_.chaos.slices_per_learner(cfg_.learners))
                            : 1.0;
        result_.meter.useful_slice_time = meter_useful_ * slices;
        result_.meter.allocated_slice_time =
            slices * horizon * static_cast<double>(cfg_.learners);
        result_.meter.wall_time = horizon;
        result_.meter.stepping_time = horizon - dead_window_time(horizon);
    }

    double dead_window_time(double horizon_s) const {
        double w = cfg_.chaos.base_step_s;
        // merge per-learner stepping intervals; a window with no stepping at
        // all counts as dead
        std::vector<std::pair<double, double>> intervals;
        for (std::uint32_t m = 0; m < cfg_.learners; ++m)
            for (const auto& [a, b] : stepping_[m])
                intervals.emplace_back(ns_to_seconds(a), ns_to_seconds(b));
        std::sort(intervals.begin(), intervals.end());
        double dead = 0.0;
        double cursor = 0.0;
        for (const auto& [a, b] : intervals) {
            if (a > cursor) {
                double first = std::ceil(cursor / w);
                double last = std::floor(a / w);
                if (last > first) dead += (last - first) * w;
            }
            cursor = std::max(cursor, b);
        }
        if (horizon_s > cursor) {
            double first = std::ceil(cursor / w);
            double last = std::floor(horizon_s / w);
            if (last > first) dead += (last - first) * w;
        }
        return dead;
    }

    // No-protocol pacing: how many ticks pure chaos timing allows. Equality
    // with the actual tick count shows the syncer never made a learner wait.
    void compute_expected_ticks() {
        if (horizon_ns_ <= 0) return;
        result_.expected_ticks.assign(cfg_.learners, 0);
        for (std::uint32_t m = 0; m < cfg_.learners; ++m) {
            if (!joined_at_start_[m]) continue;  // scavenged joiners pace differently
            rng::Stream jstream(cfg_.seed, "speed", m);
            const auto& tl = timelines_[m];
            double speed = cfg_.chaos.speed_of(m);
            VirtualTime t = 0;
            std::uint64_t n = 0;
            while (true) {
                t = tl.clear_of_stalls(t);
                if (cfg_.chaos.enabled) {
                    bool moved = false;
                    while (tl.capacity_at(t) <= 0.0) {
                        VirtualTime next = next_capacity_change(tl, t);
                        if (next < 0) {
                            t = horizon_ns_ + 1;
                            break;
                        }
                        t = next;
                        moved = true;
                    }
                    if (moved) continue;
                }
                double jitter = cfg_.chaos.jitter_frac > 0.0
                                    ? 1.0 + cfg_.chaos.jitter_frac *
                                                (2.0 * jstream.next_unit() - 1.0)
                                    : 1.0;
                VirtualTime dur = static_cast<VirtualTime>(cfg_.chaos.base_step_s * speed *
                                                           jitter * kNsPerSecond);
                VirtualTime interrupted = first_stall_in(tl, t, t + dur);
                if (interrupted >= 0) {
                    t = interrupted;
                    continue;
                }
                if (t + dur > horizon_ns_) break;
                t += dur;
                ++n;
            }
            result_.expected_ticks[m] = n;
        }
    }

    EngineResult run(SnapshotSink* sink, RecoveryProbe* probe) {
        sink_ = sink;
        probe_ = probe;
        install_probe();
        horizon_ns_ = cfg_.horizon_s > 0.0 ? seconds_to_ns(cfg_.horizon_s) : 0;
        crashed_now_.assign(cfg_.learners, false);
        stepping_.resize(cfg_.learners);
        joined_at_start_ = joined_;
        arm_lifecycle_events();
        syncer_->start(*this);
        for (std::uint32_t m = 0; m < cfg_.learners; ++m)
            if (joined_[m]) schedule_tick(m);
        return run_loop();
    }

    EngineResult resume(const resilience::SnapshotBundle& bundle, SnapshotSink* sink,
                        RecoveryProbe* probe) {
        sink_ = sink;
        probe_ = probe;
        install_probe();
        horizon_ns_ = cfg_.horizon_s > 0.0 ? seconds_to_ns(cfg_.horizon_s) : 0;
        crashed_now_.assign(cfg_.learners, false);
        stepping_.resize(cfg_.learners);
        joined_at_start_ = joined_;

        syncer_->restore_state(bundle.syncer_state);
        for (const auto& [m, blob] : bundle.learner_states) learners_[m]->restore_state(blob);
        for (WorkerId m : bundle.absent) {
            learners_[m]->replay_crash();  // absent from the cut: recover via a peer
            joined_[m] = true;
        }
        // Captured in-flight messages replay as if the learners resent them.
        for (const auto& msg : bundle.in_flight) {
            Message copy = msg;
            schedule(0, kPhaseDeliver,
                     [this, m = std::move(copy)]() mutable { syncer_->on_message(*this, std::move(m)); });
        }
        syncer_->resume_at(*this, bundle.snapshot_id);
        for (std::uint32_t m = 0; m < cfg_.learners; ++m)
            if (joined_[m] && learners_[m]->mode() == LearnerWorker::Mode::kActive)
                schedule_tick(m);
        return run_loop();
    }

    void install_probe() {
        if (!probe_) return;
        for (auto& l : learners_) {
            if (probe_->on_transfer) l->recovery_transfer_probe = &probe_->on_transfer;
            if (probe_->on_complete_detail)
                l->recovery_completion_probe = &probe_->on_complete_detail;
        }
    }

    // ---- data --------------------------------------------------------------
    EngineConfig cfg_;
    WorkerId syncer_id_;
    std::vector<std::unique_ptr<LearnerWorker>> learners_;
    std::unique_ptr<SyncerWorker> syncer_;
    std::vector<chaos::LearnerTimeline> timelines_;
    std::unique_ptr<causality::TapeRecorder> recorder_;
    SnapshotSink* sink_ = nullptr;
    RecoveryProbe* probe_ = nullptr;

    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::uint64_t next_seq_ = 0;
    VirtualTime now_ = 0;
    VirtualTime horizon_ns_ = 0;
    std::map<std::pair<WorkerId, WorkerId>, VirtualTime> fifo_watermark_;

    std::vector<bool> joined_, left_, tick_scheduled_, crashed_now_, awaiting_first_contrib_;
    std::vector<bool> joined_at_start_;
    std::vector<bool> ml_gate_;
    std::vector<std::uint64_t> generation_, tick_count_;
    std::vector<VirtualTime> last_tick_end_;
    std::vector<rng::Stream> speed_streams_;
    std::vector<std::vector<std::pair<VirtualTime, VirtualTime>>> stepping_;
    double meter_useful_ = 0.0;

    EngineResult result_;
};

DetEngine::DetEngine(EngineConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
DetEngine::~DetEngine() = default;

EngineResult DetEngine::run(SnapshotSink* sink, RecoveryProbe* probe) {
    return impl_->run(sink, probe);
}

EngineResult DetEngine::resume(const resilience::SnapshotBundle& bundle, SnapshotSink* sink,
                               RecoveryProbe* probe) {
    return impl_->resume(bundle, sink, probe);
}

}  // namespace ddl::runtime
