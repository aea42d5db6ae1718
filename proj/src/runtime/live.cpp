#include "ddl/runtime/live.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "ddl/errors.hpp"
#include "ddl/log.hpp"

namespace ddl::runtime {

namespace {

using Clock = std::chrono::steady_clock;

struct WorkerQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Message> inbox;
    std::deque<std::pair<VirtualTime, std::uint64_t>> wakes;  // (deadline, token)
};

class LiveServices final : public Services {
  public:
    LiveServices(std::uint32_t learners, causality::TapeRecorder* recorder, SnapshotSink* sink)
        : queues_(learners + 1), recorder_(recorder), sink_(sink), start_(Clock::now()) {}

    VirtualTime now() const override {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_)
            .count();
    }

    void send(WorkerId to, Message msg) override {
        auto& q = queues_.at(to);
        {
            std::lock_guard<std::mutex> lock(q.mu);
            q.inbox.push_back(std::move(msg));
        }
        q.cv.notify_one();
    }

    void wake_at(WorkerId who, VirtualTime at, std::uint64_t token, int) override {
        auto& q = queues_.at(who);
        {
            std::lock_guard<std::mutex> lock(q.mu);
            q.wakes.emplace_back(at, token);
        }
        q.cv.notify_one();
    }

    void record(causality::TapeEvent event) override {
        if (!recorder_) return;
        std::lock_guard<std::mutex> lock(record_mu_);
        recorder_->record(std::move(event));
    }
    bool recording() const override { return recorder_ != nullptr; }
    std::uint64_t next_record_seq() const override {
        if (!recorder_) return 0;
        std::lock_guard<std::mutex> lock(record_mu_);
        return recorder_->tape().events.size();
    }

    WorkerId pick_recovery_peer(WorkerId requester) override {
        for (std::uint32_t m = 0; m + 1 < queues_.size(); ++m)
            if (m != requester) return static_cast<WorkerId>(m);
        return kNoWorker;
    }

    SnapshotSink* snapshot_sink() override { return sink_; }

    std::vector<WorkerQueue> queues_;
    causality::TapeRecorder* recorder_;
    SnapshotSink* sink_;
    Clock::time_point start_;
    mutable std::mutex record_mu_;
    std::atomic<bool> stop_{false};
};

}  // namespace

LiveResult run_live(const EngineConfig& cfg, SnapshotSink* sink) {
    if (cfg.chaos.enabled)
        throw ConfigError("live mode does not inject chaos; replay a synthetic tape instead");

    std::unique_ptr<causality::TapeRecorder> recorder;
    if (cfg.record)
        recorder = std::make_unique<causality::TapeRecorder>(cfg.tape_header, cfg.record_path);

    LiveServices svc(cfg.learners, recorder.get(), sink);

    LearnerConfig lc;
    lc.syncer = static_cast<WorkerId>(cfg.learners);
    lc.task = cfg.task;
    lc.inner = cfg.inner;
    lc.alpha = cfg.alpha;
    lc.plan = &cfg.plan;
    lc.snapshot_interval = cfg.snapshot_interval;
    lc.recovery_budget = cfg.sync_interval;
    std::vector<std::unique_ptr<LearnerWorker>> learners;
    for (std::uint32_t m = 0; m < cfg.learners; ++m) {
        lc.id = static_cast<WorkerId>(m);
        learners.push_back(std::make_unique<LearnerWorker>(lc));
    }

    SyncerConfig sc;
    sc.id = static_cast<WorkerId>(cfg.learners);
    sc.learners = cfg.learners;
    sc.quorum = cfg.quorum;
    sc.overlap = cfg.overlap;
    sc.rounds = cfg.rounds;
    sc.plan = &cfg.plan;
    sc.merge = cfg.merge;
    sc.outer = cfg.outer;
    sc.grace = cfg.grace;
    sc.task = cfg.task;
    sc.pull_timeout_factor = cfg.pull_timeout_factor;
    sc.snapshot_interval = cfg.snapshot_interval;
    sc.initial_step_ema_s = 0.001;  // live steps are compute-bound, not modeled
    SyncerWorker syncer(sc);

    std::vector<std::uint64_t> ticks(cfg.learners, 0);
    auto t0 = Clock::now();

    std::thread syncer_thread([&] {
        auto& q = svc.queues_[cfg.learners];
        syncer.start(svc);
        while (!svc.stop_.load()) {
            std::unique_lock<std::mutex> lock(q.mu);
            if (q.inbox.empty() && q.wakes.empty()) {
                q.cv.wait_for(lock, std::chrono::milliseconds(1));
            }
            std::deque<Message> inbox;
            inbox.swap(q.inbox);
            std::deque<std::pair<VirtualTime, std::uint64_t>> wakes;
            VirtualTime now = svc.now();
            for (auto it = q.wakes.begin(); it != q.wakes.end();) {
                if (it->first <= now) {
                    wakes.push_back(*it);
                    it = q.wakes.erase(it);
                } else {
                    ++it;
                }
            }
            lock.unlock();
            for (auto& m : inbox) syncer.on_message(svc, std::move(m));
            for (auto& [at, token] : wakes) syncer.on_wake(svc, token);
            if (syncer.done()) svc.stop_.store(true);
        }
        syncer.finalize_if_pending(svc);
    });

    std::vector<std::thread> learner_threads;
    for (std::uint32_t m = 0; m < cfg.learners; ++m) {
        learner_threads.emplace_back([&, m] {
            auto& q = svc.queues_[m];
            auto& learner = *learners[m];
            while (!svc.stop_.load() && learner.t_global_known() < cfg.rounds) {
                learner.tick(svc, 1.0);
                ++ticks[m];
                std::deque<Message> inbox;
                {
                    std::lock_guard<std::mutex> lock(q.mu);
                    inbox.swap(q.inbox);
                    q.wakes.clear();  // the loop below covers drain/answer
                }
                for (auto& msg : inbox) learner.on_message(svc, std::move(msg));
                learner.answer_pulls(svc);
                learner.drain(svc);
            }
        });
    }

    for (auto& t : learner_threads) t.join();
    svc.stop_.store(true);
    svc.queues_[cfg.learners].cv.notify_one();
    syncer_thread.join();

    LiveResult result;
    result.global = syncer.params();
    for (auto& l : learners) result.learner_params.push_back(l->params());
    result.learner_ticks = ticks;
    result.syncer = syncer.stats();
    if (recorder) result.tape = recorder->take();
    result.wall_seconds =
        std::chrono::duration_cast<std::chrono::duration<double>>(Clock::now() - t0).count();
    return result;
}

}  // namespace ddl::runtime
