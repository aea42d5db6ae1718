#include "ddl/chaos/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "ddl/errors.hpp"

namespace ddl::chaos {

double cluster_mtbf(double mtbi_chip_s, std::uint64_t n_chip) {
    if (n_chip < 1) throw ConfigError("cluster_mtbf needs n_chip >= 1");
    return mtbi_chip_s / static_cast<double>(n_chip);
}

ClusterState::ClusterState(std::uint32_t learners_, std::uint64_t slices_per_learner_)
    : learners(learners_), slices_per_learner(slices_per_learner_) {
    if (learners == 0 || slices_per_learner == 0)
        throw ConfigError("cluster needs at least one slice per learner");
    status.assign(static_cast<std::size_t>(learners) * slices_per_learner, SliceStatus::kUp);
    up_count.assign(learners, slices_per_learner);
}

void ClusterState::mark_failed(std::uint64_t slice) {
    if (status[slice] == SliceStatus::kUp) --up_count[learner_of(slice)];
    status[slice] = SliceStatus::kFailed;
}

void ClusterState::mark_warming(std::uint64_t slice) { status[slice] = SliceStatus::kWarming; }

void ClusterState::mark_up(std::uint64_t slice) {
    if (status[slice] != SliceStatus::kUp) ++up_count[learner_of(slice)];
    status[slice] = SliceStatus::kUp;
}

std::vector<SliceFailure> sample_failures(ClusterState& state, double dt_s, double mtbf_s,
                                          rng::Stream& stream) {
    if (dt_s <= 0.0) throw ConfigError("sample_failures needs dt > 0");
    std::uint64_t count = stream.next_poisson(dt_s / mtbf_s);
    std::vector<SliceFailure> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        // Uniform over currently-up slices, skipping already-chosen ones.
        std::vector<std::uint64_t> ups;
        ups.reserve(64);
        for (std::uint64_t s = 0; s < state.total_slices(); ++s)
            if (state.status[s] == ClusterState::SliceStatus::kUp) ups.push_back(s);
        if (ups.empty()) break;
        std::uint64_t pick = ups[stream.next_below(ups.size())];
        state.mark_failed(pick);
        SliceFailure f;
        f.slice = pick;
        f.at_offset_s = stream.next_unit() * dt_s;
        f.repair_s = 0.0;  // drawn by the caller against its own config
        out.push_back(f);
    }
    return out;
}

double effective_batch_scale(const ClusterState& state, std::uint32_t m) {
    if (m >= state.learners) throw ConfigError("effective_batch_scale: unknown learner");
    return static_cast<double>(state.up_count[m]) / static_cast<double>(state.slices_per_learner);
}

double LearnerTimeline::capacity_at(std::int64_t t_ns) const {
    double scale = 1.0;
    for (const auto& [from, s] : capacity) {
        if (from > t_ns) break;
        scale = s;
    }
    return scale;
}

std::int64_t LearnerTimeline::clear_of_stalls(std::int64_t t_ns) const {
    for (const auto& iv : stalls) {
        if (iv.end_ns <= t_ns) continue;
        if (iv.begin_ns > t_ns) break;
        t_ns = iv.end_ns;
    }
    return t_ns;
}

namespace {

constexpr double kNsPerS = 1e9;

struct Interval {
    double begin = 0.0;
    double end = 0.0;
};

// One chaos realization, in seconds: per-learner downscale stalls (or the
// monolith's serialized restart outages), capacity change points, crashes.
struct RawChaos {
    std::vector<std::vector<Interval>> stalls;
    std::vector<std::vector<std::pair<double, double>>> capacity;
    std::vector<std::vector<double>> crashes;
};

enum class EvKind : std::uint8_t { kRepairDone, kWarmDone };

struct Ev {
    double at;
    EvKind kind;
    std::uint64_t slice;
    bool operator>(const Ev& o) const {
        if (at != o.at) return at > o.at;
        return static_cast<int>(kind) > static_cast<int>(o.kind);
    }
};

RawChaos sweep(const ChaosConfig& cfg, std::uint32_t learners, double horizon_s,
               std::uint64_t seed, bool serialized_restarts) {
    RawChaos raw;
    raw.stalls.resize(learners);
    raw.capacity.resize(learners);
    raw.crashes.resize(learners);
    if (!cfg.enabled) return raw;

    std::uint64_t per = cfg.slices_per_learner(learners);
    if (per == 0) throw ConfigError("chaos config yields zero slices per learner");
    ClusterState state(learners, per);
    double mtbf = cluster_mtbf(cfg.mtbi_chip_s, cfg.n_chip);
    rng::Stream failures(seed, "chaos.failures");
    rng::Stream repairs(seed, "chaos.repairs");

    std::priority_queue<Ev, std::vector<Ev>, std::greater<Ev>> heap;
    const double dt = cfg.base_step_s;
    std::uint64_t windows = static_cast<std::uint64_t>(std::ceil(horizon_s / dt));

    std::vector<double> stall_until(learners, 0.0);
    auto note_capacity = [&](std::uint32_t m, double at) {
        raw.capacity[m].emplace_back(at, effective_batch_scale(state, m));
    };
    auto drain_until = [&](double limit) {
        while (!heap.empty() && heap.top().at <= limit) {
            Ev ev = heap.top();
            heap.pop();
            std::uint32_t m = state.learner_of(ev.slice);
            if (ev.kind == EvKind::kRepairDone) {
                state.mark_warming(ev.slice);
                heap.push(Ev{ev.at + cfg.upscale_s, EvKind::kWarmDone, ev.slice});
            } else {
                state.mark_up(ev.slice);
                note_capacity(m, ev.at);
            }
        }
    };

    for (std::uint64_t w = 0; w < windows; ++w) {
        double window_start = static_cast<double>(w) * dt;
        drain_until(window_start);
        auto fails = sample_failures(state, dt, mtbf, failures);
        std::sort(fails.begin(), fails.end(),
                  [](const SliceFailure& a, const SliceFailure& b) {
                      return a.at_offset_s < b.at_offset_s;
                  });
        for (const auto& f : fails) {
            double at = window_start + f.at_offset_s;
            std::uint32_t m = state.learner_of(f.slice);
            note_capacity(m, at);
            if (serialized_restarts) {
                double start = std::max(at, stall_until[m]);
                double end = start + cfg.downscale_s + cfg.upscale_s;
                if (!raw.stalls[m].empty() && stall_until[m] >= at) {
                    raw.stalls[m].back().end = end;  // queued behind the running restart
                } else {
                    raw.stalls[m].push_back({at, end});
                }
                stall_until[m] = end;
            } else if (stall_until[m] <= at) {
                raw.stalls[m].push_back({at, at + cfg.downscale_s});
                stall_until[m] = at + cfg.downscale_s;
            }  // else: absorbed into the running reconfiguration
            double repair = repairs.next_exp_weibull(cfg.repair_alpha, cfg.repair_k,
                                                     cfg.repair_scale_s);
            heap.push(Ev{at + repair, EvKind::kRepairDone, f.slice});
        }
    }
    drain_until(horizon_s);

    // Repairs pop at window granularity, so capacity notes can land out of
    // time order across a window boundary.
    for (auto& caps : raw.capacity)
        std::stable_sort(caps.begin(), caps.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

    if (cfg.crash_rate_per_s > 0.0) {
        for (std::uint32_t m = 0; m < learners; ++m) {
            rng::Stream crash(seed, "chaos.crash", m);
            double t = crash.next_exponential(1.0 / cfg.crash_rate_per_s);
            while (t < horizon_s) {
                raw.crashes[m].push_back(t);
                t += crash.next_exponential(1.0 / cfg.crash_rate_per_s);
            }
        }
    }
    return raw;
}

// Whole-step metering: a step is useful only if it runs to completion; its
// capacity is the up-slice fraction at the step start.
void meter_learner(const RawChaos& raw, std::uint32_t m, double dt_m, double horizon_s,
                   double slices, GoodputMeter& meter) {
    const auto& stalls = raw.stalls[m];
    const auto& caps = raw.capacity[m];
    std::size_t si = 0, ci = 0;
    double cap = 1.0;
    auto cap_at = [&](double t) {
        while (ci < caps.size() && caps[ci].first <= t) cap = caps[ci++].second;
        return cap;
    };
    double t = 0.0;
    while (t < horizon_s) {
        while (si < stalls.size() && stalls[si].end <= t) ++si;
        if (si < stalls.size() && stalls[si].begin <= t) {
            t = stalls[si].end;
            continue;
        }
        double step_end = t + dt_m;
        if (step_end > horizon_s) break;
        double next_stall = si < stalls.size() ? stalls[si].begin : horizon_s + 1.0;
        if (next_stall < step_end) {
            t = next_stall;  // aborted step; the stall branch takes over
            continue;
        }
        meter.useful_slice_time += dt_m * cap_at(t) * slices;
        t = step_end;
    }
    meter.allocated_slice_time += slices * horizon_s;
}

// A learner is "not stepping" while stalled or at zero capacity. Uptime
// counts base-step windows in which at least one learner stepped at some
// point: a window is down only when an all-learner outage covers it fully.
double count_dead_time(const RawChaos& raw, std::uint32_t learners, double window_s,
                       double horizon_s) {
    std::vector<std::vector<Interval>> down(learners);
    for (std::uint32_t m = 0; m < learners; ++m) {
        down[m] = raw.stalls[m];
        double zero_from = -1.0;
        for (const auto& [at, scale] : raw.capacity[m]) {
            if (scale <= 0.0 && zero_from < 0.0) zero_from = at;
            if (scale > 0.0 && zero_from >= 0.0) {
                down[m].push_back({zero_from, at});
                zero_from = -1.0;
            }
        }
        if (zero_from >= 0.0) down[m].push_back({zero_from, horizon_s});
        std::sort(down[m].begin(), down[m].end(),
                  [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
    }

    // Intersection sweep across learners.
    std::vector<std::size_t> idx(learners, 0);
    double dead = 0.0;
    double t = 0.0;
    while (t < horizon_s) {
        double begin = t;
        double end = horizon_s;
        bool all_down = true;
        for (std::uint32_t m = 0; m < learners; ++m) {
            auto& iv = down[m];
            auto& i = idx[m];
            while (i < iv.size() && iv[i].end <= begin) ++i;
            if (i >= iv.size() || iv[i].begin > begin) {
                all_down = false;
                double next = i < iv.size() ? iv[i].begin : horizon_s;
                end = std::min(end, next);
            } else {
                end = std::min(end, iv[i].end);
            }
        }
        if (all_down && end > begin) {
            double first = std::ceil(begin / window_s);
            double last = std::floor(end / window_s);
            if (last > first) dead += (last - first) * window_s;
        }
        t = std::max(end, t + 1e-9);
    }
    return dead;
}

GoodputMeter meter_cell(const ChaosConfig& cfg, std::uint32_t learners, std::uint64_t steps,
                        std::uint64_t seed, bool serialized_restarts) {
    double horizon_s = static_cast<double>(steps) * cfg.base_step_s;
    RawChaos raw = sweep(cfg, learners, horizon_s, seed, serialized_restarts);
    GoodputMeter meter;
    double slices = static_cast<double>(cfg.slices_per_learner(learners));
    for (std::uint32_t m = 0; m < learners; ++m)
        meter_learner(raw, m, cfg.base_step_s * cfg.speed_of(m), horizon_s, slices, meter);
    meter.wall_time = horizon_s;
    meter.stepping_time = horizon_s - count_dead_time(raw, learners, cfg.base_step_s, horizon_s);
    return meter;
}

}  // namespace

std::vector<LearnerTimeline> build_timelines(const ChaosConfig& cfg, std::uint32_t learners,
                                             double horizon_s, std::uint64_t seed) {
    RawChaos raw = sweep(cfg, learners, horizon_s, seed, false);
    std::vector<LearnerTimeline> out(learners);
    for (std::uint32_t m = 0; m < learners; ++m) {
        for (const auto& iv : raw.stalls[m])
            out[m].stalls.push_back({static_cast<std::int64_t>(iv.begin * kNsPerS),
                                     static_cast<std::int64_t>(iv.end * kNsPerS)});
        for (const auto& [at, scale] : raw.capacity[m])
            out[m].capacity.emplace_back(static_cast<std::int64_t>(at * kNsPerS), scale);
        for (double c : raw.crashes[m])
            out[m].crashes_ns.push_back(static_cast<std::int64_t>(c * kNsPerS));
    }
    return out;
}

GoodputMeter simulate_decoupled_cell(const ChaosConfig& cfg, std::uint32_t learners,
                                     std::uint64_t steps, std::uint64_t seed) {
    return meter_cell(cfg, learners, steps, seed, false);
}

GoodputMeter simulate_monolith(const ChaosConfig& cfg, std::uint64_t steps, std::uint64_t seed,
                               bool elastic) {
    return meter_cell(cfg, 1, steps, seed, !elastic);
}

GoodputMeter dp_elastic_baseline(const ChaosConfig& cfg, std::uint64_t steps, std::uint64_t seed) {
    return simulate_monolith(cfg, steps, seed, true);
}

UpsizeDowntime upsize_downtime(double model_bytes, double bandwidth_bits_per_s, double step_time_s,
                               std::uint64_t sync_interval) {
    if (model_bytes <= 0 || bandwidth_bits_per_s <= 0 || step_time_s <= 0 || sync_interval == 0)
        throw ConfigError("upsize_downtime needs positive arguments");
    UpsizeDowntime d;
    double three_copies_s = 3.0 * model_bytes * 8.0 / bandwidth_bits_per_s;
    d.dp_s = three_copies_s;
    d.diloco_s = std::max(0.0, three_copies_s - static_cast<double>(sync_interval) * step_time_s);
    return d;
}

std::vector<TableCell> goodput_table(const ChaosConfig& base, const std::vector<std::uint32_t>& ms,
                                     const std::vector<std::uint64_t>& chips, std::uint64_t steps,
                                     std::uint64_t seed) {
    struct Job {
        std::uint32_t m;
        std::uint64_t n;
        bool elastic;
    };
    std::vector<Job> jobs;
    for (std::uint64_t n : chips) jobs.push_back({1, n, false});  // no-elasticity row
    for (std::uint32_t m : ms)
        for (std::uint64_t n : chips) jobs.push_back({m, n, true});

    std::vector<TableCell> cells(jobs.size());
    const std::int64_t njobs = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < njobs; ++i) {
        ChaosConfig cfg = base;
        cfg.n_chip = jobs[i].n;
        std::uint64_t cell_seed = rng::mix(seed ^ rng::fnv1a_u64(jobs[i].n + 31 * jobs[i].m +
                                                                 (jobs[i].elastic ? 7 : 0)));
        GoodputMeter meter =
            jobs[i].m == 1
                ? simulate_monolith(cfg, steps, cell_seed, jobs[i].elastic)
                : simulate_decoupled_cell(cfg, jobs[i].m, steps, cell_seed);
        cells[i] = TableCell{jobs[i].m, jobs[i].n, jobs[i].elastic, meter.goodput(),
                             meter.uptime()};
    }
    return cells;
}

std::string table_to_csv(const std::vector<TableCell>& cells) {
    std::ostringstream out;
    out << "m,n_chip,elastic,goodput,uptime\n";
    for (const auto& c : cells) {
        char line[128];
        std::snprintf(line, sizeof(line), "%u,%llu,%d,%.4f,%.4f\n", c.learners,
                      static_cast<unsigned long long>(c.n_chip), c.elastic ? 1 : 0, c.goodput,
                      c.uptime);
        out << line;
    }
    return out.str();
}

}  // namespace ddl::chaos
