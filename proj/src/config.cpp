#include "ddl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ddl/causality/rng.hpp"
#include "ddl/errors.hpp"

namespace ddl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config field '" + key + "': expected a number, got '" + v + "'");
    }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config field '" + key + "': expected an integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config field '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::pair<std::uint32_t, double>> parse_schedule(const std::string& key,
                                                             const std::string& text) {
    std::vector<std::pair<std::uint32_t, double>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        auto at = item.find('@');
        if (at == std::string::npos)
            throw ConfigError("config field '" + key + "': expected learner@seconds entries");
        out.emplace_back(static_cast<std::uint32_t>(to_int(key, item.substr(0, at))),
                         to_double(key, item.substr(at + 1)));
    }
    return out;
}

double exp_weibull_scale_for_median(double median_s, double alpha, double k) {
    double inner = -std::log1p(-std::pow(0.5, 1.0 / alpha));
    return median_s / std::pow(inner, 1.0 / k);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_text(buffer.str());
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));

        if (key == "task.family") {
            if (value == "mlp")
                cfg.task.family = harness::TaskFamily::kMlpClassifier;
            else if (value == "linreg")
                cfg.task.family = harness::TaskFamily::kLinearRegression;
            else
                throw ConfigError("task.family must be mlp or linreg");
        } else if (key == "task.seed") {
            cfg.task.seed = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "task.batch_examples") {
            cfg.task.batch_examples = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.in_dim") {
            cfg.task.in_dim = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.hidden") {
            cfg.task.hidden = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.classes") {
            cfg.task.classes = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.lin_dim") {
            cfg.task.lin_dim = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.lin_shard_samples") {
            cfg.task.lin_shard_samples = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "task.lin_noise") {
            cfg.task.lin_noise = to_double(key, value);
        } else if (key == "task.eval_examples") {
            cfg.task.eval_examples = static_cast<std::size_t>(to_int(key, value));
        } else if (key == "runtime.learners") {
            cfg.learners = static_cast<std::uint32_t>(to_int(key, value));
        } else if (key == "runtime.quorum") {
            cfg.quorum = static_cast<std::uint32_t>(to_int(key, value));
        } else if (key == "runtime.sync_interval") {
            cfg.sync_interval = static_cast<std::uint32_t>(to_int(key, value));
        } else if (key == "runtime.fragments") {
            cfg.fragments = static_cast<std::uint32_t>(to_int(key, value));
        } else if (key == "runtime.overlap") {
            cfg.overlap = static_cast<std::int32_t>(to_int(key, value));
        } else if (key == "runtime.rounds") {
            cfg.rounds = to_int(key, value);
        } else if (key == "runtime.strategy") {
            if (value == "balanced")
                cfg.strategy = PlanStrategy::kBalanced;
            else if (value == "tensor")
                cfg.strategy = PlanStrategy::kTensor;
            else if (value == "layer")
                cfg.strategy = PlanStrategy::kLayer;
            else
                throw ConfigError("runtime.strategy must be balanced, tensor or layer");
        } else if (key == "runtime.alpha") {
            cfg.alpha = to_double(key, value);
        } else if (key == "runtime.step_time_s") {
            cfg.step_time_s = to_double(key, value);
        } else if (key == "runtime.horizon_s") {
            cfg.horizon_s = to_double(key, value);
        } else if (key == "runtime.link_latency_s") {
            cfg.link_latency_s = to_double(key, value);
        } else if (key == "runtime.link_bandwidth_bits") {
            cfg.link_bandwidth_bits = to_double(key, value);
        } else if (key == "runtime.peer_bandwidth_bits") {
            cfg.peer_bandwidth_bits = to_double(key, value);
        } else if (key == "runtime.snapshot_interval") {
            cfg.snapshot_interval = to_int(key, value);
        } else if (key == "runtime.joins") {
            cfg.joins = value;
        } else if (key == "runtime.leaves") {
            cfg.leaves = value;
        } else if (key == "runtime.pull_timeout_factor") {
            cfg.pull_timeout_factor = to_double(key, value);
        } else if (key == "merge.method") {
            cfg.merge.method = value == "avg" ? agg::MergeMethod::kAvg : agg::MergeMethod::kRda;
            if (value != "avg" && value != "rda") throw ConfigError("merge.method must be avg or rda");
        } else if (key == "merge.embedding") {
            cfg.merge.embedding_method =
                value == "rda" ? agg::MergeMethod::kRda : agg::MergeMethod::kAvg;
            if (value != "avg" && value != "rda")
                throw ConfigError("merge.embedding must be avg or rda");
        } else if (key == "merge.compression") {
            if (value == "f64")
                cfg.merge.compression = agg::Compression::kF64;
            else if (value == "int4")
                cfg.merge.compression = agg::Compression::kInt4;
            else
                throw ConfigError("merge.compression must be f64 or int4");
        } else if (key == "merge.weights") {
            if (value == "token_quality")
                cfg.merge.weight_mode = agg::WeightMode::kTokenQuality;
            else if (value == "uniform")
                cfg.merge.weight_mode = agg::WeightMode::kUniform;
            else
                throw ConfigError("merge.weights must be token_quality or uniform");
        } else if (key == "inner.kind") {
            if (value == "adamw")
                cfg.inner.kind = optim::InnerKind::kAdamW;
            else if (value == "sgd")
                cfg.inner.kind = optim::InnerKind::kSgd;
            else
                throw ConfigError("inner.kind must be adamw or sgd");
        } else if (key == "inner.lr") {
            cfg.inner.lr = to_double(key, value);
        } else if (key == "inner.beta1") {
            cfg.inner.beta1 = to_double(key, value);
        } else if (key == "inner.beta2") {
            cfg.inner.beta2 = to_double(key, value);
        } else if (key == "inner.eps") {
            cfg.inner.eps = to_double(key, value);
        } else if (key == "inner.weight_decay") {
            cfg.inner.weight_decay = to_double(key, value);
        } else if (key == "outer.lr") {
            cfg.outer.lr = to_double(key, value);
        } else if (key == "outer.momentum") {
            cfg.outer.momentum = to_double(key, value);
        } else if (key == "outer.nesterov") {
            cfg.outer.nesterov = to_bool(key, value);
        } else if (key == "grace.enabled") {
            cfg.grace.enabled = to_bool(key, value);
        } else if (key == "grace.gamma") {
            cfg.grace.gamma = to_double(key, value);
        } else if (key == "grace.ema_decay") {
            cfg.grace.ema_decay = to_double(key, value);
        } else if (key == "grace.cap_s") {
            cfg.grace.cap_s = to_double(key, value);
        } else if (key == "chaos.enabled") {
            cfg.chaos_enabled = to_bool(key, value);
        } else if (key == "chaos.mtbi_chip_s") {
            cfg.chaos.mtbi_chip_s = to_double(key, value);
        } else if (key == "chaos.n_chip") {
            cfg.chaos.n_chip = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "chaos.chips_per_slice") {
            cfg.chaos.chips_per_slice = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "chaos.downscale_s") {
            cfg.chaos.downscale_s = to_double(key, value);
        } else if (key == "chaos.upscale_s") {
            cfg.chaos.upscale_s = to_double(key, value);
        } else if (key == "chaos.repair_alpha") {
            cfg.chaos.repair_alpha = to_double(key, value);
        } else if (key == "chaos.repair_k") {
            cfg.chaos.repair_k = to_double(key, value);
        } else if (key == "chaos.repair_median_s") {
            cfg.repair_median_s = to_double(key, value);
        } else if (key == "chaos.jitter") {
            cfg.chaos.jitter_frac = to_double(key, value);
        } else if (key == "chaos.crash_rate_per_s") {
            cfg.chaos.crash_rate_per_s = to_double(key, value);
        } else if (key == "chaos.speeds") {
            cfg.chaos.learner_speed.clear();
            std::stringstream sp(value);
            std::string item;
            while (std::getline(sp, item, ','))
                cfg.chaos.learner_speed.push_back(to_double(key, trim(item)));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "out_dir") {
            cfg.out_dir = value;
        } else if (key == "mode") {
            if (value != "det" && value != "live") throw ConfigError("mode must be det or live");
            cfg.mode = value;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (learners < 1) throw ConfigError("runtime.learners must be >= 1");
    if (quorum < 1 || quorum > learners) throw ConfigError("quorum must satisfy 1 <= K <= M");
    if (fragments > sync_interval)
        throw ConfigError("P <= H required: a fragment needs a distinct offset");
    if (overlap < 0) throw ConfigError("overlap must be >= 0");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
    if (rounds < 1) throw ConfigError("runtime.rounds must be >= 1");
    if (chaos_enabled) {
        if (chaos.n_chip < static_cast<std::uint64_t>(learners) * chaos.chips_per_slice)
            throw ConfigError("chaos.n_chip too small for the learner count");
    }
    if (!(grace.gamma > 0.0 && grace.gamma < 1.0))
        throw ConfigError("grace.gamma must satisfy 0 < gamma < 1");
}

std::string ExperimentConfig::canonical_text() const {
    std::map<std::string, std::string> kv;
    kv["task.family"] =
        task.family == harness::TaskFamily::kMlpClassifier ? "mlp" : "linreg";
    kv["task.seed"] = std::to_string(task.seed);
    kv["task.batch_examples"] = std::to_string(task.batch_examples);
    kv["task.in_dim"] = std::to_string(task.in_dim);
    kv["task.hidden"] = std::to_string(task.hidden);
    kv["task.classes"] = std::to_string(task.classes);
    kv["task.lin_dim"] = std::to_string(task.lin_dim);
    kv["task.lin_shard_samples"] = std::to_string(task.lin_shard_samples);
    kv["task.lin_noise"] = fmt(task.lin_noise);
    kv["task.eval_examples"] = std::to_string(task.eval_examples);
    kv["runtime.learners"] = std::to_string(learners);
    kv["runtime.quorum"] = std::to_string(quorum);
    kv["runtime.sync_interval"] = std::to_string(sync_interval);
    kv["runtime.fragments"] = std::to_string(fragments);
    kv["runtime.overlap"] = std::to_string(overlap);
    kv["runtime.rounds"] = std::to_string(rounds);
    kv["runtime.strategy"] = strategy == PlanStrategy::kBalanced
                                 ? "balanced"
                                 : (strategy == PlanStrategy::kTensor ? "tensor" : "layer");
    kv["runtime.alpha"] = fmt(alpha);
    kv["runtime.step_time_s"] = fmt(step_time_s);
    kv["runtime.horizon_s"] = fmt(horizon_s);
    kv["runtime.link_latency_s"] = fmt(link_latency_s);
    kv["runtime.link_bandwidth_bits"] = fmt(link_bandwidth_bits);
    kv["runtime.peer_bandwidth_bits"] = fmt(peer_bandwidth_bits);
    kv["runtime.snapshot_interval"] = std::to_string(snapshot_interval);
    kv["runtime.joins"] = joins;
    kv["runtime.leaves"] = leaves;
    kv["runtime.pull_timeout_factor"] = fmt(pull_timeout_factor);
    kv["merge.method"] = merge.method == agg::MergeMethod::kAvg ? "avg" : "rda";
    kv["merge.embedding"] = merge.embedding_method == agg::MergeMethod::kAvg ? "avg" : "rda";
    kv["merge.compression"] = merge.compression == agg::Compression::kF64 ? "f64" : "int4";
    kv["merge.weights"] =
        merge.weight_mode == agg::WeightMode::kTokenQuality ? "token_quality" : "uniform";
    kv["inner.kind"] = inner.kind == optim::InnerKind::kAdamW ? "adamw" : "sgd";
    kv["inner.lr"] = fmt(inner.lr);
    kv["inner.beta1"] = fmt(inner.beta1);
    kv["inner.beta2"] = fmt(inner.beta2);
    kv["inner.eps"] = fmt(inner.eps);
    kv["inner.weight_decay"] = fmt(inner.weight_decay);
    kv["outer.lr"] = fmt(outer.lr);
    kv["outer.momentum"] = fmt(outer.momentum);
    kv["outer.nesterov"] = outer.nesterov ? "true" : "false";
    kv["grace.enabled"] = grace.enabled ? "true" : "false";
    kv["grace.gamma"] = fmt(grace.gamma);
    kv["grace.ema_decay"] = fmt(grace.ema_decay);
    kv["grace.cap_s"] = fmt(grace.cap_s);
    kv["chaos.enabled"] = chaos_enabled ? "true" : "false";
    kv["chaos.mtbi_chip_s"] = fmt(chaos.mtbi_chip_s);
    kv["chaos.n_chip"] = std::to_string(chaos.n_chip);
    kv["chaos.chips_per_slice"] = std::to_string(chaos.chips_per_slice);
    kv["chaos.downscale_s"] = fmt(chaos.downscale_s);
    kv["chaos.upscale_s"] = fmt(chaos.upscale_s);
    kv["chaos.repair_alpha"] = fmt(chaos.repair_alpha);
    kv["chaos.repair_k"] = fmt(chaos.repair_k);
    kv["chaos.repair_median_s"] = fmt(repair_median_s);
    kv["chaos.jitter"] = fmt(chaos.jitter_frac);
    kv["chaos.crash_rate_per_s"] = fmt(chaos.crash_rate_per_s);
    std::string speeds;
    for (std::size_t i = 0; i < chaos.learner_speed.size(); ++i) {
        if (i) speeds += ",";
        speeds += fmt(chaos.learner_speed[i]);
    }
    kv["chaos.speeds"] = speeds;
    kv["seed"] = std::to_string(seed);

    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t ExperimentConfig::hash() const { return rng::fnv1a(canonical_text()); }

frag::FragmentPlan ExperimentConfig::build_plan() const {
    auto model = harness::model_tensors(task);
    frag::FragmentPlan plan;
    switch (strategy) {
        case PlanStrategy::kBalanced:
            plan = frag::plan_balanced(model, fragments);
            break;
        case PlanStrategy::kTensor:
            plan = frag::plan_tensor(model, fragments);
            break;
        case PlanStrategy::kLayer:
            plan = frag::plan_layer(model, harness::transformer_layer_count(task), fragments);
            break;
    }
    return frag::assign_offsets(std::move(plan), sync_interval);
}

runtime::EngineConfig ExperimentConfig::engine_config() const {
    runtime::EngineConfig ec;
    ec.task = task;
    ec.task.shards = learners;
    ec.learners = learners;
    ec.quorum = quorum;
    ec.sync_interval = sync_interval;
    ec.overlap = overlap;
    ec.rounds = rounds;
    ec.plan = build_plan();
    ec.merge = merge;
    ec.inner = inner;
    ec.outer = outer;
    ec.alpha = alpha;
    ec.grace = grace;
    ec.chaos = chaos;
    ec.chaos.enabled = chaos_enabled;
    ec.chaos.base_step_s = step_time_s;
    ec.chaos.repair_scale_s =
        exp_weibull_scale_for_median(repair_median_s, chaos.repair_alpha, chaos.repair_k);
    ec.link.latency_ns = runtime::seconds_to_ns(link_latency_s);
    ec.link.bandwidth_bits_per_s = link_bandwidth_bits;
    ec.peer_link.latency_ns = runtime::seconds_to_ns(link_latency_s);
    ec.peer_link.bandwidth_bits_per_s = peer_bandwidth_bits;
    ec.seed = seed;
    ec.snapshot_interval = snapshot_interval;
    ec.horizon_s = horizon_s;
    ec.pull_timeout_factor = pull_timeout_factor;
    ec.joins = parse_schedule("runtime.joins", joins);
    ec.leaves = parse_schedule("runtime.leaves", leaves);
    ec.tape_header.config_hash = hash();
    ec.tape_header.seed = seed;
    ec.tape_header.learners = learners;
    ec.tape_header.quorum = quorum;
    ec.tape_header.sync_interval = sync_interval;
    ec.tape_header.fragments = fragments;
    ec.tape_header.overlap = static_cast<std::uint32_t>(overlap);
    return ec;
}

}  // namespace ddl
