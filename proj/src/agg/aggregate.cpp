#include "ddl/agg/aggregate.hpp"

#include <cmath>

#include "ddl/core/kernels.hpp"
#include "ddl/errors.hpp"

namespace ddl::agg {

double weight(std::uint64_t c_tokens, std::uint64_t c_steps) {
    if (c_steps == 0) throw UndefinedWeightError("weight undefined for c_steps = 0");
    double tokens = static_cast<double>(c_tokens);
    return tokens * (tokens / static_cast<double>(c_steps));
}

double contribution_weight(const LearnerContribution& c, WeightMode mode) {
    if (mode == WeightMode::kUniform) return 1.0;
    return weight(c.c_tokens, c.c_steps);
}

std::vector<double> outer_gradient(std::span<const double> prev_global,
                                   std::span<const double> learner_frag) {
    return core::subtract(prev_global, learner_frag);
}

namespace {

double weight_total(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw UndefinedWeightError("merge needs a positive total weight");
    return total;
}

std::vector<std::vector<double>> gradients_of(const std::vector<LearnerContribution>& contribs,
                                              std::span<const double> weights,
                                              std::span<const double> prev_global) {
    if (contribs.empty()) throw NoQuorumError("merge needs at least one contribution");
    if (weights.size() != contribs.size())
        throw DimensionError("one weight per contribution required");
    std::vector<std::vector<double>> deltas;
    deltas.reserve(contribs.size());
    for (const auto& c : contribs) {
        if (c.theta_frag.size() != prev_global.size())
            throw DimensionError("contribution fragment length mismatch");
        deltas.push_back(outer_gradient(prev_global, c.theta_frag));
    }
    return deltas;
}

// Accumulation is in contribution order (syncer shards reduce in shard-id
// order), so results are independent of thread count.
std::vector<double> combine_avg(const std::vector<std::vector<double>>& deltas,
                                std::span<const double> weights) {
    double total = weight_total(weights);
    std::vector<double> acc(deltas.front().size(), 0.0);
    for (std::size_t i = 0; i < deltas.size(); ++i)
        core::axpy_inplace(weights[i], deltas[i], acc);
    for (auto& v : acc) v /= total;
    return acc;
}

std::vector<double> combine_rda(std::vector<std::vector<double>> deltas,
                                std::span<const double> weights, double epsilon_direction) {
    double total = weight_total(weights);

    double norm_acc = 0.0;
    double direction_weight = 0.0;
    std::vector<double> dir_acc(deltas.front().size(), 0.0);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        double n = core::l2_norm(deltas[i]);
        norm_acc += weights[i] * n;
        if (n == 0.0) continue;  // idle learner: norm counted as 0, direction excluded
        for (auto& v : deltas[i]) v /= n;
        core::axpy_inplace(weights[i], deltas[i], dir_acc);
        direction_weight += weights[i];
    }
    double norm_mean = norm_acc / total;

    if (direction_weight <= 0.0) throw DegenerateDirectionError("all outer gradients are zero");
    for (auto& v : dir_acc) v /= direction_weight;
    double dn = core::l2_norm(dir_acc);
    if (dn < epsilon_direction) throw DegenerateDirectionError("averaged direction is degenerate");

    double project = norm_mean / dn;
    for (auto& v : dir_acc) v *= project;
    return dir_acc;
}

}  // namespace

std::vector<double> merge_avg(const std::vector<LearnerContribution>& contribs,
                              std::span<const double> weights,
                              std::span<const double> prev_global) {
    return combine_avg(gradients_of(contribs, weights, prev_global), weights);
}

std::vector<double> merge_rda(const std::vector<LearnerContribution>& contribs,
                              std::span<const double> weights,
                              std::span<const double> prev_global, double epsilon_direction) {
    return combine_rda(gradients_of(contribs, weights, prev_global), weights, epsilon_direction);
}

Int4Fragment quantize_int4(std::span<const double> x) {
    Int4Fragment q;
    q.codes.assign(x.size(), 0);
    double amax = 0.0;
    for (double v : x) amax = std::max(amax, std::fabs(v));
    if (amax == 0.0) return q;
    q.scale = amax / 7.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        long long c = std::llround(x[i] / q.scale);
        if (c > 7) c = 7;
        if (c < -7) c = -7;
        q.codes[i] = static_cast<std::int8_t>(c);
    }
    return q;
}

std::vector<double> dequantize_int4(const Int4Fragment& q) {
    std::vector<double> out(q.codes.size());
    for (std::size_t i = 0; i < q.codes.size(); ++i) out[i] = q.codes[i] * q.scale;
    return out;
}

std::vector<double> merge(const std::vector<LearnerContribution>& contribs,
                          std::span<const double> prev_global, const MergeConfig& config,
                          bool embedding_fragment) {
    if (contribs.empty()) throw NoQuorumError("merge needs at least one contribution");

    std::vector<double> weights(contribs.size());
    for (std::size_t i = 0; i < contribs.size(); ++i)
        weights[i] = contribution_weight(contribs[i], config.weight_mode);

    auto deltas = gradients_of(contribs, weights, prev_global);
    if (config.compression == Compression::kInt4)
        for (auto& d : deltas) d = dequantize_int4(quantize_int4(d));

    MergeMethod method = embedding_fragment ? config.embedding_method : config.method;
    if (method == MergeMethod::kAvg) return combine_avg(deltas, weights);
    try {
        return combine_rda(deltas, weights, config.epsilon_direction);
    } catch (const DegenerateDirectionError&) {
        return combine_avg(deltas, weights);
    }
}

}  // namespace ddl::agg
