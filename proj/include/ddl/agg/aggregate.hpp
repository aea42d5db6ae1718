#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ddl::agg {

/// A pulled fragment plus the counters it was pulled with. The counters and
/// values snapshot the same learner moment.
struct LearnerContribution {
    std::uint16_t learner_id = 0;
    std::uint32_t fragment_id = 0;
    std::vector<double> theta_frag;
    std::uint64_t c_steps = 0;
    std::uint64_t c_tokens = 0;
};

enum class MergeMethod { kAvg, kRda };
enum class Compression { kF64, kInt4 };
enum class WeightMode { kTokenQuality, kUniform };

struct MergeConfig {
    MergeMethod method = MergeMethod::kRda;
    MergeMethod embedding_method = MergeMethod::kAvg;
    Compression compression = Compression::kF64;
    WeightMode weight_mode = WeightMode::kTokenQuality;
    // Antipodal direction averages below this norm fall back to merge_avg.
    double epsilon_direction = 1e-12;
};

/// quantity x quality: c_tokens * (c_tokens / c_steps). Throws
/// UndefinedWeightError when c_steps is 0; the caller must exclude the
/// learner instead of calling.
double weight(std::uint64_t c_tokens, std::uint64_t c_steps);

double contribution_weight(const LearnerContribution& c, WeightMode mode);

/// prev_global - learner_frag, elementwise.
std::vector<double> outer_gradient(std::span<const double> prev_global,
                                   std::span<const double> learner_frag);

/// Weighted mean of per-learner outer gradients against prev_global.
std::vector<double> merge_avg(const std::vector<LearnerContribution>& contribs,
                              std::span<const double> weights,
                              std::span<const double> prev_global);

/// Radial-directional averaging: the weighted mean of outer-gradient norms
/// times the unit-normalized weighted mean of their directions. Zero-norm
/// outer gradients stay in the norm mean (as 0) but leave the direction
/// mean. Throws DegenerateDirectionError when the averaged direction has
/// norm below epsilon_direction.
std::vector<double> merge_rda(const std::vector<LearnerContribution>& contribs,
                              std::span<const double> weights,
                              std::span<const double> prev_global,
                              double epsilon_direction = 1e-12);

struct Int4Fragment {
    std::vector<std::int8_t> codes;  // each in [-7, 7]
    double scale = 0.0;              // max|x| / 7; 0 for an all-zero input
};

/// Symmetric per-fragment quantization; round-half-away-from-zero.
Int4Fragment quantize_int4(std::span<const double> x);
std::vector<double> dequantize_int4(const Int4Fragment& q);

/// The full Merge of the syncer round: weights per config, optional int4
/// round-trip of the outer gradients, avg for embedding-bearing fragments,
/// and the RDA degenerate-direction fallback to avg.
std::vector<double> merge(const std::vector<LearnerContribution>& contribs,
                          std::span<const double> prev_global, const MergeConfig& config,
                          bool embedding_fragment);

}  // namespace ddl::agg
