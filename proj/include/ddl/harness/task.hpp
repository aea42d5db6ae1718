#pragma once

#include <cstdint>
#include <vector>

#include "ddl/core/model.hpp"
#include "ddl/optim/optimizers.hpp"

namespace ddl::harness {

enum class TaskFamily { kLinearRegression, kMlpClassifier };

/// Desk-scale learning tasks: synthetic data, tiny models, exact gradients.
/// Shards are disjoint seeded streams; batches are stateless functions of
/// (seed, shard, step), so replay and snapshots never carry data state.
struct TaskSpec {
    TaskFamily family = TaskFamily::kMlpClassifier;
    std::uint64_t seed = 1;
    std::uint32_t shards = 1;
    std::size_t batch_examples = 32;

    // linear regression: fixed per-shard design matrix, full-batch gradient
    std::size_t lin_dim = 32;
    std::size_t lin_shard_samples = 64;
    double lin_noise = 0.0;

    // mlp classifier: tanh blocks with elementwise gain/shift
    std::size_t in_dim = 16;
    std::size_t hidden = 64;
    std::size_t classes = 8;

    std::size_t eval_examples = 512;

    std::size_t feature_len() const {
        return family == TaskFamily::kLinearRegression ? lin_dim : in_dim;
    }
    std::uint64_t tokens_per_example() const { return feature_len(); }
};

std::vector<core::TensorSpec> model_tensors(const TaskSpec& task);
core::ParamStore init_params(const TaskSpec& task);
std::size_t transformer_layer_count(const TaskSpec& task);

/// Generating weights (dim entries) plus bias of the regression task.
std::vector<double> lin_true_params(const TaskSpec& task);

struct Batch {
    std::size_t examples = 0;
    std::vector<double> x;                // row-major, examples x feature_len
    std::vector<std::uint32_t> labels;    // classifier targets
    std::vector<double> targets;          // regression targets
    std::uint64_t tokens = 0;
};

/// Batch for shard m at local step k (1-based). Count may be scaled down by
/// the chaos model; identical (seed, m, k, examples) give identical batches.
Batch sample_batch(const TaskSpec& task, std::uint32_t shard, std::uint64_t step,
                   std::size_t examples);
Batch eval_batch(const TaskSpec& task);

double loss(const TaskSpec& task, const core::ParamStore& params, const Batch& batch);
/// Returns the loss; writes the exact mean gradient into grad (same shape).
double loss_and_grad(const TaskSpec& task, const core::ParamStore& params, const Batch& batch,
                     core::ParamStore& grad);

/// The SPMD data-parallel baseline: one model, per-step gradient averaged
/// across all M shards.
core::ParamStore run_dp_reference(const TaskSpec& task, std::uint64_t steps,
                                  const optim::InnerOptConfig& inner_cfg);

}  // namespace ddl::harness
