#include "ddl/harness/task.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ddl/causality/rng.hpp"
#include "ddl/errors.hpp"

namespace ddl::harness {

namespace {

// Chunked example accumulation keeps gradients identical for any thread
// count; chunk partials fold in order.
constexpr std::size_t kExampleChunk = 8;

std::vector<double> class_centers(const TaskSpec& task) {
    rng::Stream s(task.seed, "task.centers");
    std::vector<double> centers(task.classes * task.in_dim);
    for (auto& v : centers) v = 2.0 * s.next_normal();
    return centers;
}

std::vector<double> true_weights(const TaskSpec& task) {
    rng::Stream s(task.seed, "task.truth");
    std::vector<double> w(task.lin_dim + 1);
    for (auto& v : w) v = 1.0 + 0.25 * s.next_normal();  // kept away from zero
    return w;
}

Batch lin_shard_data(const TaskSpec& task, std::uint32_t shard, std::size_t examples) {
    auto w = true_weights(task);
    Batch b;
    b.examples = std::min(examples, task.lin_shard_samples);
    b.x.resize(b.examples * task.lin_dim);
    b.targets.resize(b.examples);
    rng::Stream s(task.seed, "task.data", shard);
    for (std::size_t i = 0; i < task.lin_shard_samples; ++i) {
        double y = w[task.lin_dim];
        for (std::size_t j = 0; j < task.lin_dim; ++j) {
            double xv = s.next_normal();
            y += w[j] * xv;
            if (i < b.examples) b.x[i * task.lin_dim + j] = xv;
        }
        if (task.lin_noise > 0.0) y += task.lin_noise * s.next_normal();
        if (i < b.examples) b.targets[i] = y;
    }
    b.tokens = b.examples * task.tokens_per_example();
    return b;
}

Batch mlp_batch(const TaskSpec& task, std::uint32_t shard, std::uint64_t step,
                std::size_t examples) {
    auto centers = class_centers(task);
    Batch b;
    b.examples = examples;
    b.x.resize(examples * task.in_dim);
    b.labels.resize(examples);
    rng::Stream s(task.seed, "task.data", shard, step);
    for (std::size_t i = 0; i < examples; ++i) {
        std::uint32_t label = static_cast<std::uint32_t>(s.next_below(task.classes));
        b.labels[i] = label;
        for (std::size_t j = 0; j < task.in_dim; ++j)
            b.x[i * task.in_dim + j] = centers[label * task.in_dim + j] + s.next_normal();
    }
    b.tokens = b.examples * task.tokens_per_example();
    return b;
}

struct MlpViews {
    std::span<const double> w_in, b_in, w1, b1, g1, s1, w2, b2, g2, s2, w_out, b_out;
};

MlpViews mlp_views(const core::ParamStore& p) {
    return MlpViews{p.tensor_values(0), p.tensor_values(1), p.tensor_values(2),
                    p.tensor_values(3), p.tensor_values(4), p.tensor_values(5),
                    p.tensor_values(6), p.tensor_values(7), p.tensor_values(8),
                    p.tensor_values(9), p.tensor_values(10), p.tensor_values(11)};
}

struct MlpActs {
    std::vector<double> h0, z1, h1, z2, h2, logits, probs;
};

// Forward for one example; returns -log p[label].
double mlp_forward(const TaskSpec& t, const MlpViews& v, const double* x, std::uint32_t label,
                   MlpActs& a) {
    const std::size_t H = t.hidden, C = t.classes, D = t.in_dim;
    a.h0.assign(H, 0.0);
    a.z1.assign(H, 0.0);
    a.h1.assign(H, 0.0);
    a.z2.assign(H, 0.0);
    a.h2.assign(H, 0.0);
    a.logits.assign(C, 0.0);
    a.probs.assign(C, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        double acc = v.b_in[j];
        for (std::size_t i = 0; i < D; ++i) acc += x[i] * v.w_in[i * H + j];
        a.h0[j] = std::tanh(acc);
    }
    for (std::size_t j = 0; j < H; ++j) {
        double acc = v.b1[j];
        for (std::size_t i = 0; i < H; ++i) acc += a.h0[i] * v.w1[i * H + j];
        a.z1[j] = acc;
        a.h1[j] = std::tanh(v.g1[j] * acc + v.s1[j]);
    }
    for (std::size_t j = 0; j < H; ++j) {
        double acc = v.b2[j];
        for (std::size_t i = 0; i < H; ++i) acc += a.h1[i] * v.w2[i * H + j];
        a.z2[j] = acc;
        a.h2[j] = std::tanh(v.g2[j] * acc + v.s2[j]);
    }
    double maxlogit = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
        double acc = v.b_out[c];
        for (std::size_t i = 0; i < H; ++i) acc += a.h2[i] * v.w_out[i * C + c];
        a.logits[c] = acc;
        maxlogit = std::max(maxlogit, acc);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        a.probs[c] = std::exp(a.logits[c] - maxlogit);
        z += a.probs[c];
    }
    for (std::size_t c = 0; c < C; ++c) a.probs[c] /= z;
    return -std::log(std::max(a.probs[label], 1e-300));
}

struct MlpGradViews {
    std::span<double> w_in, b_in, w1, b1, g1, s1, w2, b2, g2, s2, w_out, b_out;
};

MlpGradViews mlp_grad_views(core::ParamStore& p) {
    return MlpGradViews{p.tensor_values(0), p.tensor_values(1), p.tensor_values(2),
                        p.tensor_values(3), p.tensor_values(4), p.tensor_values(5),
                        p.tensor_values(6), p.tensor_values(7), p.tensor_values(8),
                        p.tensor_values(9), p.tensor_values(10), p.tensor_values(11)};
}

void mlp_backward(const TaskSpec& t, const MlpViews& v, const double* x, std::uint32_t label,
                  const MlpActs& a, MlpGradViews& g) {
    const std::size_t H = t.hidden, C = t.classes, D = t.in_dim;
    std::vector<double> dlogits(a.probs);
    dlogits[label] -= 1.0;
    for (std::size_t c = 0; c < C; ++c) {
        g.b_out[c] += dlogits[c];
        for (std::size_t i = 0; i < H; ++i) g.w_out[i * C + c] += a.h2[i] * dlogits[c];
    }
    std::vector<double> dh2(H, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += dlogits[c] * v.w_out[i * C + c];
        dh2[i] = acc;
    }
    std::vector<double> dz2(H, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        double da = dh2[j] * (1.0 - a.h2[j] * a.h2[j]);
        g.g2[j] += da * a.z2[j];
        g.s2[j] += da;
        dz2[j] = da * v.g2[j];
        g.b2[j] += dz2[j];
    }
    std::vector<double> dh1(H, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) {
            acc += dz2[j] * v.w2[i * H + j];
            g.w2[i * H + j] += a.h1[i] * dz2[j];
        }
        dh1[i] = acc;
    }
    std::vector<double> dz1(H, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        double da = dh1[j] * (1.0 - a.h1[j] * a.h1[j]);
        g.g1[j] += da * a.z1[j];
        g.s1[j] += da;
        dz1[j] = da * v.g1[j];
        g.b1[j] += dz1[j];
    }
    std::vector<double> dh0(H, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) {
            acc += dz1[j] * v.w1[i * H + j];
            g.w1[i * H + j] += a.h0[i] * dz1[j];
        }
        dh0[i] = acc;
    }
    for (std::size_t i = 0; i < H; ++i) {
        double da = dh0[i] * (1.0 - a.h0[i] * a.h0[i]);
        g.b_in[i] += da;
        for (std::size_t d = 0; d < D; ++d) g.w_in[d * H + i] += x[d] * da;
    }
}

double mlp_loss_and_grad(const TaskSpec& task, const core::ParamStore& params, const Batch& batch,
                         core::ParamStore* grad) {
    MlpViews v = mlp_views(params);
    const std::size_t n = batch.examples;
    const std::size_t nchunks = (n + kExampleChunk - 1) / kExampleChunk;
    std::vector<double> chunk_loss(nchunks, 0.0);
    std::vector<core::ParamStore> chunk_grad;
    if (grad) chunk_grad.assign(nchunks, core::ParamStore(model_tensors(task)));

    const std::int64_t nc = static_cast<std::int64_t>(nchunks);
#pragma omp parallel for schedule(static) if (nchunks > 1)
    for (std::int64_t c = 0; c < nc; ++c) {
        MlpActs acts;
        std::size_t begin = static_cast<std::size_t>(c) * kExampleChunk;
        std::size_t end = std::min(begin + kExampleChunk, n);
        MlpGradViews gv{};
        if (grad) gv = mlp_grad_views(chunk_grad[c]);
        for (std::size_t i = begin; i < end; ++i) {
            const double* x = batch.x.data() + i * task.in_dim;
            chunk_loss[c] += mlp_forward(task, v, x, batch.labels[i], acts);
            if (grad) mlp_backward(task, v, x, batch.labels[i], acts, gv);
        }
    }

    double total = 0.0;
    for (double l : chunk_loss) total += l;
    if (grad) {
        std::fill(grad->all().begin(), grad->all().end(), 0.0);
        for (const auto& cg : chunk_grad) {
            auto dst = grad->all();
            auto src = cg.all();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        double inv = 1.0 / static_cast<double>(n);
        for (auto& gval : grad->all()) gval *= inv;
    }
    return total / static_cast<double>(n);
}

double lin_loss_and_grad(const TaskSpec& task, const core::ParamStore& params, const Batch& batch,
                         core::ParamStore* grad) {
    auto w = params.tensor_values(0);
    auto b = params.tensor_values(1);
    const std::size_t n = batch.examples, d = task.lin_dim;
    double total = 0.0;
    if (grad) std::fill(grad->all().begin(), grad->all().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = batch.x.data() + i * d;
        double pred = b[0];
        for (std::size_t j = 0; j < d; ++j) pred += w[j] * x[j];
        double r = pred - batch.targets[i];
        total += 0.5 * r * r;
        if (grad) {
            auto gw = grad->tensor_values(0);
            auto gb = grad->tensor_values(1);
            for (std::size_t j = 0; j < d; ++j) gw[j] += r * x[j];
            gb[0] += r;
        }
    }
    double inv = 1.0 / static_cast<double>(n);
    if (grad)
        for (auto& gval : grad->all()) gval *= inv;
    return total * inv;
}

}  // namespace

std::vector<core::TensorSpec> model_tensors(const TaskSpec& task) {
    using core::TensorKind;
    if (task.family == TaskFamily::kLinearRegression) {
        return {{"weights", task.lin_dim, TensorKind::kOther, -1},
                {"bias", 1, TensorKind::kOther, -1}};
    }
    const std::size_t H = task.hidden;
    std::vector<core::TensorSpec> t;
    t.push_back({"embed.w", task.in_dim * H, TensorKind::kEmbedding, -1});
    t.push_back({"embed.b", H, TensorKind::kOther, -1});
    for (int layer = 1; layer <= 2; ++layer) {
        std::string prefix = "block" + std::to_string(layer) + ".";
        t.push_back({prefix + "w", H * H, TensorKind::kTransformer, layer});
        t.push_back({prefix + "b", H, TensorKind::kTransformer, layer});
        t.push_back({prefix + "gain", H, TensorKind::kTransformer, layer});
        t.push_back({prefix + "shift", H, TensorKind::kTransformer, layer});
    }
    t.push_back({"head.w", H * task.classes, TensorKind::kOther, -1});
    t.push_back({"head.b", task.classes, TensorKind::kOther, -1});
    return t;
}

std::size_t transformer_layer_count(const TaskSpec& task) {
    return task.family == TaskFamily::kMlpClassifier ? 2 : 0;
}

std::vector<double> lin_true_params(const TaskSpec& task) { return true_weights(task); }

core::ParamStore init_params(const TaskSpec& task) {
    core::ParamStore p(model_tensors(task));
    rng::Stream s(task.seed, "task.init");
    if (task.family == TaskFamily::kLinearRegression) {
        // Start in the true weights' sign basin, away from zero crossings.
        for (auto& v : p.tensor_values(0)) v = 0.5 + 0.01 * s.next_normal();
        p.tensor_values(1)[0] = 0.5;
        return p;
    }
    auto fill = [&](std::size_t id, double scale) {
        for (auto& v : p.tensor_values(id)) v = scale * s.next_normal();
    };
    fill(0, 1.0 / std::sqrt(static_cast<double>(task.in_dim)));
    fill(2, 1.0 / std::sqrt(static_cast<double>(task.hidden)));
    fill(6, 1.0 / std::sqrt(static_cast<double>(task.hidden)));
    fill(10, 1.0 / std::sqrt(static_cast<double>(task.hidden)));
    for (std::size_t id : {4u, 8u})
        for (auto& v : p.tensor_values(id)) v = 1.0;
    return p;
}

Batch sample_batch(const TaskSpec& task, std::uint32_t shard, std::uint64_t step,
                   std::size_t examples) {
    if (examples == 0) throw DimensionError("batch needs at least one example");
    if (task.family == TaskFamily::kLinearRegression) return lin_shard_data(task, shard, examples);
    return mlp_batch(task, shard, step, examples);
}

Batch eval_batch(const TaskSpec& task) {
    if (task.family == TaskFamily::kLinearRegression)
        return lin_shard_data(task, 0xFFFF, task.lin_shard_samples);
    return mlp_batch(task, 0xFFFF, 0, task.eval_examples);
}

double loss(const TaskSpec& task, const core::ParamStore& params, const Batch& batch) {
    if (task.family == TaskFamily::kLinearRegression)
        return lin_loss_and_grad(task, params, batch, nullptr);
    return mlp_loss_and_grad(task, params, batch, nullptr);
}

double loss_and_grad(const TaskSpec& task, const core::ParamStore& params, const Batch& batch,
                     core::ParamStore& grad) {
    if (!grad.same_shape(params)) throw DimensionError("gradient store shape mismatch");
    if (task.family == TaskFamily::kLinearRegression)
        return lin_loss_and_grad(task, params, batch, &grad);
    return mlp_loss_and_grad(task, params, batch, &grad);
}

core::ParamStore run_dp_reference(const TaskSpec& task, std::uint64_t steps,
                                  const optim::InnerOptConfig& inner_cfg) {
    core::ParamStore theta = init_params(task);
    core::ParamStore grad(model_tensors(task));
    core::ParamStore shard_grad(model_tensors(task));
    optim::InnerOpt inner(inner_cfg, theta.size());
    for (std::uint64_t k = 1; k <= steps; ++k) {
        std::fill(grad.all().begin(), grad.all().end(), 0.0);
        for (std::uint32_t m = 0; m < task.shards; ++m) {
            auto batch = sample_batch(task, m, k, task.batch_examples);
            loss_and_grad(task, theta, batch, shard_grad);
            auto dst = grad.all();
            auto src = shard_grad.all();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        double inv = 1.0 / static_cast<double>(task.shards);
        for (auto& g : grad.all()) g *= inv;
        inner.step(theta.all(), grad.all());
    }
    return theta;
}

}  // namespace ddl::harness
