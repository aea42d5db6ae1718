#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "ddl/agg/aggregate.hpp"
#include "ddl/core/model.hpp"
#include "ddl/frag/plan.hpp"
#include "ddl/harness/task.hpp"
#include "ddl/optim/optimizers.hpp"

namespace oracles {

/// Exact number partitioning by exhaustive search over assignments, with
/// branch-and-bound pruning and bin-symmetry breaking. Minimal possible
/// maximum bin load; viable for the n <= 12, P <= 4 instances used here.
inline std::uint64_t brute_force_optimal_load(std::vector<std::uint64_t> sizes,
                                              std::size_t bins) {
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    std::size_t n = sizes.size();
    std::vector<std::uint64_t> suffix(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + sizes[i];
    std::uint64_t best = suffix[0];  // everything in one bin
    std::vector<std::uint64_t> loads(bins, 0);
    std::function<void(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t used) {
        if (i == n) {
            best = std::min(best, *std::max_element(loads.begin(), loads.end()));
            return;
        }
        // even a perfect split of the rest cannot beat this branch's floor
        std::uint64_t mx = *std::max_element(loads.begin(), loads.end());
        std::uint64_t lower = std::max<std::uint64_t>(
            mx, (suffix[0] + static_cast<std::uint64_t>(bins) - 1) /
                    static_cast<std::uint64_t>(bins));
        if (lower >= best) return;
        std::size_t limit = std::min(bins, used + 1);  // first item per new bin
        for (std::size_t b = 0; b < limit; ++b) {
            if (loads[b] + sizes[i] >= best) continue;
            loads[b] += sizes[i];
            go(i + 1, std::max(used, b + 1));
            loads[b] -= sizes[i];
        }
    };
    go(0, 0);
    return best;
}

/// Central finite differences of the task loss.
inline std::vector<double> finite_difference_grad(const ddl::harness::TaskSpec& task,
                                                  const ddl::core::ParamStore& params,
                                                  const ddl::harness::Batch& batch,
                                                  double h = 1e-6) {
    ddl::core::ParamStore work = params;
    std::vector<double> grad(params.size());
    auto values = work.all();
    for (std::size_t i = 0; i < values.size(); ++i) {
        double orig = values[i];
        values[i] = orig + h;
        double up = ddl::harness::loss(task, work, batch);
        values[i] = orig - h;
        double down = ddl::harness::loss(task, work, batch);
        values[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// Least-squares fit of [X 1] via normal equations and Gaussian elimination.
inline std::vector<double> normal_equations(const std::vector<double>& x,
                                            const std::vector<double>& y, std::size_t n,
                                            std::size_t d) {
    std::size_t cols = d + 1;
    std::vector<double> ata(cols * cols, 0.0), aty(cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < cols; ++a) {
            double xa = a < d ? x[i * d + a] : 1.0;
            aty[a] += xa * y[i];
            for (std::size_t b = 0; b < cols; ++b) {
                double xb = b < d ? x[i * d + b] : 1.0;
                ata[a * cols + b] += xa * xb;
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for (std::size_t col = 0; col < cols; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < cols; ++r)
            if (std::fabs(ata[r * cols + col]) > std::fabs(ata[pivot * cols + col])) pivot = r;
        if (pivot != col) {
            for (std::size_t c = 0; c < cols; ++c)
                std::swap(ata[col * cols + c], ata[pivot * cols + c]);
            std::swap(aty[col], aty[pivot]);
        }
        double diag = ata[col * cols + col];
        for (std::size_t r = col + 1; r < cols; ++r) {
            double f = ata[r * cols + col] / diag;
            for (std::size_t c = col; c < cols; ++c) ata[r * cols + c] -= f * ata[col * cols + c];
            aty[r] -= f * aty[col];
        }
    }
    std::vector<double> w(cols, 0.0);
    for (std::size_t r = cols; r-- > 0;) {
        double acc = aty[r];
        for (std::size_t c = r + 1; c < cols; ++c) acc -= ata[r * cols + c] * w[c];
        w[r] = acc / ata[r * cols + r];
    }
    return w;
}

/// One-sample Kolmogorov-Smirnov statistic against Exp(mean).
inline double ks_statistic_exponential(std::vector<double> samples, double mean) {
    std::sort(samples.begin(), samples.end());
    double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = 1.0 - std::exp(-samples[i] / mean);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

/// A blocking fragment-wise outer-optimization loop: every learner steps in
/// lockstep, every eligible fragment merges from all M learners against the
/// previous global values. Independent loop structure; shares only the
/// public arithmetic functions with the system under test.
struct BlockingReference {
    ddl::harness::TaskSpec task;
    const ddl::frag::FragmentPlan* plan = nullptr;
    ddl::agg::MergeConfig merge;
    ddl::optim::InnerOptConfig inner_cfg;
    ddl::optim::OuterOptConfig outer_cfg;
    double alpha = 0.0;

    ddl::core::ParamStore run(std::int64_t rounds,
                              std::vector<ddl::core::ParamStore>* learner_out = nullptr) {
        std::uint32_t m_count = task.shards;
        auto model = ddl::harness::model_tensors(task);
        ddl::core::ParamStore global = ddl::harness::init_params(task);
        std::vector<ddl::core::ParamStore> theta(m_count, global);
        std::vector<ddl::optim::InnerOpt> inner;
        for (std::uint32_t m = 0; m < m_count; ++m)
            inner.emplace_back(inner_cfg, global.size());
        std::vector<ddl::optim::OuterOpt> outer;
        std::vector<bool> embedding(plan->fragment_count(), false);
        for (std::size_t p = 0; p < plan->fragment_count(); ++p) {
            outer.emplace_back(outer_cfg, plan->load(model, p));
            for (std::size_t id : plan->tensors_of(p))
                if (model[id].kind == ddl::core::TensorKind::kEmbedding) embedding[p] = true;
        }
        std::vector<std::vector<std::uint64_t>> c_steps(
            m_count, std::vector<std::uint64_t>(plan->fragment_count(), 0));
        std::vector<std::vector<std::uint64_t>> c_tokens = c_steps;

        ddl::core::ParamStore grad(model);
        for (std::int64_t t = 1; t <= rounds; ++t) {
            for (std::uint32_t m = 0; m < m_count; ++m) {
                auto batch = ddl::harness::sample_batch(task, m, static_cast<std::uint64_t>(t),
                                                        task.batch_examples);
                ddl::harness::loss_and_grad(task, theta[m], batch, grad);
                inner[m].step(theta[m].all(), grad.all());
                for (std::size_t p = 0; p < plan->fragment_count(); ++p) {
                    c_steps[m][p] += 1;
                    c_tokens[m][p] += batch.tokens;
                }
            }
            std::int64_t p = plan->eligible_fragment(t);
            if (p < 0) continue;
            auto fragment = static_cast<std::uint32_t>(p);
            std::vector<ddl::agg::LearnerContribution> contribs;
            for (std::uint32_t m = 0; m < m_count; ++m) {
                ddl::agg::LearnerContribution c;
                c.learner_id = static_cast<std::uint16_t>(m);
                c.fragment_id = fragment;
                c.c_steps = c_steps[m][p];
                c.c_tokens = c_tokens[m][p];
                c.theta_frag = ddl::frag::read_fragment(theta[m], *plan, fragment);
                contribs.push_back(std::move(c));
            }
            auto prev = ddl::frag::read_fragment(global, *plan, fragment);
            auto delta = ddl::agg::merge(contribs, prev, merge, embedding[p]);
            auto next = outer[p].step(prev, delta);
            ddl::frag::write_fragment(global, *plan, fragment, next);
            for (std::uint32_t m = 0; m < m_count; ++m) {
                auto local = ddl::frag::read_fragment(theta[m], *plan, fragment);
                auto mixed = ddl::optim::apply_received_fragment(local, next, alpha);
                ddl::frag::write_fragment(theta[m], *plan, fragment, mixed);
                c_steps[m][p] = 0;
                c_tokens[m][p] = 0;
            }
        }
        if (learner_out) *learner_out = theta;
        return global;
    }
};

}  // namespace oracles
