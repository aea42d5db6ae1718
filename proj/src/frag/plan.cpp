#include "ddl/frag/plan.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "ddl/errors.hpp"

namespace ddl::frag {

namespace {
constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
}

FragmentPlan::FragmentPlan(std::size_t tensor_count, std::size_t fragment_count)
    : assignment_(tensor_count, kUnassigned), members_(fragment_count) {}

void FragmentPlan::assign(std::size_t tensor_id, std::size_t fragment_id) {
    if (fragment_id >= members_.size()) throw InfeasiblePlanError("fragment id out of range");
    if (assignment_.at(tensor_id) != kUnassigned)
        throw InfeasiblePlanError("tensor assigned twice");
    assignment_[tensor_id] = fragment_id;
    members_[fragment_id].push_back(tensor_id);
}

std::size_t FragmentPlan::fragment_of(std::size_t tensor_id) const {
    std::size_t f = assignment_.at(tensor_id);
    if (f == kUnassigned) throw InfeasiblePlanError("tensor not assigned");
    return f;
}

const std::vector<std::size_t>& FragmentPlan::tensors_of(std::size_t fragment_id) const {
    if (fragment_id >= members_.size())
        throw std::out_of_range("unknown fragment id " + std::to_string(fragment_id));
    return members_[fragment_id];
}

std::int64_t FragmentPlan::offset_of(std::size_t fragment_id) const {
    if (fragment_id >= offsets_.size())
        throw std::out_of_range("no offset for fragment " + std::to_string(fragment_id));
    return offsets_[fragment_id];
}

void FragmentPlan::set_offsets(std::vector<std::int64_t> offsets) {
    if (offsets.size() != members_.size())
        throw InfeasiblePlanError("offset count != fragment count");
    std::vector<std::int64_t> sorted = offsets;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InfeasiblePlanError("fragment offsets must be distinct");
    offsets_ = std::move(offsets);
}

std::size_t FragmentPlan::load(const std::vector<core::TensorSpec>& model,
                               std::size_t fragment_id) const {
    std::size_t total = 0;
    for (std::size_t id : tensors_of(fragment_id)) total += model.at(id).size;
    return total;
}

std::size_t FragmentPlan::byte_size(const std::vector<core::TensorSpec>& model,
                                    std::size_t fragment_id) const {
    return load(model, fragment_id) * sizeof(double);
}

std::size_t FragmentPlan::max_load(const std::vector<core::TensorSpec>& model) const {
    std::size_t best = 0;
    for (std::size_t p = 0; p < members_.size(); ++p) best = std::max(best, load(model, p));
    return best;
}

void FragmentPlan::validate(const std::vector<core::TensorSpec>& model) const {
    if (assignment_.size() != model.size())
        throw InfeasiblePlanError("plan tensor count != model tensor count");
    for (std::size_t t = 0; t < assignment_.size(); ++t)
        if (assignment_[t] == kUnassigned)
            throw InfeasiblePlanError("tensor '" + model[t].name + "' unassigned");
    std::size_t seen = 0;
    for (const auto& m : members_) seen += m.size();
    if (seen != model.size()) throw InfeasiblePlanError("fragments do not cover the model exactly");
}

std::int64_t FragmentPlan::eligible_fragment(std::int64_t t) const {
    if (offsets_.empty() || sync_interval_ == 0) return -1;
    std::int64_t phase = t % static_cast<std::int64_t>(sync_interval_);
    for (std::size_t p = 0; p < offsets_.size(); ++p)
        if (offsets_[p] == phase) return static_cast<std::int64_t>(p);
    return -1;
}

core::FragmentSlice fragment_slice(core::ParamStore& store, const FragmentPlan& plan,
                                   std::size_t fragment_id) {
    const auto& ids = plan.tensors_of(fragment_id);
    return core::FragmentSlice(store, ids);
}

std::vector<double> read_fragment(const core::ParamStore& store, const FragmentPlan& plan,
                                  std::size_t fragment_id) {
    std::vector<double> out;
    for (std::size_t id : plan.tensors_of(fragment_id)) {
        auto seg = store.tensor_values(id);
        out.insert(out.end(), seg.begin(), seg.end());
    }
    return out;
}

void write_fragment(core::ParamStore& store, const FragmentPlan& plan, std::size_t fragment_id,
                    std::span<const double> values) {
    fragment_slice(store, plan, fragment_id).scatter(values);
}

FragmentPlan plan_layer(const std::vector<core::TensorSpec>& model, std::size_t layer_count,
                        std::size_t fragment_count) {
    if (fragment_count == 0) throw InfeasiblePlanError("fragment count must be >= 1");
    bool has_layers = false;
    for (const auto& t : model)
        if (t.kind == core::TensorKind::kTransformer) has_layers = true;
    if (fragment_count > layer_count + 1)
        throw InfeasiblePlanError("layer plan needs P - 1 <= L");
    if (has_layers && fragment_count < 2)
        throw InfeasiblePlanError("layer plan needs a fragment beyond the non-transformer one");

    FragmentPlan plan(model.size(), fragment_count);
    std::size_t stride = fragment_count - 1;
    for (std::size_t t = 0; t < model.size(); ++t) {
        const auto& spec = model[t];
        if (spec.kind != core::TensorKind::kTransformer) {
            plan.assign(t, 0);
        } else {
            if (spec.layer < 1) throw InfeasiblePlanError("transformer tensor lacks a layer index");
            std::size_t layer = static_cast<std::size_t>(spec.layer);
            plan.assign(t, 1 + (layer - 1) % stride);
        }
    }
    plan.validate(model);
    return plan;
}

FragmentPlan plan_tensor(const std::vector<core::TensorSpec>& model, std::size_t fragment_count) {
    if (fragment_count < 2) throw InfeasiblePlanError("tensor plan needs P >= 2");
    std::size_t transformer_count = 0;
    for (const auto& t : model)
        if (t.kind == core::TensorKind::kTransformer) ++transformer_count;
    if (transformer_count < fragment_count - 1)
        throw InfeasiblePlanError("tensor plan needs at least P - 1 transformer tensors");

    FragmentPlan plan(model.size(), fragment_count);
    std::size_t stride = fragment_count - 1;
    std::size_t j = 0;  // 0-based transformer index in model order
    for (std::size_t t = 0; t < model.size(); ++t) {
        if (model[t].kind != core::TensorKind::kTransformer) {
            plan.assign(t, 0);
        } else {
            plan.assign(t, 1 + j % stride);
            ++j;
        }
    }
    plan.validate(model);
    return plan;
}

FragmentPlan plan_balanced(const std::vector<core::TensorSpec>& model, std::size_t fragment_count) {
    if (fragment_count == 0) throw InfeasiblePlanError("fragment count must be >= 1");
    if (model.size() < fragment_count)
        throw InfeasiblePlanError("balanced plan needs at least one tensor per fragment");

    std::vector<std::size_t> order(model.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (model[a].size != model[b].size) return model[a].size > model[b].size;
        return model[a].name < model[b].name;
    });

    FragmentPlan plan(model.size(), fragment_count);
    std::vector<std::size_t> loads(fragment_count, 0);
    for (std::size_t id : order) {
        std::size_t lightest = 0;
        for (std::size_t p = 1; p < fragment_count; ++p)
            if (loads[p] < loads[lightest]) lightest = p;
        plan.assign(id, lightest);
        loads[lightest] += model[id].size;
    }

    // The fragment holding the largest embedding tensor becomes fragment 0.
    std::size_t best_embed = kUnassigned;
    for (std::size_t t = 0; t < model.size(); ++t) {
        if (model[t].kind != core::TensorKind::kEmbedding) continue;
        if (best_embed == kUnassigned || model[t].size > model[best_embed].size) best_embed = t;
    }
    if (best_embed != kUnassigned && plan.fragment_of(best_embed) != 0) {
        std::size_t from = plan.fragment_of(best_embed);
        FragmentPlan relabeled(model.size(), fragment_count);
        for (std::size_t p = 0; p < fragment_count; ++p) {
            std::size_t target = p == from ? 0 : (p == 0 ? from : p);
            for (std::size_t id : plan.tensors_of(p)) relabeled.assign(id, target);
        }
        plan = std::move(relabeled);
    }

    plan.validate(model);
    return plan;
}

FragmentPlan assign_offsets(FragmentPlan plan, std::size_t sync_interval) {
    if (plan.fragment_count() > sync_interval)
        throw InfeasiblePlanError("offset assignment needs P <= H");
    std::vector<std::int64_t> offsets(plan.fragment_count());
    std::iota(offsets.begin(), offsets.end(), 0);
    plan.set_offsets(std::move(offsets));
    plan.set_sync_interval(sync_interval);
    return plan;
}

std::string serialize_plan(const FragmentPlan& plan, const std::vector<core::TensorSpec>& model) {
    std::ostringstream out;
    for (std::size_t p = 0; p < plan.fragment_count(); ++p) {
        out << p << ',' << (plan.offsets_assigned() ? plan.offset_of(p) : -1) << ',';
        const auto& ids = plan.tensors_of(p);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out << ' ';
            out << model[ids[i]].name;
        }
        out << ',' << plan.load(model, p) << '\n';
    }
    return out.str();
}

}  // namespace ddl::frag
