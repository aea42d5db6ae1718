#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddl/core/model.hpp"

namespace ddl::frag {

/// Assignment of tensors to P fragments plus per-fragment sync offsets.
/// Tensor order inside a fragment is the plan's listing order; bit-exact
/// serialization depends on it.
class FragmentPlan {
  public:
    FragmentPlan() = default;
    FragmentPlan(std::size_t tensor_count, std::size_t fragment_count);

    std::size_t fragment_count() const { return members_.size(); }
    std::size_t tensor_count() const { return assignment_.size(); }

    void assign(std::size_t tensor_id, std::size_t fragment_id);
    std::size_t fragment_of(std::size_t tensor_id) const;
    const std::vector<std::size_t>& tensors_of(std::size_t fragment_id) const;

    bool offsets_assigned() const { return !offsets_.empty(); }
    std::int64_t offset_of(std::size_t fragment_id) const;
    void set_offsets(std::vector<std::int64_t> offsets);

    std::size_t sync_interval() const { return sync_interval_; }
    void set_sync_interval(std::size_t h) { sync_interval_ = h; }

    /// Element count of fragment p under the given model.
    std::size_t load(const std::vector<core::TensorSpec>& model, std::size_t fragment_id) const;
    std::size_t byte_size(const std::vector<core::TensorSpec>& model, std::size_t fragment_id) const;
    std::size_t max_load(const std::vector<core::TensorSpec>& model) const;

    /// Throws unless the assignment is total, single-valued and covering.
    void validate(const std::vector<core::TensorSpec>& model) const;

    /// Fragment eligible at syncer step t, or -1 when none.
    std::int64_t eligible_fragment(std::int64_t t) const;

  private:
    std::vector<std::size_t> assignment_;               // tensor -> fragment
    std::vector<std::vector<std::size_t>> members_;     // fragment -> tensors, plan order
    std::vector<std::int64_t> offsets_;                 // fragment -> t_p
    std::size_t sync_interval_ = 0;                     // H, set with offsets
};

core::FragmentSlice fragment_slice(core::ParamStore& store, const FragmentPlan& plan,
                                   std::size_t fragment_id);
std::vector<double> read_fragment(const core::ParamStore& store, const FragmentPlan& plan,
                                  std::size_t fragment_id);
void write_fragment(core::ParamStore& store, const FragmentPlan& plan, std::size_t fragment_id,
                    std::span<const double> values);

/// Single fragment for all non-transformer tensors, then strided selection
/// over transformer layers: layer i joins fragment 1 + ((i-1) mod (P-1)).
FragmentPlan plan_layer(const std::vector<core::TensorSpec>& model, std::size_t layer_count,
                        std::size_t fragment_count);

/// Non-transformer tensors in fragment 0; transformer tensor j (1-based, in
/// model order) joins fragment 1 + ((j-1) mod (P-1)).
FragmentPlan plan_tensor(const std::vector<core::TensorSpec>& model, std::size_t fragment_count);

/// Greedy number partitioning: tensors in descending size order, each placed
/// into the currently lightest fragment. Ties break to the lower fragment id
/// and lexicographically smaller tensor name. If the model has an embedding
/// tensor, fragments are relabeled so the one holding the largest embedding
/// tensor is fragment 0 (and so gets offset 0).
FragmentPlan plan_balanced(const std::vector<core::TensorSpec>& model, std::size_t fragment_count);

/// Offsets t_p = p; with H = P every step syncs exactly one fragment.
FragmentPlan assign_offsets(FragmentPlan plan, std::size_t sync_interval);

/// One text line per fragment: fragment_id,offset,space-separated tensor
/// names,total element size.
std::string serialize_plan(const FragmentPlan& plan, const std::vector<core::TensorSpec>& model);

}  // namespace ddl::frag
