#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ddl::core {

enum class TensorKind { kEmbedding, kTransformer, kOther };

struct TensorSpec {
    std::string name;
    std::size_t size = 0;  // element count
    TensorKind kind = TensorKind::kOther;
    int layer = -1;  // 1-based transformer layer index, -1 for non-layer tensors
};

/// Flat f64 parameter vector partitioned into named tensors. Tensor views are
/// disjoint and cover the value vector exactly; all cross-worker movement is
/// by value (serialized copies), never by sharing.
class ParamStore {
  public:
    ParamStore() = default;
    explicit ParamStore(std::vector<TensorSpec> tensors);

    std::size_t size() const { return values_.size(); }
    std::size_t tensor_count() const { return tensors_.size(); }
    const std::vector<TensorSpec>& tensors() const { return tensors_; }
    const TensorSpec& tensor(std::size_t id) const { return tensors_.at(id); }
    std::size_t tensor_offset(std::size_t id) const { return offsets_.at(id); }

    std::span<double> tensor_values(std::size_t id) {
        return std::span<double>(values_.data() + offsets_.at(id), tensors_[id].size);
    }
    std::span<const double> tensor_values(std::size_t id) const {
        return std::span<const double>(values_.data() + offsets_.at(id), tensors_[id].size);
    }

    std::span<double> all() { return values_; }
    std::span<const double> all() const { return values_; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool same_shape(const ParamStore& other) const;

  private:
    std::vector<TensorSpec> tensors_;
    std::vector<std::size_t> offsets_;
    std::vector<double> values_;
};

/// Mutable view over a fragment: the concatenation of its tensors in plan
/// order. Writing through the slice mutates the owning store.
class FragmentSlice {
  public:
    FragmentSlice(ParamStore& store, std::span<const std::size_t> tensor_ids);

    std::size_t size() const { return total_; }

    double& operator[](std::size_t i);
    double operator[](std::size_t i) const;

    std::vector<double> gather() const;
    void scatter(std::span<const double> values);

    const std::vector<std::span<double>>& segments() const { return segments_; }

  private:
    std::vector<std::span<double>> segments_;
    std::size_t total_ = 0;
};

// --- fragment payload wire format --------------------------------------
// (fragment_id: u32 LE, element_count: u64 LE, values: f64 LE each)

void encode_fragment_payload(std::uint32_t fragment_id, std::span<const double> values,
                             std::vector<std::uint8_t>& out);
// Returns bytes consumed; throws DimensionError on truncated input.
std::size_t decode_fragment_payload(std::span<const std::uint8_t> in, std::uint32_t& fragment_id,
                                    std::vector<double>& values);

/// FNV-1a over the little-endian byte image of the values. The bit pattern,
/// not the numeric value, is hashed: -0.0 and 0.0 differ.
std::uint64_t checksum(std::span<const double> values);

}  // namespace ddl::core
