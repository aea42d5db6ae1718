#include "ddl/core/model.hpp"

#include <cstring>
#include <unordered_set>

#include "ddl/causality/rng.hpp"
#include "ddl/errors.hpp"

namespace ddl::core {

ParamStore::ParamStore(std::vector<TensorSpec> tensors) : tensors_(std::move(tensors)) {
    offsets_.reserve(tensors_.size());
    std::unordered_set<std::string> names;
    std::size_t total = 0;
    for (const auto& t : tensors_) {
        if (t.size < 1) throw DimensionError("tensor '" + t.name + "' has size 0");
        if (!names.insert(t.name).second)
            throw DimensionError("duplicate tensor name '" + t.name + "'");
        offsets_.push_back(total);
        total += t.size;
    }
    values_.assign(total, 0.0);
}

bool ParamStore::same_shape(const ParamStore& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].size != other.tensors_[i].size) return false;
        if (tensors_[i].name != other.tensors_[i].name) return false;
    }
    return true;
}

FragmentSlice::FragmentSlice(ParamStore& store, std::span<const std::size_t> tensor_ids) {
    segments_.reserve(tensor_ids.size());
    for (std::size_t id : tensor_ids) {
        if (id >= store.tensor_count()) throw DimensionError("fragment references unknown tensor");
        segments_.push_back(store.tensor_values(id));
        total_ += segments_.back().size();
    }
}

double& FragmentSlice::operator[](std::size_t i) {
    for (auto& seg : segments_) {
        if (i < seg.size()) return seg[i];
        i -= seg.size();
    }
    throw DimensionError("fragment slice index out of range");
}

double FragmentSlice::operator[](std::size_t i) const {
    return const_cast<FragmentSlice*>(this)->operator[](i);
}

std::vector<double> FragmentSlice::gather() const {
    std::vector<double> out;
    out.reserve(total_);
    for (const auto& seg : segments_) out.insert(out.end(), seg.begin(), seg.end());
    return out;
}

void FragmentSlice::scatter(std::span<const double> values) {
    if (values.size() != total_) throw DimensionError("fragment scatter length mismatch");
    std::size_t pos = 0;
    for (auto& seg : segments_) {
        std::memcpy(seg.data(), values.data() + pos, seg.size() * sizeof(double));
        pos += seg.size();
    }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t double_bits(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    return v;
}

double bits_double(std::uint64_t v) {
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void encode_fragment_payload(std::uint32_t fragment_id, std::span<const double> values,
                             std::vector<std::uint8_t>& out) {
    out.reserve(out.size() + 12 + values.size() * 8);
    put_u32(out, fragment_id);
    put_u64(out, values.size());
    for (double d : values) put_u64(out, double_bits(d));
}

std::size_t decode_fragment_payload(std::span<const std::uint8_t> in, std::uint32_t& fragment_id,
                                    std::vector<double>& values) {
    if (in.size() < 12) throw DimensionError("fragment payload truncated header");
    fragment_id = get_u32(in.data());
    std::uint64_t count = get_u64(in.data() + 4);
    std::size_t need = 12 + count * 8;
    if (in.size() < need) throw DimensionError("fragment payload truncated values");
    values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) values[i] = bits_double(get_u64(in.data() + 12 + i * 8));
    return need;
}

std::uint64_t checksum(std::span<const double> values) {
    std::uint64_t h = rng::kFnvOffset;
    for (double d : values) h = rng::fnv1a_u64(double_bits(d), h);
    return h;
}

}  // namespace ddl::core
