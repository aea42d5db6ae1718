#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "ddl/errors.hpp"

namespace ddl::core {

/// Little-endian binary writer for wire frames and snapshot blobs.
class ByteWriter {
  public:
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put_int(v, 2); }
    void u32(std::uint32_t v) { put_int(v, 4); }
    void u64(std::uint64_t v) { put_int(v, 8); }
    void i64(std::int64_t v) { put_int(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_int(bits, 8);
    }
    void f64_vec(std::span<const double> v) {
        u64(v.size());
        for (double d : v) f64(d);
    }
    void u64_vec(std::span<const std::uint64_t> v) {
        u64(v.size());
        for (auto d : v) u64(d);
    }
    void str(const std::string& s) {
        u64(s.size());
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

  private:
    void put_int(std::uint64_t v, int nbytes) {
        for (int i = 0; i < nbytes; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    bool done() const { return pos_ == data_.size(); }
    std::size_t position() const { return pos_; }

    std::uint8_t u8() { return static_cast<std::uint8_t>(get_int(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get_int(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get_int(4)); }
    std::uint64_t u64() { return get_int(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get_int(8)); }
    double f64() {
        std::uint64_t bits = get_int(8);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<double> f64_vec() {
        std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> out(n);
        for (auto& v : out) v = f64();
        return out;
    }
    std::vector<std::uint64_t> u64_vec() {
        std::uint64_t n = u64();
        need(n * 8);
        std::vector<std::uint64_t> out(n);
        for (auto& v : out) v = u64();
        return out;
    }
    std::string str() {
        std::uint64_t n = u64();
        need(n);
        std::string out(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return out;
    }

  private:
    void need(std::uint64_t n) {
        if (pos_ + n > data_.size()) throw DimensionError("byte stream truncated");
    }
    std::uint64_t get_int(int nbytes) {
        need(nbytes);
        std::uint64_t v = 0;
        for (int i = 0; i < nbytes; ++i)
            v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += nbytes;
        return v;
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace ddl::core
