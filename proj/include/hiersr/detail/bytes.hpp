#ifndef HIERSR_DETAIL_BYTES_HPP
#define HIERSR_DETAIL_BYTES_HPP

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiersr/error.hpp"

namespace hiersr::detail {

using Bytes = std::vector<std::uint8_t>;

// Little-endian encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void f32s(std::span<const float> vs) {
        out_.reserve(out_.size() + 4 * vs.size());
        for (float v : vs) f32(v);
    }

    Bytes& bytes() { return out_; }
    Bytes take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes out_;
};

// Little-endian decoder; running past the end raises `on_short`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> in, Errc on_short) : in_(in), on_short_(on_short) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
    double f64() { return std::bit_cast<double>(get(8)); }

    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<float> f32s(std::size_t n) {
        need_count(n, 4);
        std::vector<float> out(n);
        for (auto& v : out) v = f32();
        return out;
    }

    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void need_count(std::size_t n, std::size_t width) {
        if (n > remaining() / width) fail(on_short_, "payload shorter than declared");
    }

private:
    void need(std::size_t n) {
        if (n > remaining()) fail(on_short_, "unexpected end of data at byte " + std::to_string(pos_));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    Errc on_short_;
};

}  // namespace hiersr::detail

#endif
