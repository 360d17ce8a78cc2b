#pragma once

// Byte strings and the canonical big-endian writer/reader shared by every
// wire encoding in the library.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmap {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Raised when a byte string is not a valid canonical encoding.
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

inline ByteView as_view(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

    /// Fixed-width bytes, no length prefix.
    void raw(ByteView v) { out_.insert(out_.end(), v.begin(), v.end()); }
    /// 4-byte big-endian length prefix, then the bytes.
    void bytes(ByteView v);

    [[nodiscard]] const Bytes& data() const& { return out_; }
    [[nodiscard]] Bytes take() && { return std::move(out_); }

private:
    Bytes out_;
};

class ByteReader {
public:
    explicit ByteReader(ByteView in) : in_(in) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    Bytes raw(std::size_t n);
    Bytes bytes();
    /// Count prefix for a list; rejects counts that cannot fit in the rest.
    std::uint32_t count(std::size_t min_element_size = 1);

    [[nodiscard]] bool done() const { return pos_ == in_.size(); }
    [[nodiscard]] std::size_t position() const { return pos_; }
    void expect_done() const;

private:
    void need(std::size_t n) const;

    ByteView in_;
    std::size_t pos_ = 0;
};

}  // namespace dmap
