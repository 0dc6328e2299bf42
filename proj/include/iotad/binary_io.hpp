#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace iotad {

// Little-endian fixed-width encoder used by the model formats.
class ByteWriter {
public:
    void put_tag(std::string_view tag);
    void put_u8(std::uint8_t v) { bytes_.push_back(v); }
    void put_u32(std::uint32_t v);
    void put_u64(std::uint64_t v);
    void put_f64(double v);

    const std::vector<std::uint8_t>& bytes() const& noexcept { return bytes_; }
    std::vector<std::uint8_t> bytes() && noexcept { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

// Throws DataError on truncation or a tag mismatch.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void expect_tag(std::string_view tag);
    std::uint8_t get_u8();
    std::uint32_t get_u32();
    std::uint64_t get_u64();
    double get_f64();

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    void expect_end() const;

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace iotad
