#include "iotad/binary_io.hpp"

#include <bit>
#include <string>

#include "iotad/errors.hpp"

namespace iotad {

void ByteWriter::put_tag(std::string_view tag) {
    for (char c : tag) bytes_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) {
        throw DataError("truncated model bytes: need " + std::to_string(n) + " at offset " +
                        std::to_string(pos_) + ", have " + std::to_string(remaining()));
    }
}

void ByteReader::expect_tag(std::string_view tag) {
    need(tag.size());
    for (char c : tag) {
        if (bytes_[pos_++] != static_cast<std::uint8_t>(c)) {
            throw DataError("bad magic tag: expected \"" + std::string(tag) + "\"");
        }
    }
}

std::uint8_t ByteReader::get_u8() {
    need(1);
    return bytes_[pos_++];
}

std::uint32_t ByteReader::get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
}

std::uint64_t ByteReader::get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
}

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

void ByteReader::expect_end() const {
    if (remaining() != 0) {
        throw DataError("trailing bytes after model: " + std::to_string(remaining()));
    }
}

}  // namespace iotad
