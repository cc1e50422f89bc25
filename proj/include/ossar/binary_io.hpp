#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ossar/errors.hpp"

// Little-endian primitives for the OSRP checkpoint and OSSF feature files.
namespace ossar::binary {

template <typename U>
inline void put_le(std::ostream& os, U value) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

template <typename U>
inline U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf{};
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw DataError("unexpected end of file");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
    return value;
}

inline void put_u16(std::ostream& os, std::uint16_t v) { put_le(os, v); }
inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline void put_i32(std::ostream& os, std::int32_t v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint16_t get_u16(std::istream& is) { return get_le<std::uint16_t>(is); }
inline std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
inline std::int32_t get_i32(std::istream& is) { return std::bit_cast<std::int32_t>(get_le<std::uint32_t>(is)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

inline std::uint32_t checked_u32(std::size_t n) {
    if (n > 0xFFFFFFFFull) throw DataError("length does not fit in u32");
    return static_cast<std::uint32_t>(n);
}

/// u32 length prefix followed by the values.
inline void put_f64_array(std::ostream& os, std::span<const double> values) {
    put_u32(os, checked_u32(values.size()));
    for (double v : values) put_f64(os, v);
}

inline std::vector<double> get_f64_array(std::istream& is, std::size_t expected) {
    const std::uint32_t n = get_u32(is);
    if (n != expected) {
        throw DataError("array length " + std::to_string(n) + " but expected " + std::to_string(expected));
    }
    std::vector<double> out(n);
    for (auto& v : out) v = get_f64(is);
    return out;
}

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::string got(magic.size(), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw DataError("bad magic bytes, expected '" + std::string(magic) + "'");
    }
}

}  // namespace ossar::binary
