#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coldrec::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw std::runtime_error("truncated file while reading " + what);
    }
    return value;
}

inline void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), magic.size()); }

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& path) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), got.size());
    if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
        throw std::runtime_error(path + ": bad magic, expected " + std::string(magic));
    }
}

inline void write_string(std::ostream& out, std::string_view s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), s.size());
}

inline std::string read_string(std::istream& in, const std::string& what) {
    auto n = read_pod<std::uint32_t>(in, what);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (in.gcount() != static_cast<std::streamsize>(n)) throw std::runtime_error("truncated file while reading " + what);
    return s;
}

/// 64-bit FNV-1a; used for config and index fingerprints.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
    return s;
}

}  // namespace coldrec::io
