#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "sdcl/errors.hpp"

namespace sdcl {

/// All binary artifacts (network checkpoints, replay buffer dumps) share this
/// leading magic; the field right after it tells the kinds apart.
inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '0', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    os.write(buf, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    char buf[4];
    if (!is.read(buf, 4)) throw ParseError("checkpoint: truncated (u32)");
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    os.write(buf, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    char buf[8];
    if (!is.read(buf, 8)) throw ParseError("checkpoint: truncated (u64)");
    std::uint64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

inline void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    if (n == 0) return;
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}

inline void get_doubles(std::istream& is, double* p, std::size_t n) {
    if (n == 0) return;
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8)))
        throw ParseError("checkpoint: truncated (reals)");
}

inline void put_magic(std::ostream& os) { os.write(kCheckpointMagic, 8); }

inline void check_magic(std::istream& is, const std::string& what) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ParseError(what + ": bad magic");
}

} // namespace detail
} // namespace sdcl
