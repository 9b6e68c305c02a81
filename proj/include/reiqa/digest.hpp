#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace reiqa {

/// 64-bit FNV-1a, used for content digests in manifests and tests.
class Digest {
public:
    Digest& update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Digest& update(std::string_view s) { return update(s.data(), s.size()); }
    template <typename T>
    Digest& update(std::span<const T> v) {
        return update(v.data(), v.size_bytes());
    }
    Digest& update_u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        return update(b, 8);
    }

    std::uint64_t value() const { return h_; }
    std::string hex() const { return to_hex(h_); }

    static std::string to_hex(std::uint64_t v) {
        static const char* digits = "0123456789abcdef";
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
        return s;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t digest_of(std::string_view s) { return Digest().update(s).value(); }

}  // namespace reiqa
