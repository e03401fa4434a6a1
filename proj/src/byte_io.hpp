#pragma once

// Little-endian cursor helpers shared by the checkpoint and tokenizer codecs.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "q8llama/errors.hpp"

namespace q8llama::detail {

template <typename T>
T from_le(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
        std::reverse(raw.begin(), raw.end());
        return std::bit_cast<T>(raw);
    }
    return v;
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <typename T>
    T read(const char* what) {
        T v{};
        need(sizeof(T), what);
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return from_le(v);
    }

    template <typename T>
    void read_array(std::span<T> out, const char* what) {
        need(out.size_bytes(), what);
        std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
        if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
            for (auto& v : out) {
                v = from_le(v);
            }
        }
    }

    template <typename T>
    std::vector<T> read_vector(std::size_t n, const char* what) {
        std::vector<T> v(n);
        read_array(std::span<T>(v), what);
        return v;
    }

    void skip(std::size_t n, const char* what) {
        need(n, what);
        pos_ += n;
    }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(std::string("truncated input while reading ") + what + " at byte " +
                              std::to_string(pos_));
        }
    }

    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

class ByteWriter {
public:
    template <typename T>
    void write(T v) {
        v = from_le(v);
        const auto* p = reinterpret_cast<const std::byte*>(&v);
        out_.insert(out_.end(), p, p + sizeof(T));
    }

    template <typename T>
    void write_array(std::span<const T> values) {
        if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
            for (const T& v : values) {
                write(v);
            }
        } else {
            const auto* p = reinterpret_cast<const std::byte*>(values.data());
            out_.insert(out_.end(), p, p + values.size_bytes());
        }
    }

    void pad_to(std::size_t size) {
        if (out_.size() < size) {
            out_.resize(size, std::byte{0});
        }
    }

    std::size_t size() const { return out_.size(); }
    std::vector<std::byte> take() { return std::move(out_); }

private:
    std::vector<std::byte> out_;
};

}  // namespace q8llama::detail
