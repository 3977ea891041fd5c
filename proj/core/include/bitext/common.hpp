#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bitext {

static_assert(
        std::endian::native == std::endian::little,
        "on-disk formats are little-endian and written with memcpy");

using GlobalId = std::uint64_t;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// A file did not match its declared binary or text format
/// (bad magic, truncation, size mismatch, unparsable field).
class FormatError : public Error {
   public:
    using Error::Error;
};

/// Bad arguments or configuration.
class ConfigError : public Error {
   public:
    using Error::Error;
};

/// `{lang}.{block:05}.{ext}`
std::string block_file_name(
        std::string_view lang,
        std::uint32_t block,
        std::string_view ext);

std::string to_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any call is rethrown after all threads join.
void parallel_for(
        std::size_t n,
        unsigned workers,
        const std::function<void(std::size_t)>& fn);

unsigned default_workers();

/// Append-only little-endian byte buffer.
class ByteWriter {
   public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&value);
        buf_.append(p, sizeof(T));
    }

    void put_bytes(const void* data, std::size_t n) {
        buf_.append(static_cast<const char*>(data), n);
    }

    const std::string& bytes() const {
        return buf_;
    }
    std::string take() {
        return std::move(buf_);
    }

   private:
    std::string buf_;
};

/// Bounds-checked little-endian reader over a byte string. Reading past the
/// end throws FormatError mentioning `what`.
class ByteReader {
   public:
    ByteReader(std::string_view data, std::string what)
            : data_(data), what_(std::move(what)) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }

    void get_bytes(void* out, std::size_t n) {
        std::memcpy(out, take(n), n);
    }

    std::size_t remaining() const {
        return data_.size() - pos_;
    }
    std::size_t position() const {
        return pos_;
    }

   private:
    const char* take(std::size_t n);

    std::string_view data_;
    std::size_t pos_ = 0;
    std::string what_;
};

} // namespace bitext
