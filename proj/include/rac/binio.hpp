#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "rac/error.hpp"
#include "rac/matrix.hpp"

namespace rac {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian; big-endian hosts are unsupported");

/// Appends little-endian fields to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const std::size_t n = bytes_.size();
    bytes_.resize(n + sizeof(T));
    std::memcpy(bytes_.data() + n, &v, sizeof(T));
  }

  void put_bytes(const void* p, std::size_t n) {
    const std::size_t at = bytes_.size();
    bytes_.resize(at + n);
    std::memcpy(bytes_.data() + at, p, n);
  }

  template <typename T>
  void put_matrix(const Matrix<T>& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    put_bytes(m.data(), m.size() * sizeof(T));
  }

  void put_id_list(const std::vector<std::uint32_t>& ids) {
    put<std::uint32_t>(static_cast<std::uint32_t>(ids.size()));
    put_bytes(ids.data(), ids.size() * sizeof(std::uint32_t));
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian fields, throwing CorruptIndexError with the current
/// byte offset on truncation or bound violations.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return off_; }
  bool exhausted() const { return off_ == bytes_.size(); }

  template <typename T>
  T get(const char* field) {
    static_assert(std::is_trivially_copyable_v<T>);
    require(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + off_, sizeof(T));
    off_ += sizeof(T);
    return v;
  }

  void get_bytes(void* out, std::size_t n, const char* field) {
    require(n, field);
    std::memcpy(out, bytes_.data() + off_, n);
    off_ += n;
  }

  template <typename T>
  Matrix<T> get_matrix(const char* field, std::uint64_t max_rows, std::uint64_t max_cols) {
    const auto rows = get<std::uint64_t>(field);
    const auto cols = get<std::uint64_t>(field);
    if (rows > max_rows || cols > max_cols) {
      throw CorruptIndexError(std::string("implausible matrix shape for ") + field, off_);
    }
    Matrix<T> m(rows, cols);
    get_bytes(m.data(), m.size() * sizeof(T), field);
    return m;
  }

  std::vector<std::uint32_t> get_id_list(const char* field, std::uint64_t bound) {
    const auto count = get<std::uint32_t>(field);
    if (count > bound) {
      throw CorruptIndexError(std::string("id list too long for ") + field, off_);
    }
    std::vector<std::uint32_t> ids(count);
    get_bytes(ids.data(), count * sizeof(std::uint32_t), field);
    for (std::uint32_t id : ids) {
      if (id >= bound) {
        throw CorruptIndexError(std::string("id out of range in ") + field, off_);
      }
    }
    return ids;
  }

  void expect_exhausted() {
    if (!exhausted()) {
      throw CorruptIndexError("trailing bytes after payload", off_);
    }
  }

 private:
  void require(std::size_t n, const char* field) {
    if (bytes_.size() - off_ < n) {
      throw CorruptIndexError(std::string("truncated input while reading ") + field, off_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::uint64_t off_ = 0;
};

// FNV-1a, 64-bit. Used both for token hashing and for content checksums.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace rac
