#pragma once

// Little-endian primitive encoding shared by the QPLD and QPCK formats.
// Internal header.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "poisonlab/error.hpp"

namespace poisonlab::binio {

template <typename U>
void put_uint(std::ostream& os, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFU);
  }
  os.write(bytes, sizeof(U));
}

inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }
inline void put_i64(std::ostream& os, std::int64_t v) {
  put_uint(os, static_cast<std::uint64_t>(v));
}

/// Reader that names the file and byte offset in every error.
class Reader {
 public:
  Reader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

  template <typename U>
  U uint(const char* what) {
    unsigned char bytes[sizeof(U)];
    read(bytes, sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
    return static_cast<U>(v);
  }

  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  std::int64_t i64(const char* what) { return static_cast<std::int64_t>(uint<std::uint64_t>(what)); }

  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      fail(std::string("truncated while reading ") + what);
    }
    offset_ += n;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IngestionError(name_ + ": " + msg + " at offset " + std::to_string(offset_));
  }

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& is_;
  std::string name_;
  std::uint64_t offset_ = 0;
};

}  // namespace poisonlab::binio
