#pragma once

// Little-endian primitive encoding shared by the BACD and BAMD file formats.

#include "beamprobe/core.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace beamprobe::io {

class LittleEndianWriter {
 public:
  explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

  void bytes(std::string_view raw) { out_.write(raw.data(), static_cast<std::streamsize>(raw.size())); }

  void u8(std::uint8_t v) { put<1>(v); }
  void u32(std::uint32_t v) { put<4>(v); }
  void u64(std::uint64_t v) { put<8>(v); }
  void f64(double v) { put<8>(std::bit_cast<std::uint64_t>(v)); }
  void complex(Complex v) {
    f64(v.real());
    f64(v.imag());
  }

 private:
  template <int N>
  void put(std::uint64_t v) {
    std::array<char, N> buf{};
    for (int i = 0; i < N; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out_.write(buf.data(), N);
  }

  std::ostream& out_;
};

/// Reads little-endian primitives; every read names the field so that a
/// short file produces a FormatError pointing at what was missing.
class LittleEndianReader {
 public:
  explicit LittleEndianReader(std::istream& in) : in_(in) {}

  std::string bytes(std::size_t n, std::string_view field) {
    std::string raw(n, '\0');
    in_.read(raw.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) truncated(field);
    return raw;
  }

  std::uint8_t u8(std::string_view field) { return static_cast<std::uint8_t>(get<1>(field)); }
  std::uint32_t u32(std::string_view field) { return static_cast<std::uint32_t>(get<4>(field)); }
  std::uint64_t u64(std::string_view field) { return get<8>(field); }
  double f64(std::string_view field) { return std::bit_cast<double>(get<8>(field)); }
  Complex complex(std::string_view field) {
    const double re = f64(field);
    const double im = f64(field);
    return {re, im};
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] static void truncated(std::string_view field) {
    throw FormatError("truncated file: missing " + std::string(field));
  }

 private:
  template <int N>
  std::uint64_t get(std::string_view field) {
    std::array<unsigned char, N> buf{};
    in_.read(reinterpret_cast<char*>(buf.data()), N);
    if (in_.gcount() != N) truncated(field);
    std::uint64_t v = 0;
    for (int i = 0; i < N; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& in_;
};

}  // namespace beamprobe::io
