#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "marti/common.hpp"

namespace marti {

/// Little-endian binary writer used by the snapshot format.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void u32str(std::u32string_view s) {
    u64(s.size());
    for (char32_t c : s) u32(static_cast<std::uint32_t>(c));
  }
  void vec(const Vector& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void rng(const Rng& r) {
    std::ostringstream os;
    os << r;
    str(os.str());
  }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool boolean() {
    auto v = u8();
    if (v > 1) throw SnapshotError("corrupt snapshot: bad boolean");
    return v == 1;
  }
  std::string str() {
    auto n = length();
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::u32string u32str() {
    auto n = length(4);
    std::u32string s;
    s.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) s.push_back(static_cast<char32_t>(u32()));
    return s;
  }
  Vector vec() {
    auto n = length(8);
    Vector v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  void rng(Rng& r) {
    std::istringstream is(str());
    is >> r;
    if (!is) throw SnapshotError("corrupt snapshot: bad rng state");
  }

  /// Reads an element count and checks it against the remaining payload.
  std::uint64_t length(std::uint64_t min_elem_size = 1) {
    auto n = u64();
    if (min_elem_size != 0 && n > remaining() / min_elem_size)
      throw SnapshotError("corrupt snapshot: length exceeds payload");
    return n;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw SnapshotError("corrupt snapshot: truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace marti
