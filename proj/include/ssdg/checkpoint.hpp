/*
 * Copyright 2026 The ssdg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SSDG_CHECKPOINT_HPP_
#define SSDG_CHECKPOINT_HPP_

// Binary checkpoint container. Byte layout is documented in
// docs/checkpoint_format.md; all integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ssdg/error.hpp"
#include "ssdg/network.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'D', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  ParamSet params;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string path)
      : buf_(buf), path_(std::move(path)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw ParseError(path_, 0, "truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
  check_params(ckpt.spec, ckpt.params);
  detail::ByteWriter w;
  w.bytes(std::string(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.spec.input_dim));
  w.u32(static_cast<std::uint32_t>(ckpt.spec.hidden_dims.size()));
  for (std::size_t h : ckpt.spec.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(ckpt.spec.num_classes));
  w.f64(ckpt.spec.dropout_rate);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& buf,
                                    const std::string& path = "<memory>") {
  detail::ByteReader r(buf, path);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) {
    throw ParseError(path, 0, "not a checkpoint (bad magic)");
  }
  if (std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw ParseError(path, 0, "unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint c;
  c.spec.input_dim = r.u32();
  const std::uint32_t hidden = r.u32();
  for (std::uint32_t i = 0; i < hidden; ++i) c.spec.hidden_dims.push_back(r.u32());
  c.spec.num_classes = r.u32();
  c.spec.dropout_rate = r.f64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    std::vector<std::size_t> shape(r.u32());
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor t(shape);
    for (double& v : t.data()) v = r.f64();
    c.params.insert(name, std::move(t));
  }
  if (!r.at_end()) throw ParseError(path, 0, "trailing bytes after checkpoint");
  try {
    check_params(c.spec, c.params);
  } catch (const Error& e) {
    throw ParseError(path, 0, e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto buf = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return decode_checkpoint(buf, path);
}

}  // namespace ssdg

#endif  // SSDG_CHECKPOINT_HPP_
