// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tpdemini/visa/Isa.hpp"

namespace tpdemini::visa {

class ImageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct FunctionImage {
  std::string name;
  std::vector<u8> code;
  u32 frame_size = 0;
};

/// A linked set of compiled functions. CALL immediates index `functions`.
struct ModuleImage {
  std::vector<FunctionImage> functions;

  std::optional<u32> find(std::string_view name) const {
    for (u32 i = 0; i < functions.size(); ++i) {
      if (functions[i].name == name) {
        return i;
      }
    }
    return std::nullopt;
  }
};

namespace detail {

inline void put_u32(std::vector<u8> &out, u32 v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<u8>(v >> (8 * i)));
  }
}

class ByteReader {
public:
  explicit ByteReader(std::span<const u8> data) : data_(data) {}

  u32 u32le() {
    need(4);
    u32 v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<u32>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::span<const u8> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw ImageError("truncated image");
    }
  }

  std::span<const u8> data_;
  std::size_t pos_ = 0;
};

} // namespace detail

/// Checks that every word decodes, branches stay inside their function and
/// CALL indices name a function.
inline void verify_image(const ModuleImage &img) {
  for (const auto &f : img.functions) {
    if (f.code.size() % kWordSize != 0) {
      throw ImageError("@" + f.name + ": code size is not a multiple of 8");
    }
    const i64 words = static_cast<i64>(f.code.size() / kWordSize);
    for (i64 w = 0; w < words; ++w) {
      Inst inst;
      try {
        inst = decode(std::span(f.code).subspan(w * kWordSize, kWordSize));
      } catch (const EncodeError &e) {
        throw ImageError("@" + f.name + ": " + e.what());
      }
      if (inst.op == Op::CALL &&
          (inst.imm < 0 || static_cast<u64>(inst.imm) >= img.functions.size())) {
        throw ImageError("@" + f.name + ": CALL index " + std::to_string(inst.imm) +
                         " out of range");
      }
      if (is_branch(inst.op)) {
        const i64 target = w + 1 + inst.imm;
        if (target < 0 || target >= words) {
          throw ImageError("@" + f.name + ": branch target outside function");
        }
      }
    }
  }
}

/// Serializes to the `.tvo` format: "TVO1", u32 count, per function
/// {u32 name length, name, u32 code offset, u32 code length, u32 frame size},
/// then the concatenated code. All integers little-endian.
inline std::vector<u8> write_image(const ModuleImage &img) {
  std::vector<u8> out = {'T', 'V', 'O', '1'};
  detail::put_u32(out, static_cast<u32>(img.functions.size()));
  u32 offset = 0;
  for (const auto &f : img.functions) {
    detail::put_u32(out, static_cast<u32>(f.name.size()));
    out.insert(out.end(), f.name.begin(), f.name.end());
    detail::put_u32(out, offset);
    detail::put_u32(out, static_cast<u32>(f.code.size()));
    detail::put_u32(out, f.frame_size);
    offset += static_cast<u32>(f.code.size());
  }
  for (const auto &f : img.functions) {
    out.insert(out.end(), f.code.begin(), f.code.end());
  }
  return out;
}

inline ModuleImage read_image(std::span<const u8> data) {
  detail::ByteReader r(data);
  const auto magic = r.bytes(4);
  if (std::string_view(reinterpret_cast<const char *>(magic.data()), 4) != "TVO1") {
    throw ImageError("bad magic");
  }
  const u32 count = r.u32le();
  if (count > r.remaining() / 16) {
    throw ImageError("truncated image");
  }
  struct Entry {
    u32 offset, length;
  };
  ModuleImage img;
  std::vector<Entry> entries;
  for (u32 i = 0; i < count; ++i) {
    FunctionImage f;
    const u32 len = r.u32le();
    const auto name = r.bytes(len);
    f.name.assign(name.begin(), name.end());
    const u32 off = r.u32le();
    const u32 clen = r.u32le();
    f.frame_size = r.u32le();
    entries.push_back(Entry{off, clen});
    img.functions.push_back(std::move(f));
  }
  const auto code = r.bytes(r.remaining());
  for (u32 i = 0; i < count; ++i) {
    const auto [off, len] = entries[i];
    if (off > code.size() || len > code.size() - off) {
      throw ImageError("truncated image: code of @" + img.functions[i].name +
                       " out of range");
    }
    img.functions[i].code.assign(code.begin() + off, code.begin() + off + len);
  }
  verify_image(img);
  return img;
}

} // namespace tpdemini::visa
