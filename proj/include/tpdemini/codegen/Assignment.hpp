// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "tpdemini/base.hpp"

namespace tpdemini::codegen {

/// Per-value compile state. The record is 16 bytes for a single-part value;
/// every further part adds one 16-bit part word stored right behind it.
struct Assignment {
  /// fp-relative spill slot (negative), or the stack variable displacement
  /// for recomputable addresses. 0 means "no slot yet".
  i32 frame_off = 0;
  u32 remaining_uses = 0;
  /// Layout index of the last block of the live range.
  u32 last = 0;
  u8 part_count = 0;
  u8 flags = 0;
  u16 part0 = 0;

  static constexpr u8 kEndOfBlock = 1u << 0;
  static constexpr u8 kLive = 1u << 1;
  /// Phi destination created by an edge whose block has not started yet.
  static constexpr u8 kPendingPhi = 1u << 2;

  bool end_of_block() const { return flags & kEndOfBlock; }
  bool live() const { return flags & kLive; }
  bool pending_phi() const { return flags & kPendingPhi; }
};

static_assert(sizeof(Assignment) == 16, "single-part assignment must fit 16 bytes");

inline constexpr u32 assignment_bytes(u32 parts) {
  return sizeof(Assignment) + 2 * (parts > 0 ? parts - 1 : 0);
}
static_assert(assignment_bytes(2) == 18);

/// Bit layout of a part word.
namespace part {
inline constexpr u16 kRegMask = 0x000F;
inline constexpr u16 kRegValid = 1u << 4;
inline constexpr u16 kStackValid = 1u << 5;
inline constexpr u16 kRecomputable = 1u << 6;
inline constexpr u16 kFixed = 1u << 7;
inline constexpr u16 kSizeShift = 8;
inline constexpr u16 kSizeMask = 0x3u << kSizeShift;
inline constexpr u16 kLockShift = 10;
inline constexpr u16 kLockMax = 63;

inline u8 reg(u16 p) { return static_cast<u8>(p & kRegMask); }
inline bool reg_valid(u16 p) { return p & kRegValid; }
inline bool stack_valid(u16 p) { return p & kStackValid; }
inline bool recomputable(u16 p) { return p & kRecomputable; }
inline bool fixed(u16 p) { return p & kFixed; }
inline u32 size(u16 p) { return 1u << ((p & kSizeMask) >> kSizeShift); }
inline u32 locks(u16 p) { return p >> kLockShift; }

inline u16 with_reg(u16 p, u8 r) {
  return static_cast<u16>((p & ~kRegMask) | (r & kRegMask) | kRegValid);
}
inline u16 without_reg(u16 p) { return static_cast<u16>(p & ~(kRegMask | kRegValid)); }
inline u16 set(u16 p, u16 bit, bool on) {
  return static_cast<u16>(on ? (p | bit) : (p & ~bit));
}
inline u16 with_size(u16 p, u32 bytes) {
  u16 lg = 0;
  while ((1u << lg) < bytes) {
    ++lg;
  }
  return static_cast<u16>((p & ~kSizeMask) | (lg << kSizeShift));
}
inline u16 with_locks(u16 p, u32 n) {
  TPDEMINI_ASSERT(n <= kLockMax, "lock count overflow");
  return static_cast<u16>((p & ((1u << kLockShift) - 1)) | (n << kLockShift));
}
} // namespace part

/// Densely packed assignment records, one per value number.
class AssignmentTable {
public:
  void reset(const std::vector<u8> &part_counts) {
    offsets_.resize(part_counts.size());
    u32 bytes = 0;
    for (std::size_t i = 0; i < part_counts.size(); ++i) {
      offsets_[i] = bytes;
      bytes += (assignment_bytes(std::max<u32>(part_counts[i], 1)) + 3) & ~3u;
    }
    data_.assign(bytes, 0);
    for (std::size_t i = 0; i < part_counts.size(); ++i) {
      Assignment a;
      a.part_count = part_counts[i];
      put(static_cast<u32>(i), a);
    }
  }

  u32 size() const { return static_cast<u32>(offsets_.size()); }

  Assignment get(u32 v) const {
    Assignment a;
    std::memcpy(&a, data_.data() + offsets_[v], sizeof(a));
    return a;
  }
  void put(u32 v, const Assignment &a) {
    std::memcpy(data_.data() + offsets_[v], &a, sizeof(a));
  }

  u16 part(u32 v, u32 p) const {
    u16 w;
    std::memcpy(&w, data_.data() + offsets_[v] + 14 + 2 * p, 2);
    return w;
  }
  void set_part(u32 v, u32 p, u16 w) {
    std::memcpy(data_.data() + offsets_[v] + 14 + 2 * p, &w, 2);
  }

  std::size_t bytes() const { return data_.size(); }

private:
  std::vector<u32> offsets_;
  std::vector<u8> data_;
};

} // namespace tpdemini::codegen
