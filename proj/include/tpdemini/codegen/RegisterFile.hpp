// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <string>

#include "tpdemini/base.hpp"

namespace tpdemini::codegen {

using RegMask = u32;

inline constexpr u32 kNoValue = ~0u;

/// Occupancy of the allocatable registers.
template <u32 N>
class RegisterFile {
public:
  enum class Kind : u8 { free, value, scratch, fixed };

  struct Slot {
    Kind kind = Kind::free;
    u8 part = 0;
    u32 value = kNoValue;
  };

  static constexpr RegMask kAll = (RegMask{1} << N) - 1;

  void reset() {
    regs_ = {};
    clobbered_ = 0;
    cursor_ = 0;
  }

  const Slot &at(u8 r) const { return regs_[r]; }
  bool is_free(u8 r) const { return regs_[r].kind == Kind::free; }

  RegMask free_mask() const {
    RegMask m = 0;
    for (u32 r = 0; r < N; ++r) {
      m |= regs_[r].kind == Kind::free ? RegMask{1} << r : 0;
    }
    return m;
  }

  /// Lowest free register in `mask`, or -1.
  int lowest_free(RegMask mask) const {
    const RegMask m = free_mask() & mask;
    return m ? std::countr_zero(m) : -1;
  }

  void hold_value(u8 r, u32 v, u8 part) {
    regs_[r] = Slot{Kind::value, part, v};
    clobbered_ |= RegMask{1} << r;
  }
  void hold_fixed(u8 r, u32 v, u8 part) {
    regs_[r] = Slot{Kind::fixed, part, v};
    clobbered_ |= RegMask{1} << r;
  }
  void hold_scratch(u8 r) {
    regs_[r] = Slot{Kind::scratch, 0, kNoValue};
    clobbered_ |= RegMask{1} << r;
  }
  void release(u8 r) { regs_[r] = Slot{}; }

  RegMask clobbered() const { return clobbered_; }
  void mark_clobbered(u8 r) { clobbered_ |= RegMask{1} << r; }

  u32 cursor() const { return cursor_; }
  void advance_cursor(u8 victim) { cursor_ = (victim + 1) % N; }

private:
  std::array<Slot, N> regs_{};
  RegMask clobbered_ = 0;
  u32 cursor_ = 0;
};

} // namespace tpdemini::codegen
