// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "tpdemini/base.hpp"

namespace tpdemini::codegen {

/// A move endpoint. Constants and recomputed addresses only appear as
/// sources.
struct Loc {
  enum class Kind : u8 { reg, slot, constant, recompute };
  Kind kind = Kind::reg;
  u8 reg = 0;
  i32 off = 0;
  u64 value = 0;

  static Loc r(u8 reg) { return Loc{Kind::reg, reg, 0, 0}; }
  static Loc slot(i32 off) { return Loc{Kind::slot, 0, off, 0}; }
  static Loc imm(u64 v) { return Loc{Kind::constant, 0, 0, v}; }
  static Loc addr(i32 disp) { return Loc{Kind::recompute, 0, disp, 0}; }

  bool is_mem() const { return kind == Kind::slot; }
  bool operator==(const Loc &o) const {
    if (kind != o.kind) {
      return false;
    }
    switch (kind) {
    case Kind::reg: return reg == o.reg;
    case Kind::slot:
    case Kind::recompute: return off == o.off;
    case Kind::constant: return value == o.value;
    }
    return false;
  }
};

struct Move {
  Loc dst;
  Loc src;
};

/// Sequentializes a set of simultaneous moves. `emit(dst, src)` must handle
/// reg<-any and slot<-reg; anything else is routed through `mem_tmp`.
/// Cycles are broken through `scratch`. Neither temporary may appear in the
/// move set, and every destination must be distinct.
template <typename Emit>
void parallel_copy(std::vector<Move> moves, u8 scratch, std::optional<u8> mem_tmp,
                   Emit &&emit) {
  std::erase_if(moves, [](const Move &m) { return m.dst == m.src; });
  for (std::size_t i = 0; i < moves.size(); ++i) {
    TPDEMINI_ASSERT(moves[i].dst.kind == Loc::Kind::reg || moves[i].dst.is_mem(),
                    "move destination must be a register or slot");
    for (std::size_t j = i + 1; j < moves.size(); ++j) {
      TPDEMINI_ASSERT(!(moves[i].dst == moves[j].dst), "duplicate move destination");
    }
  }
  const auto single = [&](const Loc &dst, const Loc &src) {
    if (dst.is_mem() && src.kind != Loc::Kind::reg) {
      TPDEMINI_ASSERT(mem_tmp.has_value(), "memory move without a temporary");
      emit(Loc::r(*mem_tmp), src);
      emit(dst, Loc::r(*mem_tmp));
    } else {
      emit(dst, src);
    }
  };
  const auto is_source = [&](const Loc &l, std::size_t except) {
    for (std::size_t k = 0; k < moves.size(); ++k) {
      if (k != except && moves[k].src == l) {
        return true;
      }
    }
    return false;
  };
  bool scratch_busy = false;
  while (!moves.empty()) {
    bool progress = false;
    for (std::size_t i = 0; i < moves.size();) {
      if (!is_source(moves[i].dst, i)) {
        if (moves[i].src == Loc::r(scratch)) {
          scratch_busy = false;
        }
        single(moves[i].dst, moves[i].src);
        moves.erase(moves.begin() + static_cast<std::ptrdiff_t>(i));
        progress = true;
      } else {
        ++i;
      }
    }
    if (progress || moves.empty()) {
      continue;
    }
    // Only cycles remain: park one destination in the scratch register.
    TPDEMINI_ASSERT(!scratch_busy, "scratch register still in use");
    const Loc saved = moves.front().dst;
    emit(Loc::r(scratch), saved);
    scratch_busy = true;
    for (auto &m : moves) {
      if (m.src == saved) {
        m.src = Loc::r(scratch);
      }
    }
  }
}

} // namespace tpdemini::codegen
