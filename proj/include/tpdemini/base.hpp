// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tpdemini {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i8 = std::int8_t;
using i16 = std::int16_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

/// Broken framework invariant. These are bugs, never user errors, and are
/// raised eagerly so that fuzzing surfaces them at the faulting point.
class InternalError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A function could not be compiled (unsupported construct, unresolved
/// label). Carries the function and, when known, the instruction.
class CompileError : public std::runtime_error {
public:
  CompileError(std::string func, std::string inst, const std::string &msg)
      : std::runtime_error(format(func, inst, msg)), function(std::move(func)),
        instruction(std::move(inst)) {}

  std::string function;
  std::string instruction;

private:
  static std::string format(const std::string &func, const std::string &inst,
                            const std::string &msg) {
    std::string s = "in @" + func;
    if (!inst.empty()) {
      s += " at '" + inst + "'";
    }
    return s + ": " + msg;
  }
};

/// Runtime traps shared by the interpreter and the VM so that results can
/// be compared directly.
enum class Trap : u8 { none, div_by_zero, out_of_bounds, step_limit, call_depth };

inline const char *trap_name(Trap t) {
  switch (t) {
  case Trap::none: return "none";
  case Trap::div_by_zero: return "div-by-zero";
  case Trap::out_of_bounds: return "out-of-bounds";
  case Trap::step_limit: return "step-limit";
  case Trap::call_depth: return "call-depth";
  }
  return "?";
}

/// Result of executing a function: either a (lo, hi) pair or a trap.
struct ExecResult {
  Trap trap = Trap::none;
  u64 lo = 0;
  u64 hi = 0;
  u64 steps = 0;

  bool ok() const { return trap == Trap::none; }
  /// Equality as seen by differential testing. Only the first `parts`
  /// result words are meaningful (0 for void).
  bool same_outcome(const ExecResult &o, u32 parts) const {
    if (trap != o.trap) {
      return false;
    }
    return trap != Trap::none || ((parts < 1 || lo == o.lo) &&
                                  (parts < 2 || hi == o.hi));
  }
};

[[noreturn]] inline void internal_fault(const char *what, const char *file,
                                        int line) {
  throw InternalError(std::string(file) + ":" + std::to_string(line) +
                      ": internal fault: " + what);
}

} // namespace tpdemini

#define TPDEMINI_ASSERT(cond, msg)                                             \
  do {                                                                         \
    if (!(cond)) [[unlikely]] {                                                \
      ::tpdemini::internal_fault(msg, __FILE__, __LINE__);                     \
    }                                                                          \
  } while (0)
