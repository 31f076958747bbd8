// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tpdemini/visa/Image.hpp"
#include "tpdemini/visa/Isa.hpp"

namespace tpdemini::vm {

using visa::Cond;
using visa::Inst;
using visa::Op;

struct Flags {
  bool zf = false;
  bool sf = false;
  bool cf = false;
  bool of = false;
};

inline bool eval_cond(const Flags &f, Cond c) {
  switch (c) {
  case Cond::eq: return f.zf;
  case Cond::ne: return !f.zf;
  case Cond::ult: return f.cf;
  case Cond::uge: return !f.cf;
  case Cond::slt: return f.sf != f.of;
  case Cond::sge: return f.sf == f.of;
  }
  return false;
}

/// Flags after `a + b + carry_in`.
inline Flags add_flags(u64 a, u64 b, bool carry_in, u64 &result) {
  const u64 s1 = a + b;
  const u64 r = s1 + (carry_in ? 1 : 0);
  result = r;
  Flags f;
  f.zf = r == 0;
  f.sf = (r >> 63) != 0;
  f.cf = s1 < a || r < s1;
  f.of = (((a ^ r) & (b ^ r)) >> 63) != 0;
  return f;
}

/// Flags after `a - b`.
inline Flags sub_flags(u64 a, u64 b, u64 &result) {
  const u64 r = a - b;
  result = r;
  Flags f;
  f.zf = r == 0;
  f.sf = (r >> 63) != 0;
  f.cf = a < b;
  f.of = (((a ^ b) & (a ^ r)) >> 63) != 0;
  return f;
}

/// State visible to an observer before an instruction executes.
struct StepInfo {
  u32 function;
  u32 word;
  const Inst &inst;
  const std::array<u64, visa::kNumRegs> &regs;
};

struct VmOptions {
  u64 memory_size = u64{1} << 20;
  u64 step_limit = 100'000'000;
  u32 max_call_depth = 1024;
  std::ostream *trace = nullptr;
  std::function<void(const StepInfo &)> observer;
};

class VmError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Vm {
public:
  static constexpr u64 kSentinel = ~u64{0};

  Vm(const visa::ModuleImage &img, VmOptions opts = {})
      : img_(img), opts_(std::move(opts)) {
    decoded_.reserve(img.functions.size());
    for (const auto &f : img.functions) {
      std::vector<Inst> code;
      for (std::size_t off = 0; off + visa::kWordSize <= f.code.size();
           off += visa::kWordSize) {
        code.push_back(visa::decode(std::span(f.code).subspan(off, visa::kWordSize)));
      }
      decoded_.push_back(std::move(code));
    }
  }

  ExecResult run(std::string_view name, std::span<const u64> args) {
    auto f = img_.find(name);
    if (!f) {
      throw VmError("unknown function @" + std::string(name));
    }
    return run(*f, args);
  }

  /// Runs function `func` with `args` in r0..r5. Returns (r0, r1) or a trap.
  ExecResult run(u32 func, std::span<const u64> args) {
    if (args.size() > visa::kNumArgRegs) {
      throw VmError("more than 6 argument words");
    }
    mem_.assign(opts_.memory_size, 0);
    regs_.fill(0);
    flags_ = Flags{};
    steps_ = 0;
    depth_ = 1;
    max_depth_ = 1;
    for (std::size_t i = 0; i < args.size(); ++i) {
      regs_[i] = args[i];
    }
    regs_[visa::kSp] = opts_.memory_size;
    ExecResult res;
    res.trap = exec(func);
    res.lo = regs_[0];
    res.hi = regs_[1];
    res.steps = steps_;
    return res;
  }

  u64 steps() const { return steps_; }
  u32 max_depth() const { return max_depth_; }
  const std::array<u64, visa::kNumRegs> &regs() const { return regs_; }

private:
  bool mem_ok(u64 addr) const {
    return addr <= mem_.size() && mem_.size() - addr >= 8;
  }
  u64 load(u64 addr) const {
    u64 v;
    std::memcpy(&v, mem_.data() + addr, 8);
    return v;
  }
  void store(u64 addr, u64 v) { std::memcpy(mem_.data() + addr, &v, 8); }

  u64 address(const Inst &i) const {
    const visa::Mem m = i.mem();
    u64 a = regs_[m.base] + static_cast<u64>(static_cast<i64>(m.disp));
    if (m.index) {
      a += regs_[*m.index] * m.scale;
    }
    return a;
  }

  bool push(u64 v) {
    const u64 sp = regs_[visa::kSp] - 8;
    if (!mem_ok(sp)) {
      return false;
    }
    regs_[visa::kSp] = sp;
    store(sp, v);
    return true;
  }

  bool pop(u64 &v) {
    const u64 sp = regs_[visa::kSp];
    if (!mem_ok(sp)) {
      return false;
    }
    v = load(sp);
    regs_[visa::kSp] = sp + 8;
    return true;
  }

  Trap exec(u32 entry) {
    if (!push(kSentinel)) {
      return Trap::out_of_bounds;
    }
    u32 fn = entry;
    u32 pc = 0;
    while (true) {
      const auto &code = decoded_[fn];
      if (pc >= code.size()) {
        throw VmError("execution ran past the end of @" + img_.functions[fn].name);
      }
      if (++steps_ > opts_.step_limit) {
        return Trap::step_limit;
      }
      const Inst &i = code[pc];
      if (opts_.observer) {
        opts_.observer(StepInfo{fn, pc, i, regs_});
      }
      if (opts_.trace) {
        *opts_.trace << img_.functions[fn].name << '+' << pc * visa::kWordSize
                     << ": " << visa::disassemble(i) << '\n';
      }
      ++pc;
      u64 &d = regs_[i.b1];
      switch (i.op) {
      case Op::NOP: break;
      case Op::ADD: flags_ = add_flags(d, regs_[i.b3], false, d); break;
      case Op::ADC: flags_ = add_flags(d, regs_[i.b3], flags_.cf, d); break;
      case Op::SUB: flags_ = sub_flags(d, regs_[i.b3], d); break;
      case Op::MUL: d *= regs_[i.b3]; break;
      case Op::AND: d &= regs_[i.b3]; break;
      case Op::OR: d |= regs_[i.b3]; break;
      case Op::XOR: d ^= regs_[i.b3]; break;
      case Op::SHL: d <<= (regs_[i.b3] & 63); break;
      case Op::SHR: d >>= (regs_[i.b3] & 63); break;
      case Op::DIVMOD: {
        const u64 divisor = regs_[i.b3];
        if (divisor == 0) {
          return Trap::div_by_zero;
        }
        const u64 dividend = regs_[0];
        regs_[0] = dividend / divisor;
        regs_[1] = dividend % divisor;
        break;
      }
      case Op::MOV: d = regs_[i.b2]; break;
      case Op::MOVI: d = static_cast<u64>(static_cast<i64>(i.imm)); break;
      case Op::MOVIH:
        d = (d & 0xFFFF'FFFFu) | (static_cast<u64>(static_cast<u32>(i.imm)) << 32);
        break;
      case Op::ADDI: d += static_cast<u64>(static_cast<i64>(i.imm)); break;
      case Op::CMPI: {
        u64 r;
        flags_ = sub_flags(regs_[i.b2], static_cast<u64>(static_cast<i64>(i.imm)), r);
        break;
      }
      case Op::CMP: {
        u64 r;
        flags_ = sub_flags(regs_[i.b2], regs_[i.b3], r);
        break;
      }
      case Op::LD: {
        const u64 a = address(i);
        if (!mem_ok(a)) {
          return Trap::out_of_bounds;
        }
        d = load(a);
        break;
      }
      case Op::ST: {
        const u64 a = address(i);
        if (!mem_ok(a)) {
          return Trap::out_of_bounds;
        }
        store(a, regs_[i.b1]);
        break;
      }
      case Op::SETCC: d = eval_cond(flags_, static_cast<Cond>(i.b2)) ? 1 : 0; break;
      case Op::JMP: pc = static_cast<u32>(static_cast<i64>(pc) + i.imm); break;
      case Op::BCC:
        if (eval_cond(flags_, static_cast<Cond>(i.b1))) {
          pc = static_cast<u32>(static_cast<i64>(pc) + i.imm);
        }
        break;
      case Op::CALL:
        if (depth_ >= opts_.max_call_depth) {
          return Trap::call_depth;
        }
        if (!push((static_cast<u64>(fn) << 32) | pc)) {
          return Trap::out_of_bounds;
        }
        ++depth_;
        max_depth_ = std::max(max_depth_, depth_);
        fn = static_cast<u32>(i.imm);
        pc = 0;
        break;
      case Op::RET: {
        u64 ra;
        if (!pop(ra)) {
          return Trap::out_of_bounds;
        }
        if (ra == kSentinel) {
          return Trap::none;
        }
        --depth_;
        fn = static_cast<u32>(ra >> 32);
        pc = static_cast<u32>(ra);
        if (fn >= decoded_.size()) {
          throw VmError("corrupted return address");
        }
        break;
      }
      case Op::PUSH:
        if (!push(regs_[i.b2])) {
          return Trap::out_of_bounds;
        }
        break;
      case Op::POP:
        if (!pop(d)) {
          return Trap::out_of_bounds;
        }
        break;
      }
    }
  }

  const visa::ModuleImage &img_;
  VmOptions opts_;
  std::vector<std::vector<Inst>> decoded_;
  std::vector<u8> mem_;
  std::array<u64, visa::kNumRegs> regs_{};
  Flags flags_;
  u64 steps_ = 0;
  u32 depth_ = 0;
  u32 max_depth_ = 0;
};

inline ExecResult run(const visa::ModuleImage &img, std::string_view name,
                      std::span<const u64> args, VmOptions opts = {}) {
  return Vm(img, std::move(opts)).run(name, args);
}

} // namespace tpdemini::vm
