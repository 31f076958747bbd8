// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstring>
#include <iterator>
#include <span>
#include <stdexcept>
#include <vector>

#include "tpdemini/ir/Ir.hpp"

namespace tpdemini::ir {

struct InterpreterOptions {
  u64 step_limit = 10'000'000;
  u32 max_call_depth = 1024;
};

namespace detail {

struct I128 {
  u64 lo = 0;
  u64 hi = 0;
};

/// Stack-variable memory. Addresses are only meaningful to this
/// interpreter; programs may compute with them but not compare them against
/// compiled code.
class StackStore {
public:
  static constexpr u64 kBase = u64{1} << 40;

  u64 push(u32 size, u32 align) {
    const u64 addr = (top_ + align - 1) & ~u64{align - 1};
    ranges_.push_back(Range{addr, addr + size});
    top_ = addr + size;
    if (bytes_.size() < top_ - kBase) {
      bytes_.resize(top_ - kBase);
    }
    std::memset(bytes_.data() + (addr - kBase), 0, size);
    return addr;
  }

  void pop_to(std::size_t mark, u64 top) {
    ranges_.resize(mark);
    top_ = top;
  }

  std::size_t mark() const { return ranges_.size(); }
  u64 top() const { return top_; }

  bool in_bounds(u64 addr) const {
    if (addr > UINT64_MAX - 8) {
      return false;
    }
    auto it = std::partition_point(ranges_.begin(), ranges_.end(),
                                   [&](const Range &r) { return r.begin <= addr; });
    return it != ranges_.begin() && addr + 8 <= std::prev(it)->end;
  }

  u64 load(u64 addr) const {
    u64 v;
    std::memcpy(&v, bytes_.data() + (addr - kBase), 8);
    return v;
  }

  void store(u64 addr, u64 v) {
    std::memcpy(bytes_.data() + (addr - kBase), &v, 8);
  }

private:
  struct Range {
    u64 begin;
    u64 end;
  };

  std::vector<Range> ranges_;
  std::vector<u8> bytes_;
  u64 top_ = kBase;
};

struct TrapSignal {
  Trap trap;
};

class Interpreter {
public:
  Interpreter(const Module &m, InterpreterOptions opts) : m_(m), opts_(opts) {}

  ExecResult run(u32 func, std::span<const u64> args) {
    const Function &f = m_.functions[func];
    if (args.size() != f.param_slot_count()) {
      throw std::invalid_argument("@" + f.name + " expects " +
                                  std::to_string(f.param_slot_count()) +
                                  " argument words, got " +
                                  std::to_string(args.size()));
    }
    std::vector<I128> vals;
    for (u32 i = 0, slot = 0; i < f.params.size(); ++i) {
      I128 v{args[slot++], 0};
      if (f.params[i].type == Type::i128) {
        v.hi = args[slot++];
      }
      vals.push_back(v);
    }
    ExecResult res;
    try {
      const I128 r = call(func, vals, 1);
      res.lo = r.lo;
      res.hi = r.hi;
    } catch (const TrapSignal &t) {
      res.trap = t.trap;
    }
    res.steps = steps_;
    return res;
  }

private:
  I128 call(u32 func, const std::vector<I128> &args, u32 depth) {
    if (depth > opts_.max_call_depth) {
      throw TrapSignal{Trap::call_depth};
    }
    const Function &f = m_.functions[func];
    std::vector<I128> vals(f.defs.size());
    std::copy(args.begin(), args.end(), vals.begin());

    const std::size_t mark = stack_.mark();
    const u64 top = stack_.top();
    std::vector<u64> vars;
    for (const auto &sv : f.stack_vars) {
      vars.push_back(stack_.push(sv.size, sv.align));
    }

    const auto get = [&](const Operand &op) -> I128 {
      return op.is_value() ? vals[op.def] : I128{op.lo, op.hi};
    };

    u32 prev = 0;
    u32 cur = 0;
    std::vector<I128> phi_tmp;
    while (true) {
      const Block &b = f.blocks[cur];
      if (!b.phis.empty()) {
        phi_tmp.clear();
        for (const auto &phi : b.phis) {
          for (const auto &in : phi.incoming) {
            if (in.block == prev) {
              phi_tmp.push_back(get(in.value));
              break;
            }
          }
        }
        for (u32 i = 0; i < b.phis.size(); ++i) {
          vals[b.phis[i].def] = phi_tmp[i];
        }
      }
      for (const auto &inst : b.insts) {
        if (++steps_ > opts_.step_limit) {
          throw TrapSignal{Trap::step_limit};
        }
        const auto a = [&](u32 i) { return get(inst.ops[i]).lo; };
        I128 r;
        switch (inst.op) {
        case Opcode::add: r.lo = a(0) + a(1); break;
        case Opcode::sub: r.lo = a(0) - a(1); break;
        case Opcode::mul: r.lo = a(0) * a(1); break;
        case Opcode::udiv:
        case Opcode::urem: {
          const u64 d = a(1);
          if (d == 0) {
            throw TrapSignal{Trap::div_by_zero};
          }
          r.lo = inst.op == Opcode::udiv ? a(0) / d : a(0) % d;
          break;
        }
        case Opcode::and_: r.lo = a(0) & a(1); break;
        case Opcode::or_: r.lo = a(0) | a(1); break;
        case Opcode::xor_: r.lo = a(0) ^ a(1); break;
        case Opcode::shl: r.lo = a(1) >= 64 ? 0 : a(0) << a(1); break;
        case Opcode::shr: r.lo = a(1) >= 64 ? 0 : a(0) >> a(1); break;
        case Opcode::cmp_eq: r.lo = a(0) == a(1); break;
        case Opcode::cmp_ne: r.lo = a(0) != a(1); break;
        case Opcode::cmp_ult: r.lo = a(0) < a(1); break;
        case Opcode::cmp_slt:
          r.lo = static_cast<i64>(a(0)) < static_cast<i64>(a(1));
          break;
        case Opcode::addr: r.lo = a(0) + a(1) * a(2) + a(3); break;
        case Opcode::load:
          if (!stack_.in_bounds(a(0))) {
            throw TrapSignal{Trap::out_of_bounds};
          }
          r.lo = stack_.load(a(0));
          break;
        case Opcode::store:
          if (!stack_.in_bounds(a(0))) {
            throw TrapSignal{Trap::out_of_bounds};
          }
          stack_.store(a(0), a(1));
          break;
        case Opcode::alloca_ref: r.lo = vars[inst.stack_var]; break;
        case Opcode::trunc: r.lo = a(0); break;
        case Opcode::zext128: r.lo = a(0); break;
        case Opcode::add128: {
          const I128 x = get(inst.ops[0]), y = get(inst.ops[1]);
          r.lo = x.lo + y.lo;
          r.hi = x.hi + y.hi + (r.lo < x.lo ? 1 : 0);
          break;
        }
        case Opcode::call: {
          std::vector<I128> cargs;
          for (const auto &op : inst.ops) {
            cargs.push_back(get(op));
          }
          r = call(inst.callee, cargs, depth + 1);
          break;
        }
        case Opcode::br:
          prev = cur;
          cur = inst.targets[0];
          break;
        case Opcode::condbr:
          prev = cur;
          cur = inst.targets[a(0) != 0 ? 0 : 1];
          break;
        case Opcode::ret:
          stack_.pop_to(mark, top);
          if (inst.ops.empty()) {
            return I128{};
          }
          return f.ret == Type::i128 ? get(inst.ops[0])
                                     : I128{get(inst.ops[0]).lo, 0};
        }
        if (inst.type != Type::void_) {
          vals[inst.def] = inst.type == Type::i128 ? r : I128{r.lo, 0};
        }
      }
    }
  }

  const Module &m_;
  InterpreterOptions opts_;
  StackStore stack_;
  u64 steps_ = 0;
};

} // namespace detail

/// Executes `func` with flattened argument words (i128 as lo, hi).
inline ExecResult interpret(const Module &m, u32 func, std::span<const u64> args,
                            InterpreterOptions opts = {}) {
  return detail::Interpreter(m, opts).run(func, args);
}

inline ExecResult interpret(const Module &m, std::string_view name,
                            std::span<const u64> args, InterpreterOptions opts = {}) {
  auto f = m.find(name);
  if (!f) {
    throw std::invalid_argument("unknown function @" + std::string(name));
  }
  return interpret(m, *f, args, opts);
}

} // namespace tpdemini::ir
