// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "tpdemini/codegen/CompilerVisa.hpp"
#include "tpdemini/snippets/Snippet.hpp"

namespace tpdemini::snippets {

/// A snippet operand as the instruction selector sees it.
template <typename C>
struct AsmOperand {
  using Handle = typename C::ValuePartRef;
  using Scratch = typename C::ScratchReg;
  enum class Kind : u8 { none, value, scratch, raw, constant, address };

  Kind kind = Kind::none;
  Handle *handle = nullptr;
  Scratch scratch;
  u8 raw = 0;
  u64 constant = 0;
  // address: base (raw register or value) + index*scale + disp
  Handle *index = nullptr;
  u8 scale = 1;
  i32 disp = 0;

  static AsmOperand val(Handle &h) {
    AsmOperand o;
    o.kind = Kind::value;
    o.handle = &h;
    return o;
  }
  static AsmOperand owned(Scratch &&s) {
    AsmOperand o;
    o.kind = Kind::scratch;
    o.scratch = std::move(s);
    return o;
  }
  static AsmOperand reg(u8 r) {
    AsmOperand o;
    o.kind = Kind::raw;
    o.raw = r;
    return o;
  }
  static AsmOperand imm(u64 v) {
    AsmOperand o;
    o.kind = Kind::constant;
    o.constant = v;
    return o;
  }
  static AsmOperand addr(u8 base, i32 disp) {
    AsmOperand o;
    o.kind = Kind::address;
    o.raw = base;
    o.disp = disp;
    return o;
  }
  static AsmOperand addr(Handle &base, i32 disp, Handle *index = nullptr, u8 scale = 1) {
    AsmOperand o;
    o.kind = Kind::address;
    o.handle = &base;
    o.index = index;
    o.scale = scale;
    o.disp = disp;
    return o;
  }

  std::optional<u64> const_value() const {
    if (kind == Kind::constant) {
      return constant;
    }
    if (kind == Kind::value && handle->is_const()) {
      return handle->const_value();
    }
    return std::nullopt;
  }
};

namespace detail {

using codegen::RegMask;

template <typename C>
class Invoker {
public:
  using Op = AsmOperand<C>;
  using Scratch = typename C::ScratchReg;
  static constexpr u32 N = C::N;

  Invoker(const EncoderPlan &p, C &c, std::span<Op> in) : p_(p), d_(p.def), c_(c), in_(in) {}

  std::vector<Scratch> run() {
    if (in_.size() != d_.inputs.size()) {
      throw SnippetError(d_.name + ": expected " + std::to_string(d_.inputs.size()) +
                         " operands, got " + std::to_string(in_.size()));
    }
    binds_.assign(d_.tregs.size(), Bind{});
    in_reg_.assign(in_.size(), -1);
    for (std::size_t i = 0; i < in_.size(); ++i) {
      binds_[i].input = static_cast<int>(i);
      const bool is_imm = in_[i].const_value().has_value();
      if (d_.inputs[i].kind == InKind::imm && !is_imm) {
        throw SnippetError(d_.name + ": operand '" + d_.inputs[i].name +
                           "' must be a constant");
      }
    }
    prelude();
    if (p_.upfront) {
      for (std::size_t i = 0; i < in_.size(); ++i) {
        if (d_.inputs[i].kind == InKind::gp) {
          materialize(static_cast<int>(i));
        }
      }
      reserve_for_control_flow();
    }
    for (std::size_t i = 0; i < d_.body.size(); ++i) {
      step(static_cast<int>(i));
    }
    std::vector<Scratch> out;
    for (int o : d_.outputs) {
      out.push_back(take_output(o));
    }
    return out;
  }

private:
  struct Bind {
    int input = -1;
    int phys = -1;
  };

  bool owns(u8 r) const { return pool_[r].valid(); }

  int resolve(int t) const {
    const Bind &b = binds_[t];
    if (b.phys >= 0) {
      return b.phys;
    }
    return b.input >= 0 ? in_reg_[b.input] : -1;
  }

  /// Another template register other than `a`/`b` still needs register `r`.
  bool shared(u8 r, int a, int b, int at) const {
    for (int t = 0; t < static_cast<int>(binds_.size()); ++t) {
      if (t != a && t != b && resolve(t) == r && p_.last_use[t] > at) {
        return true;
      }
    }
    return false;
  }

  Scratch alloc() {
    if (!reserve_.empty()) {
      Scratch s = std::move(reserve_.back());
      reserve_.pop_back();
      return s;
    }
    return c_.alloc_scratch();
  }

  u8 own(Scratch &&s) {
    const u8 r = s.reg();
    pool_[r] = std::move(s);
    return r;
  }

  void prelude() {
    RegMask pre = 0;
    for (u8 r : p_.prelude) {
      pre |= RegMask{1} << r;
    }
    // Caller scratches sitting on a fixed register move out of the way.
    for (std::size_t i = 0; i < in_.size(); ++i) {
      Op &op = in_[i];
      if (op.kind != Op::Kind::scratch || !(pre >> op.scratch.reg() & 1)) {
        continue;
      }
      bool target = false;
      for (const auto &[fr, t] : d_.fix_in) {
        target |= t == static_cast<int>(i) && fr == op.scratch.reg();
      }
      if (!target) {
        Scratch n = c_.alloc_scratch(C::kAllRegs & ~pre);
        c_.emit(visa::ops::mov(n.reg(), op.scratch.reg()));
        op.scratch = std::move(n);
      }
    }
    for (u8 r : p_.prelude) {
      int in = -1;
      for (const auto &[fr, t] : d_.fix_in) {
        if (fr == r) {
          in = t;
        }
      }
      const auto &slot = c_.regs().at(r);
      Op *op = in >= 0 ? &in_[in] : nullptr;
      const bool holds_input = op && op->kind == Op::Kind::value && !op->handle->is_const() &&
                               slot.kind == C::Kind::value &&
                               slot.value == op->handle->value() &&
                               slot.part == op->handle->part();
      if (holds_input) {
        if (d_.inputs[in].kill) {
          Scratch s = c_.try_take_over(*op->handle);
          if (s.valid()) {
            own(std::move(s));
            in_reg_[in] = r;
            continue;
          }
        }
        // The value moves away; the register keeps a copy.
        c_.vacate(r, pre);
        own(c_.alloc_scratch(RegMask{1} << r));
        binds_[in].phys = r;
        continue;
      }
      if (op && op->kind == Op::Kind::scratch && op->scratch.reg() == r) {
        own(std::move(op->scratch));
        in_reg_[in] = r;
        continue;
      }
      c_.vacate(r, pre);
      own(c_.alloc_scratch(RegMask{1} << r));
      if (op) {
        load_into(in, r);
        binds_[in].phys = r;
      }
    }
  }

  /// Copies input `i` into register `r` without disturbing its home.
  void load_into(int i, u8 r) {
    Op &op = in_[i];
    switch (op.kind) {
    case Op::Kind::value: c_.emit_move(codegen::Loc::r(r), c_.location(*op.handle)); break;
    case Op::Kind::scratch: c_.emit_move(codegen::Loc::r(r), codegen::Loc::r(op.scratch.reg())); break;
    case Op::Kind::raw: c_.emit_move(codegen::Loc::r(r), codegen::Loc::r(op.raw)); break;
    case Op::Kind::constant: c_.materialize(r, op.constant); break;
    case Op::Kind::address: address_into(op, r); break;
    case Op::Kind::none: throw SnippetError(d_.name + ": missing operand");
    }
  }

  void address_into(Op &op, u8 r) {
    using namespace visa::ops;
    const u8 base = op.handle ? c_.load_to_reg(*op.handle) : op.raw;
    if (op.index) {
      const u8 idx = c_.load_to_reg(*op.index);
      if (op.scale != 1) {
        c_.materialize(r, op.scale);
        c_.emit(mul(r, idx));
      } else {
        c_.emit(mov(r, idx));
      }
      c_.emit(add(r, base));
    } else {
      c_.emit(mov(r, base));
    }
    if (op.disp != 0) {
      c_.emit(addi(r, op.disp));
    }
  }

  u8 materialize(int i) {
    if (in_reg_[i] >= 0) {
      return static_cast<u8>(in_reg_[i]);
    }
    Op &op = in_[i];
    u8 r = 0;
    if (op.kind == Op::Kind::value && !op.handle->is_const()) {
      r = c_.load_to_reg(*op.handle);
    } else if (op.kind == Op::Kind::scratch) {
      r = own(std::move(op.scratch));
    } else if (op.kind == Op::Kind::raw) {
      r = op.raw;
    } else {
      r = own(alloc());
      load_into(i, r);
    }
    in_reg_[i] = r;
    return r;
  }

  u8 read(int t) {
    const int r = resolve(t);
    if (r >= 0) {
      return static_cast<u8>(r);
    }
    TPDEMINI_ASSERT(binds_[t].input >= 0, "template register read before definition");
    return materialize(binds_[t].input);
  }

  /// Constant behind a template register that has not been materialized.
  std::optional<u64> const_of(int t) const {
    const Bind &b = binds_[t];
    if (b.phys >= 0 || b.input < 0) {
      return std::nullopt;
    }
    return in_[b.input].const_value();
  }

  /// Extra registers for definitions past the first branch, so nothing
  /// spills on only one path.
  void reserve_for_control_flow() {
    std::vector<bool> defined(d_.tregs.size(), false);
    bool cf = false;
    u32 need = 0;
    for (const auto &ti : d_.body) {
      cf |= ti.form == Form::bcc || ti.form == Form::jmp || ti.form == Form::label;
      if (ti.dst < 0) {
        continue;
      }
      if (cf && !defined[ti.dst] && ti.dst_fixed < 0) {
        ++need;
      }
      defined[ti.dst] = ti.form != Form::mov;
    }
    for (u32 i = 0; i < need; ++i) {
      reserve_.push_back(c_.alloc_scratch());
    }
  }

  /// Register the result of instruction `at` is written to. `x` is the
  /// tied source, if any; its value is in the returned register.
  u8 dest(int d, int x, int at) {
    const int cur = resolve(d);
    if (cur >= 0 && owns(static_cast<u8>(cur)) && binds_[d].phys == cur &&
        !shared(static_cast<u8>(cur), d, d, at)) {
      if (x >= 0) {
        const u8 r = read(x);
        if (r != cur) {
          c_.emit(visa::ops::mov(static_cast<u8>(cur), r));
        }
      }
      return static_cast<u8>(cur);
    }
    if (x < 0) {
      return own(alloc());
    }
    const u8 r = read(x);
    const bool x_dead = p_.last_use[x] <= at || x == d;
    if (x_dead && !shared(r, x, d, at)) {
      if (owns(r)) {
        return r;
      }
      const int i = binds_[x].phys < 0 ? binds_[x].input : -1;
      if (i >= 0 && d_.inputs[i].kill && in_[i].kind == Op::Kind::value) {
        Scratch s = c_.try_take_over(*in_[i].handle);
        if (s.valid()) {
          TPDEMINI_ASSERT(s.reg() == r, "take-over moved the register");
          return own(std::move(s));
        }
      }
    }
    const u8 n = own(alloc());
    c_.emit(visa::ops::mov(n, r));
    return n;
  }

  void bind(int d, u8 r) {
    binds_[d].input = -1;
    binds_[d].phys = r;
  }

  visa::Mem mem_of(const TOperand &o, Candidate cand) {
    const Bind &b = binds_[o.treg];
    if (cand == Candidate::fold_addr && c_.options().fold && b.phys < 0 && b.input >= 0 &&
        in_reg_[b.input] < 0 && in_[b.input].kind == Op::Kind::address) {
      Op &op = in_[b.input];
      const i64 disp = static_cast<i64>(op.disp) + o.disp;
      if (visa::fits_i32(disp)) {
        visa::Mem m;
        m.base = op.handle ? c_.load_to_reg(*op.handle) : op.raw;
        if (op.index) {
          m.index = c_.load_to_reg(*op.index);
          m.scale = op.scale;
        }
        m.disp = static_cast<i32>(disp);
        return m;
      }
    }
    return visa::Mem{read(o.treg), std::nullopt, 1, o.disp};
  }

  i32 imm_of(const TOperand &o) const {
    if (o.treg < 0) {
      return static_cast<i32>(o.imm);
    }
    const u64 v = *in_[o.treg].const_value();
    if (!visa::fits_i32(static_cast<i64>(v))) {
      throw SnippetError(d_.name + ": immediate operand does not fit 32 bits");
    }
    return static_cast<i32>(static_cast<i64>(v));
  }

  visa::Label label(int l) {
    if (labels_.empty()) {
      for (const auto &n : d_.labels) {
        labels_.push_back(c_.new_label(d_.name + "." + n));
      }
    }
    return labels_[l];
  }

  void step(int at) {
    using namespace visa::ops;
    const TInst &ti = d_.body[at];
    const auto &cands = p_.candidates[at];
    const auto has = [&](Candidate k) {
      return c_.options().fold && std::find(cands.begin(), cands.end(), k) != cands.end();
    };
    switch (ti.form) {
    case Form::alu: {
      const auto k = const_of(ti.b.treg);
      if (ti.op == visa::Op::ADD && has(Candidate::imm_addi) && k &&
          visa::fits_i32(static_cast<i64>(*k))) {
        const u8 r = dest(ti.dst, ti.a.treg, at);
        c_.emit(addi(r, static_cast<i32>(static_cast<i64>(*k))));
        bind(ti.dst, r);
        break;
      }
      const u8 y = read(ti.b.treg);
      const u8 r = dest(ti.dst, ti.a.treg, at);
      c_.emit(alu(ti.op, r, y));
      bind(ti.dst, r);
      break;
    }
    case Form::divmod: {
      const u8 y = read(ti.b.treg);
      TPDEMINI_ASSERT(y > 1, "divisor in a result register");
      c_.emit(divmod(y));
      bind(ti.dst, static_cast<u8>(ti.dst_fixed));
      break;
    }
    case Form::mov: {
      // Aliases until one side is overwritten.
      binds_[ti.dst] = binds_[ti.a.treg];
      break;
    }
    case Form::movi: {
      const u8 r = ti.dst_fixed >= 0 ? static_cast<u8>(ti.dst_fixed) : dest(ti.dst, -1, at);
      if (ti.b.treg >= 0) {
        c_.materialize(r, *in_[ti.b.treg].const_value());
      } else {
        c_.emit(movi(r, static_cast<i32>(ti.b.imm)));
      }
      bind(ti.dst, r);
      break;
    }
    case Form::addi: {
      const u8 r = dest(ti.dst, ti.a.treg, at);
      c_.emit(addi(r, imm_of(ti.b)));
      bind(ti.dst, r);
      break;
    }
    case Form::cmp: {
      const auto k = const_of(ti.b.treg);
      const u8 a = read(ti.a.treg);
      if (has(Candidate::imm_cmpi) && k && visa::fits_i32(static_cast<i64>(*k))) {
        c_.emit(cmpi(a, static_cast<i32>(static_cast<i64>(*k))));
      } else {
        c_.emit(cmp(a, read(ti.b.treg)));
      }
      break;
    }
    case Form::cmpi: c_.emit(cmpi(read(ti.a.treg), imm_of(ti.b))); break;
    case Form::ld: {
      const visa::Mem m =
          mem_of(ti.a, has(Candidate::fold_addr) ? Candidate::fold_addr : Candidate::reg_form);
      const u8 r = dest(ti.dst, -1, at);
      c_.emit(ld(r, m));
      bind(ti.dst, r);
      break;
    }
    case Form::st: {
      const u8 v = read(ti.b.treg);
      const visa::Mem m =
          mem_of(ti.a, has(Candidate::fold_addr) ? Candidate::fold_addr : Candidate::reg_form);
      c_.emit(st(m, v));
      break;
    }
    case Form::setcc: {
      const u8 r = dest(ti.dst, -1, at);
      c_.emit(setcc(ti.cond, r));
      bind(ti.dst, r);
      break;
    }
    case Form::bcc:
      in_cf_ = true;
      c_.emit_cond_branch(ti.cond, label(ti.label));
      break;
    case Form::jmp:
      in_cf_ = true;
      c_.emit_jump(label(ti.label));
      break;
    case Form::label:
      in_cf_ = true;
      c_.bind_label(label(ti.label));
      break;
    }
  }

  Scratch take_output(int o) {
    const int end = static_cast<int>(d_.body.size());
    const int r = resolve(o);
    if (r >= 0 && owns(static_cast<u8>(r))) {
      // A second output on the same register gets a copy.
      Scratch s = std::move(pool_[r]);
      return s;
    }
    const Bind b = binds_[o];
    if (b.phys < 0) {
      const int i = b.input;
      TPDEMINI_ASSERT(i >= 0, "output without definition");
      if (d_.inputs[i].kill && in_[i].kind == Op::Kind::value && !shared_input(i, o, end)) {
        Scratch s = c_.try_take_over(*in_[i].handle);
        if (s.valid()) {
          return s;
        }
      }
      Scratch s = c_.alloc_scratch();
      if (r >= 0) {
        c_.emit(visa::ops::mov(s.reg(), static_cast<u8>(r)));
      } else {
        load_into(i, s.reg());
      }
      return s;
    }
    Scratch s = c_.alloc_scratch();
    c_.emit(visa::ops::mov(s.reg(), static_cast<u8>(r)));
    return s;
  }

  bool shared_input(int i, int o, int end) const {
    for (int t = 0; t < static_cast<int>(binds_.size()); ++t) {
      if (t != o && binds_[t].phys < 0 && binds_[t].input == i && p_.last_use[t] >= end) {
        return true;
      }
    }
    return false;
  }

  const EncoderPlan &p_;
  const SnippetDef &d_;
  C &c_;
  std::span<Op> in_;
  std::vector<Bind> binds_;
  std::vector<int> in_reg_;
  std::array<Scratch, N> pool_{};
  std::vector<Scratch> reserve_;
  std::vector<visa::Label> labels_;
  bool in_cf_ = false;
};

} // namespace detail

/// Expands `plan` at the current position. Returned scratch registers hold
/// the outputs in declaration order; fixed registers the plan needs are
/// vacated first and whatever lived there keeps its new home afterwards.
template <typename C>
std::vector<typename C::ScratchReg> invoke(const EncoderPlan &plan, C &c,
                                           std::span<AsmOperand<C>> inputs) {
  return detail::Invoker<C>(plan, c, inputs).run();
}

template <typename C>
std::vector<typename C::ScratchReg> invoke(const EncoderPlan &plan, C &c,
                                           std::vector<AsmOperand<C>> &inputs) {
  return invoke(plan, c, std::span<AsmOperand<C>>(inputs));
}

} // namespace tpdemini::snippets
