// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tpdemini/codegen/CompilerVisa.hpp"
#include "tpdemini/ir/Printer.hpp"
#include "tpdemini/seed/SeedAdapter.hpp"
#include "tpdemini/snippets/Invoke.hpp"

#ifndef TPDEMINI_DEFAULT_SNIPPETS
#define TPDEMINI_DEFAULT_SNIPPETS "snippets/visa.snip"
#endif

namespace tpdemini::seed {

using codegen::CompileOptions;
using codegen::FunctionStats;

inline constexpr const char *kRequiredSnippets[] = {
    "add64",  "sub64",   "mul64",    "and64",   "or64",     "xor64",   "shl64",
    "shr64",  "shl64_const", "shr64_const", "zero64", "udiv64", "urem64", "cmp64",
    "test64", "add128",  "zext128",  "trunc128", "mov64",   "ld64",    "st64"};

inline snippets::SnippetLibrary load_snippet_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw snippets::SnippetError("cannot read snippet file " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return snippets::SnippetLibrary(ss.str());
}

/// The library named by $TPDEMINI_SNIPPETS, or the one in the source tree.
inline const snippets::SnippetLibrary &default_snippets() {
  static const snippets::SnippetLibrary lib = [] {
    const char *env = std::getenv("TPDEMINI_SNIPPETS");
    return load_snippet_file(env && *env ? env : TPDEMINI_DEFAULT_SNIPPETS);
  }();
  return lib;
}

/// Instruction selection for the seed IR. Compares feeding only the
/// block's branch are fused into it; single-use address computations are
/// folded into the memory operand of their load or store.
class SeedCompiler : public codegen::CompilerVisa<SeedAdapter, SeedCompiler> {
public:
  using Base = codegen::CompilerVisa<SeedAdapter, SeedCompiler>;
  using H = ValuePartRef;
  using AsmOp = snippets::AsmOperand<SeedCompiler>;

  SeedCompiler(SeedAdapter &a, const snippets::SnippetLibrary &lib, CompileOptions o = {})
      : Base(a, o), lib_(lib) {
    for (const char *n : kRequiredSnippets) {
      lib_.get(n);
    }
  }

  void begin_function() {
    Base::begin_function();
    const ir::Function &fn = func();
    const u32 n = static_cast<u32>(fn.defs.size());
    fused_.assign(n, false);
    folded_.assign(n, false);
    std::vector<u32> uses(n, 0);
    std::vector<std::pair<u32, u32>> user(n, {~0u, 0}); // (inst def, operand index)
    for (const auto &blk : fn.blocks) {
      for (const auto &phi : blk.phis) {
        for (const auto &in : phi.incoming) {
          if (in.value.is_value()) {
            uses[in.value.def] += 2; // never fusable
          }
        }
      }
      for (const auto &inst : blk.insts) {
        for (u32 k = 0; k < inst.ops.size(); ++k) {
          if (inst.ops[k].is_value()) {
            ++uses[inst.ops[k].def];
            user[inst.ops[k].def] = {inst.def, k};
          }
        }
      }
    }
    for (u32 d = 0; d < n; ++d) {
      const auto &info = fn.defs[d];
      if (info.kind != ir::DefInfo::Kind::inst || uses[d] != 1) {
        continue;
      }
      const ir::Inst &in = fn.inst_of(d);
      const auto &ud = fn.defs[user[d].first];
      if (ud.block != info.block) {
        continue;
      }
      const ir::Inst &u = fn.inst_of(user[d].first);
      if (ir::is_compare(in.op) && u.op == ir::Opcode::condbr) {
        fused_[d] = true;
      } else if (in.op == ir::Opcode::addr && options().fold && user[d].second == 0 &&
                 (u.op == ir::Opcode::load || u.op == ir::Opcode::store)) {
        folded_[d] = fold_disp(in).has_value();
      }
    }
  }

  bool absorbed(ValueRef v) const { return fused_[v] || folded_[v]; }

  bool fixed_candidate(ValueRef v) const {
    const ir::Function &fn = func();
    if (fn.defs[v].kind != ir::DefInfo::Kind::inst) {
      return true;
    }
    return fn.inst_of(v).op != ir::Opcode::alloca_ref && !fused_[v] && !folded_[v];
  }

  std::string inst_text(ValueRef v) const {
    const ir::Function &fn = func();
    return ir::inst_to_string(adapter().module(), fn, fn.inst_of(v));
  }

  bool compile_inst(ValueRef v) {
    using ir::Opcode;
    const ir::Inst &in = func().inst_of(v);
    switch (in.op) {
    case Opcode::add: return binop(v, "add64", true);
    case Opcode::sub: return sub(v);
    case Opcode::mul: return binop(v, "mul64", true);
    case Opcode::and_: return binop(v, "and64", true);
    case Opcode::or_: return binop(v, "or64", true);
    case Opcode::xor_: return binop(v, "xor64", true);
    case Opcode::udiv: return binop(v, "udiv64", false);
    case Opcode::urem: return binop(v, "urem64", false);
    case Opcode::shl:
    case Opcode::shr: return shift(v, in.op == Opcode::shl);
    case Opcode::cmp_eq:
    case Opcode::cmp_ne:
    case Opcode::cmp_ult:
    case Opcode::cmp_slt: return compare(v, in.op);
    case Opcode::addr: return address(v);
    case Opcode::load:
    case Opcode::store: return memory(v, in.op == Opcode::store);
    case Opcode::alloca_ref: set_recomputable(v, stack_var_offset(in.stack_var)); return true;
    case Opcode::trunc: return unary(v, "trunc128");
    case Opcode::zext128: return unary(v, "zext128");
    case Opcode::add128: return add128(v);
    case Opcode::call: return call(v, in);
    case Opcode::br: compile_br(in.targets[0]); return true;
    case Opcode::condbr: return condbr(v, in);
    case Opcode::ret: {
      const auto ops = adapter().inst_operands(v);
      move_return_value(ops.empty() ? std::nullopt : std::optional<ValueRef>(ops[0]));
      emit_epilogue();
      return true;
    }
    }
    return false;
  }

private:
  const ir::Function &func() const { return adapter().func(); }
  ValueRef operand(ValueRef v, u32 i) { return adapter().inst_operands(v)[i]; }

  std::vector<ScratchReg> run(const char *name, std::vector<AsmOp> &in) {
    return snippets::invoke(lib_.get(name), *this, in);
  }

  void define(ValueRef v, std::vector<ScratchReg> &out) {
    for (u32 p = 0; p < out.size(); ++p) {
      set_value(v, p, std::move(out[p]));
    }
  }

  bool binop(ValueRef v, const char *name, bool commutative) {
    ValueRef x = operand(v, 0);
    ValueRef y = operand(v, 1);
    if (commutative && adapter().val_is_const(x) && !adapter().val_is_const(y)) {
      std::swap(x, y);
    }
    H a = val_ref(x, 0);
    H b = val_ref(y, 0);
    std::vector<AsmOp> in;
    in.push_back(AsmOp::val(a));
    in.push_back(AsmOp::val(b));
    auto out = run(name, in);
    define(v, out);
    return true;
  }

  bool sub(ValueRef v) {
    const ValueRef y = operand(v, 1);
    if (adapter().val_is_const(y) && options().fold) {
      const i64 c = static_cast<i64>(adapter().val_const_part(y, 0));
      if (c != INT64_MIN && visa::fits_i32(-c)) {
        H a = val_ref(operand(v, 0), 0);
        std::vector<AsmOp> in;
        in.push_back(AsmOp::val(a));
        in.push_back(AsmOp::imm(static_cast<u64>(-c)));
        auto out = run("add64", in);
        define(v, out);
        return true;
      }
    }
    return binop(v, "sub64", false);
  }

  bool shift(ValueRef v, bool left) {
    const ValueRef y = operand(v, 1);
    H a = val_ref(operand(v, 0), 0);
    std::vector<AsmOp> in;
    std::vector<ScratchReg> out;
    if (adapter().val_is_const(y)) {
      const u64 n = adapter().val_const_part(y, 0);
      if (n >= 64) {
        out = run("zero64", in);
      } else {
        in.push_back(AsmOp::val(a));
        in.push_back(AsmOp::imm(n));
        out = run(left ? "shl64_const" : "shr64_const", in);
      }
      define(v, out);
      return true;
    }
    H b = val_ref(y, 0);
    in.push_back(AsmOp::val(a));
    in.push_back(AsmOp::val(b));
    out = run(left ? "shl64" : "shr64", in);
    define(v, out);
    return true;
  }

  static visa::Cond cond_of(ir::Opcode op) {
    switch (op) {
    case ir::Opcode::cmp_eq: return visa::Cond::eq;
    case ir::Opcode::cmp_ne: return visa::Cond::ne;
    case ir::Opcode::cmp_ult: return visa::Cond::ult;
    default: return visa::Cond::slt;
    }
  }

  /// Emits the flag-setting compare for `cmp`.
  void emit_compare(ValueRef cmp) {
    H a = val_ref(operand(cmp, 0), 0);
    H b = val_ref(operand(cmp, 1), 0);
    std::vector<AsmOp> in;
    in.push_back(AsmOp::val(a));
    in.push_back(AsmOp::val(b));
    run("cmp64", in);
  }

  bool compare(ValueRef v, ir::Opcode op) {
    if (fused_[v]) {
      defer_operand_uses(v);
      return true;
    }
    emit_compare(v);
    ScratchReg s = alloc_scratch();
    emit(visa::ops::setcc(cond_of(op), s.reg()));
    set_value(v, 0, std::move(s));
    return true;
  }

  bool condbr(ValueRef v, const ir::Inst &in) {
    const ValueRef c = operand(v, 0);
    if (!adapter().val_is_const(c) && fused_[c]) {
      consume_operand_uses(c);
      const ir::Opcode op = func().inst_of(c).op;
      compile_condbr(
          [&] {
            emit_compare(c);
            return cond_of(op);
          },
          in.targets[0], in.targets[1]);
      return true;
    }
    compile_condbr(
        [&] {
          H h = val_ref(c, 0);
          std::vector<AsmOp> ops;
          ops.push_back(AsmOp::val(h));
          run("test64", ops);
          return visa::Cond::ne;
        },
        in.targets[0], in.targets[1]);
    return true;
  }

  /// Displacement of a folded address when the base is a stack variable,
  /// plus constant index contributions. Nullopt if it cannot be folded.
  std::optional<i64> fold_disp(const ir::Inst &a) const {
    const ir::Function &fn = func();
    i64 disp = static_cast<i64>(a.ops[3].lo);
    const auto &base = a.ops[0];
    if (base.is_const()) {
      return std::nullopt;
    }
    const auto &bd = fn.defs[base.def];
    if (bd.kind == ir::DefInfo::Kind::inst && fn.inst_of(base.def).op == ir::Opcode::alloca_ref) {
      disp += stack_var_offset(fn.inst_of(base.def).stack_var);
    }
    if (a.ops[1].is_const()) {
      disp += static_cast<i64>(a.ops[1].lo * a.ops[2].lo);
    }
    if (!visa::fits_i32(disp)) {
      return std::nullopt;
    }
    return disp;
  }

  /// Address operand for `addr` instruction `p`; handles go to `base`/`index`.
  AsmOp address_operand(ValueRef p, std::optional<H> &base, std::optional<H> &index) {
    const ir::Inst &a = func().inst_of(p);
    const ValueRef b = operand(p, 0);
    const ValueRef x = operand(p, 1);
    const u8 scale = static_cast<u8>(a.ops[2].lo);
    H *ip = nullptr;
    i64 disp = static_cast<i64>(a.ops[3].lo);
    if (!adapter().val_is_const(x)) {
      index.emplace(val_ref(x, 0));
      ip = &*index;
    } else {
      disp += static_cast<i64>(adapter().val_const_part(x, 0) * scale);
    }
    if (const auto d = recompute_disp(b); d && visa::fits_i32(disp + *d)) {
      AsmOp o = AsmOp::addr(visa::kFp, static_cast<i32>(disp + *d));
      o.index = ip;
      o.scale = scale;
      return o;
    }
    base.emplace(val_ref(b, 0));
    if (!visa::fits_i32(disp)) {
      throw CompileError(std::string(func().name), inst_text(p), "displacement out of range");
    }
    return AsmOp::addr(*base, static_cast<i32>(disp), ip, scale);
  }

  bool address(ValueRef v) {
    if (folded_[v]) {
      defer_operand_uses(v);
      return true;
    }
    std::optional<H> base, index;
    std::vector<AsmOp> in;
    in.push_back(address_operand(v, base, index));
    auto out = run("mov64", in);
    define(v, out);
    return true;
  }

  bool memory(ValueRef v, bool store) {
    const ValueRef p = operand(v, 0);
    std::optional<H> base, index, ptr;
    std::vector<AsmOp> in;
    if (!adapter().val_is_const(p) && folded_[p]) {
      consume_operand_uses(p);
      in.push_back(address_operand(p, base, index));
    } else if (const auto d = recompute_disp(p); d && options().fold) {
      in.push_back(AsmOp::addr(visa::kFp, *d));
    } else {
      ptr.emplace(val_ref(p, 0));
      in.push_back(AsmOp::val(*ptr));
    }
    if (store) {
      H val = val_ref(operand(v, 1), 0);
      in.push_back(AsmOp::val(val));
      run("st64", in);
      return true;
    }
    auto out = run("ld64", in);
    define(v, out);
    return true;
  }

  bool unary(ValueRef v, const char *name) {
    H a = val_ref(operand(v, 0), 0);
    std::vector<AsmOp> in;
    in.push_back(AsmOp::val(a));
    auto out = run(name, in);
    define(v, out);
    return true;
  }

  bool add128(ValueRef v) {
    ValueRef x = operand(v, 0);
    ValueRef y = operand(v, 1);
    if (adapter().val_is_const(x) && !adapter().val_is_const(y)) {
      std::swap(x, y);
    }
    H al = val_ref(x, 0), ah = val_ref(x, 1), bl = val_ref(y, 0), bh = val_ref(y, 1);
    std::vector<AsmOp> in;
    in.push_back(AsmOp::val(al));
    in.push_back(AsmOp::val(ah));
    in.push_back(AsmOp::val(bl));
    in.push_back(AsmOp::val(bh));
    auto out = run("add128", in);
    define(v, out);
    return true;
  }

  bool call(ValueRef v, const ir::Inst &in) {
    const auto ops = adapter().inst_operands(v);
    const std::vector<ValueRef> args(ops.begin(), ops.end());
    std::optional<ValueRef> result;
    if (in.type != ir::Type::void_) {
      result = v;
    }
    compile_call(args, result, [&] { emit(visa::ops::call(static_cast<i32>(in.callee))); });
    return true;
  }

  const snippets::SnippetLibrary &lib_;
  std::vector<bool> fused_;
  std::vector<bool> folded_;
};

struct CompiledModule {
  visa::ModuleImage image;
  std::vector<FunctionStats> stats;
};

/// Compiles every function of `m` in declaration order.
inline CompiledModule compile_module(const ir::Module &m, const snippets::SnippetLibrary &lib,
                                     CompileOptions opts = {}) {
  SeedAdapter a(m);
  SeedCompiler c(a, lib, opts);
  CompiledModule out;
  for (u32 f = 0; f < m.functions.size(); ++f) {
    c.compile_function(f);
    out.image.functions.push_back(c.take_image(m.functions[f].name));
    out.stats.push_back(c.stats());
    out.stats.back().code_bytes = out.image.functions.back().code.size();
  }
  return out;
}

inline CompiledModule compile_module(const ir::Module &m, CompileOptions opts = {}) {
  return compile_module(m, default_snippets(), opts);
}

} // namespace tpdemini::seed
