// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tpdemini/base.hpp"

/// The seed IR: a small SSA IR with i64/i128 integers, per-function stack
/// variables and direct calls. It exists to drive the back-end and to serve
/// as the semantic reference via its interpreter.
namespace tpdemini::ir {

enum class Type : u8 { i64, i128, void_ };

inline std::string_view type_name(Type t) {
  switch (t) {
  case Type::i64: return "i64";
  case Type::i128: return "i128";
  case Type::void_: return "void";
  }
  return "?";
}

inline u32 type_parts(Type t) {
  return t == Type::i128 ? 2 : t == Type::i64 ? 1 : 0;
}

enum class Opcode : u8 {
  add,
  sub,
  mul,
  udiv,
  urem,
  and_,
  or_,
  xor_,
  shl,
  shr,
  cmp_eq,
  cmp_ne,
  cmp_ult,
  cmp_slt,
  addr,
  load,
  store,
  alloca_ref,
  trunc,
  zext128,
  add128,
  call,
  br,
  condbr,
  ret,
};

inline constexpr std::array<std::string_view, 25> kOpcodeNames = {
    "add",    "sub",    "mul",     "udiv",    "urem",       "and",
    "or",     "xor",    "shl",     "shr",     "cmp.eq",     "cmp.ne",
    "cmp.ult", "cmp.slt", "addr",  "load",    "store",      "alloca_ref",
    "trunc",  "zext128", "add128", "call",    "br",         "condbr",
    "ret"};

inline std::string_view opcode_name(Opcode op) {
  return kOpcodeNames[static_cast<u8>(op)];
}

inline std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == name) {
      return static_cast<Opcode>(i);
    }
  }
  return std::nullopt;
}

inline bool is_terminator(Opcode op) {
  return op == Opcode::br || op == Opcode::condbr || op == Opcode::ret;
}

inline bool is_binary_i64(Opcode op) {
  return op <= Opcode::cmp_slt;
}

inline bool is_compare(Opcode op) {
  return op >= Opcode::cmp_eq && op <= Opcode::cmp_slt;
}

/// An operand: either a reference to a definition (by function-local id) or
/// an inline constant. i128 constants carry both halves.
struct Operand {
  enum class Kind : u8 { value, constant };
  Kind kind = Kind::constant;
  u32 def = 0;
  u64 lo = 0;
  u64 hi = 0;

  static Operand value(u32 def_id) {
    return Operand{Kind::value, def_id, 0, 0};
  }
  static Operand constant(u64 lo, u64 hi = 0) {
    return Operand{Kind::constant, 0, lo, hi};
  }
  bool is_value() const { return kind == Kind::value; }
  bool is_const() const { return kind == Kind::constant; }

  bool operator==(const Operand &) const = default;
};

struct PhiIncoming {
  u32 block = 0;
  Operand value;
  bool operator==(const PhiIncoming &) const = default;
};

struct Phi {
  u32 def = 0;
  Type type = Type::i64;
  std::vector<PhiIncoming> incoming;
  bool operator==(const Phi &) const = default;
};

struct Inst {
  u32 def = 0;
  Opcode op = Opcode::ret;
  Type type = Type::void_;
  std::vector<Operand> ops;
  /// Branch targets (br: 1, condbr: true then false).
  std::vector<u32> targets;
  /// Callee function index (call only).
  u32 callee = 0;
  /// Stack variable index (alloca_ref only).
  u32 stack_var = 0;
  bool operator==(const Inst &) const = default;
};

struct Block {
  std::string label;
  std::vector<Phi> phis;
  std::vector<Inst> insts;

  const Inst &terminator() const { return insts.back(); }

  std::span<const u32> successors() const {
    if (insts.empty()) {
      return {};
    }
    return insts.back().targets;
  }

  bool operator==(const Block &) const = default;
};

struct StackVar {
  u32 size = 8;
  u32 align = 8;
  bool operator==(const StackVar &) const = default;
};

/// Where a definition lives. Every parameter, phi and instruction has one,
/// numbered in textual order (params, then phis and insts block by block).
struct DefInfo {
  enum class Kind : u8 { param, phi, inst };
  Kind kind = Kind::inst;
  u32 block = 0;
  u32 index = 0;
  Type type = Type::void_;
  std::string name;
  bool operator==(const DefInfo &) const = default;
};

struct Param {
  std::string name;
  Type type = Type::i64;
  bool operator==(const Param &) const = default;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  Type ret = Type::void_;
  std::vector<Block> blocks;
  std::vector<StackVar> stack_vars;
  std::vector<DefInfo> defs;

  u32 param_slot_count() const {
    u32 n = 0;
    for (const auto &p : params) {
      n += type_parts(p.type);
    }
    return n;
  }

  const Inst &inst_of(u32 def) const {
    const auto &d = defs[def];
    return blocks[d.block].insts[d.index];
  }

  const Phi &phi_of(u32 def) const {
    const auto &d = defs[def];
    return blocks[d.block].phis[d.index];
  }

  Type type_of(const Operand &op, Type const_type) const {
    return op.is_value() ? defs[op.def].type : const_type;
  }

  /// Rebuilds `defs` from the block contents and renumbers def ids in
  /// textual order. Names carry over from the old table.
  void renumber();

  bool operator==(const Function &) const = default;
};

struct Module {
  std::vector<Function> functions;
  std::unordered_map<std::string, u32> symbols;

  std::optional<u32> find(std::string_view name) const {
    auto it = symbols.find(std::string(name));
    if (it == symbols.end()) {
      return std::nullopt;
    }
    return it->second;
  }

  void rebuild_symbols() {
    symbols.clear();
    for (u32 i = 0; i < functions.size(); ++i) {
      symbols.emplace(functions[i].name, i);
    }
  }
};

inline void Function::renumber() {
  std::vector<u32> remap(defs.size(), ~0u);
  std::vector<DefInfo> fresh;
  fresh.reserve(defs.size());
  for (u32 i = 0; i < params.size(); ++i) {
    remap[i] = static_cast<u32>(fresh.size());
    fresh.push_back(DefInfo{DefInfo::Kind::param, 0, i, params[i].type,
                            params[i].name});
  }
  for (u32 b = 0; b < blocks.size(); ++b) {
    auto &block = blocks[b];
    for (u32 i = 0; i < block.phis.size(); ++i) {
      auto &phi = block.phis[i];
      std::string name = phi.def < defs.size() ? defs[phi.def].name : "";
      remap[phi.def] = static_cast<u32>(fresh.size());
      fresh.push_back(DefInfo{DefInfo::Kind::phi, b, i, phi.type, name});
    }
    for (u32 i = 0; i < block.insts.size(); ++i) {
      auto &inst = block.insts[i];
      std::string name = inst.def < defs.size() ? defs[inst.def].name : "";
      remap[inst.def] = static_cast<u32>(fresh.size());
      fresh.push_back(DefInfo{DefInfo::Kind::inst, b, i, inst.type, name});
    }
  }
  const auto fix = [&](Operand &op) {
    if (op.is_value()) {
      TPDEMINI_ASSERT(op.def < remap.size() && remap[op.def] != ~0u,
                      "operand refers to a removed definition");
      op.def = remap[op.def];
    }
  };
  for (auto &block : blocks) {
    for (auto &phi : block.phis) {
      phi.def = remap[phi.def];
      for (auto &in : phi.incoming) {
        fix(in.value);
      }
    }
    for (auto &inst : block.insts) {
      inst.def = remap[inst.def];
      for (auto &op : inst.ops) {
        fix(op);
      }
    }
  }
  defs = std::move(fresh);
}

/// Predecessor lists, in block order, one entry per distinct predecessor.
inline std::vector<std::vector<u32>> predecessors(const Function &f) {
  std::vector<std::vector<u32>> preds(f.blocks.size());
  for (u32 b = 0; b < f.blocks.size(); ++b) {
    for (u32 s : f.blocks[b].successors()) {
      auto &p = preds[s];
      if (p.empty() || p.back() != b) {
        p.push_back(b);
      }
    }
  }
  return preds;
}

/// Number of value operands an opcode takes (calls: callee arity).
inline u32 operand_count(const Module &m, const Inst &inst) {
  switch (inst.op) {
  case Opcode::addr: return 4;
  case Opcode::load:
  case Opcode::trunc:
  case Opcode::zext128:
  case Opcode::condbr: return 1;
  case Opcode::alloca_ref:
  case Opcode::br: return 0;
  case Opcode::call: return static_cast<u32>(m.functions[inst.callee].params.size());
  case Opcode::ret: return static_cast<u32>(inst.ops.size());
  default: return 2;
  }
}

/// Type expected for operand `i` of `inst` in function `f`.
inline Type operand_type(const Module &m, const Function &f, const Inst &inst,
                         u32 i) {
  switch (inst.op) {
  case Opcode::trunc:
  case Opcode::add128: return Type::i128;
  case Opcode::call: return m.functions[inst.callee].params[i].type;
  case Opcode::ret: return f.ret;
  default: return Type::i64;
  }
}

/// Result type implied by the opcode (calls: callee return type).
inline Type result_type(const Module &m, const Inst &inst) {
  switch (inst.op) {
  case Opcode::zext128:
  case Opcode::add128: return Type::i128;
  case Opcode::store:
  case Opcode::br:
  case Opcode::condbr:
  case Opcode::ret: return Type::void_;
  case Opcode::call: return m.functions[inst.callee].ret;
  default: return Type::i64;
  }
}

} // namespace tpdemini::ir
