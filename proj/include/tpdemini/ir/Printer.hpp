// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <string>

#include "tpdemini/ir/Ir.hpp"

namespace tpdemini::ir {

/// Name used for a definition in printed form. Unnamed results get `_N`.
inline std::string value_name(const Function &f, u32 def) {
  if (def < f.defs.size() && !f.defs[def].name.empty()) {
    return f.defs[def].name;
  }
  return "_" + std::to_string(def);
}

inline void print_operand(std::ostream &os, const Function &f, const Operand &op,
                          Type type) {
  if (op.is_value()) {
    os << '%' << value_name(f, op.def);
  } else if (type == Type::i128) {
    os << '(' << op.lo << ", " << op.hi << ')';
  } else {
    os << static_cast<i64>(op.lo);
  }
}

inline void print_inst(std::ostream &os, const Module &m, const Function &f,
                       const Inst &inst) {
  if (inst.type != Type::void_) {
    os << '%' << value_name(f, inst.def) << " = ";
  }
  os << opcode_name(inst.op);
  switch (inst.op) {
  case Opcode::alloca_ref:
    os << ' ' << inst.stack_var;
    return;
  case Opcode::br:
    os << ' ' << f.blocks[inst.targets[0]].label;
    return;
  case Opcode::condbr:
    os << ' ';
    print_operand(os, f, inst.ops[0], Type::i64);
    os << ", " << f.blocks[inst.targets[0]].label << ", "
       << f.blocks[inst.targets[1]].label;
    return;
  case Opcode::call:
    os << " @" << m.functions[inst.callee].name << '(';
    for (u32 i = 0; i < inst.ops.size(); ++i) {
      os << (i ? ", " : "");
      print_operand(os, f, inst.ops[i], operand_type(m, f, inst, i));
    }
    os << ')';
    return;
  default:
    for (u32 i = 0; i < inst.ops.size(); ++i) {
      os << (i ? ", " : " ");
      print_operand(os, f, inst.ops[i], operand_type(m, f, inst, i));
    }
    return;
  }
}

inline void print_function(std::ostream &os, const Module &m, const Function &f) {
  os << "func @" << f.name << '(';
  for (u32 i = 0; i < f.params.size(); ++i) {
    os << (i ? ", " : "") << '%' << value_name(f, i) << ": "
       << type_name(f.params[i].type);
  }
  os << ") -> " << type_name(f.ret) << " {\n";
  for (const auto &sv : f.stack_vars) {
    os << "  stack " << sv.size << " align " << sv.align << '\n';
  }
  for (const auto &b : f.blocks) {
    os << b.label << ":\n";
    for (const auto &phi : b.phis) {
      os << "  %" << value_name(f, phi.def) << " = phi " << type_name(phi.type);
      for (u32 i = 0; i < phi.incoming.size(); ++i) {
        os << (i ? ", [" : " [");
        print_operand(os, f, phi.incoming[i].value, phi.type);
        os << ", " << f.blocks[phi.incoming[i].block].label << ']';
      }
      os << '\n';
    }
    for (const auto &inst : b.insts) {
      os << "  ";
      print_inst(os, m, f, inst);
      os << '\n';
    }
  }
  os << "}\n";
}

inline std::string print_module(const Module &m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.functions.size(); ++i) {
    if (i != 0) {
      os << '\n';
    }
    print_function(os, m, m.functions[i]);
  }
  return os.str();
}

inline std::string inst_to_string(const Module &m, const Function &f,
                                  const Inst &inst) {
  std::ostringstream os;
  print_inst(os, m, f, inst);
  return os.str();
}

} // namespace tpdemini::ir
