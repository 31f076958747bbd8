// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "tpdemini/ir/Ir.hpp"
#include "tpdemini/ir/Parser.hpp"
#include "tpdemini/ir/Printer.hpp"

namespace tpdemini::ir {

struct Violation {
  std::string function;
  std::string value; // empty when not tied to a value
  std::string block;
  std::string rule;

  std::string to_string() const {
    std::string s = rule + " in @" + function;
    if (!block.empty()) {
      s += " block " + block;
    }
    if (!value.empty()) {
      s += " value %" + value;
    }
    return s;
  }
};

/// Immediate dominators over reachable blocks (Cooper, Harvey, Kennedy).
/// Unreachable blocks get ~0u.
class DomTree {
public:
  explicit DomTree(const Function &f) {
    const u32 n = static_cast<u32>(f.blocks.size());
    idom_.assign(n, ~0u);
    rpo_index_.assign(n, ~0u);
    if (n == 0) {
      return;
    }
    // Iterative post-order DFS.
    std::vector<u32> post;
    std::vector<u8> seen(n, 0);
    std::vector<std::pair<u32, u32>> stack{{0, 0}};
    seen[0] = 1;
    while (!stack.empty()) {
      auto &[b, i] = stack.back();
      const auto succ = f.blocks[b].successors();
      if (i < succ.size()) {
        const u32 s = succ[i++];
        if (s < n && !seen[s]) {
          seen[s] = 1;
          stack.emplace_back(s, 0);
        }
      } else {
        post.push_back(b);
        stack.pop_back();
      }
    }
    rpo_.assign(post.rbegin(), post.rend());
    for (u32 i = 0; i < rpo_.size(); ++i) {
      rpo_index_[rpo_[i]] = i;
    }
    const auto preds = predecessors(f);
    idom_[0] = 0;
    bool changed = true;
    while (changed) {
      changed = false;
      for (u32 i = 1; i < rpo_.size(); ++i) {
        const u32 b = rpo_[i];
        u32 new_idom = ~0u;
        for (u32 p : preds[b]) {
          if (idom_[p] == ~0u) {
            continue;
          }
          new_idom = new_idom == ~0u ? p : intersect(p, new_idom);
        }
        if (new_idom != idom_[b]) {
          idom_[b] = new_idom;
          changed = true;
        }
      }
    }
  }

  bool reachable(u32 b) const { return idom_[b] != ~0u; }
  u32 idom(u32 b) const { return idom_[b]; }
  const std::vector<u32> &rpo() const { return rpo_; }

  /// True if `a` dominates `b` (reflexive).
  bool dominates(u32 a, u32 b) const {
    if (!reachable(a) || !reachable(b)) {
      return false;
    }
    while (true) {
      if (a == b) {
        return true;
      }
      if (b == 0) {
        return false;
      }
      b = idom_[b];
    }
  }

private:
  u32 intersect(u32 a, u32 b) const {
    while (a != b) {
      while (rpo_index_[a] > rpo_index_[b]) {
        a = idom_[a];
      }
      while (rpo_index_[b] > rpo_index_[a]) {
        b = idom_[b];
      }
    }
    return a;
  }

  std::vector<u32> idom_;
  std::vector<u32> rpo_index_;
  std::vector<u32> rpo_;
};

namespace detail {

class FunctionValidator {
public:
  FunctionValidator(const Module &m, const Function &f, std::vector<Violation> &out)
      : m_(m), f_(f), out_(out) {}

  void run() {
    if (f_.blocks.empty()) {
      report("", "", "function has no blocks");
      return;
    }
    if (!structure()) {
      return;
    }
    const auto preds = predecessors(f_);
    if (!preds[0].empty()) {
      report("", f_.blocks[0].label, "entry has predecessors");
    }
    if (!f_.blocks[0].phis.empty()) {
      report(value_name(f_, f_.blocks[0].phis[0].def), f_.blocks[0].label,
             "entry has phi");
    }
    const DomTree dom(f_);
    for (u32 b = 0; b < f_.blocks.size(); ++b) {
      if (!dom.reachable(b)) {
        report("", f_.blocks[b].label, "unreachable block");
      }
    }
    for (u32 b = 0; b < f_.blocks.size(); ++b) {
      const auto &blk = f_.blocks[b];
      for (const auto &phi : blk.phis) {
        if (auto v = phi_structure_violation(phi, preds[b])) {
          report(value_name(f_, phi.def), blk.label, *v);
        }
        for (const auto &in : phi.incoming) {
          check_type(in.value, phi.type, phi.def, blk.label);
          if (in.value.is_value() && dom.reachable(in.block) &&
              !defined_at_end(dom, in.value.def, in.block)) {
            report(value_name(f_, in.value.def), blk.label, "use not dominated");
          }
        }
      }
      for (u32 i = 0; i < blk.insts.size(); ++i) {
        const auto &inst = blk.insts[i];
        check_inst(inst, blk.label);
        for (const auto &op : inst.ops) {
          if (op.is_value() && !dominates_use(dom, op.def, b, i)) {
            report(value_name(f_, op.def), blk.label, "use not dominated");
          }
        }
      }
    }
  }

private:
  void report(std::string value, std::string block, std::string rule) {
    out_.push_back(Violation{f_.name, std::move(value), std::move(block),
                             std::move(rule)});
  }

  /// Def table consistency, operand ranges, terminators and targets. Later
  /// checks index by these, so a failure stops validation of the function.
  bool structure() {
    bool ok = true;
    std::vector<u8> seen(f_.defs.size(), 0);
    const auto claim = [&](u32 def, const std::string &block) {
      if (def >= f_.defs.size()) {
        report(std::to_string(def), block, "undefined value");
        ok = false;
      } else if (seen[def]++) {
        report(value_name(f_, def), block, "duplicate definition");
        ok = false;
      }
    };
    for (u32 p = 0; p < f_.params.size(); ++p) {
      claim(p, "");
    }
    for (u32 b = 0; b < f_.blocks.size(); ++b) {
      const auto &blk = f_.blocks[b];
      for (const auto &phi : blk.phis) {
        claim(phi.def, blk.label);
      }
      for (const auto &inst : blk.insts) {
        claim(inst.def, blk.label);
      }
      if (blk.insts.empty() || !is_terminator(blk.insts.back().op)) {
        report("", blk.label, "missing terminator");
        ok = false;
      }
      for (u32 i = 0; i + 1 < blk.insts.size(); ++i) {
        if (is_terminator(blk.insts[i].op)) {
          report("", blk.label, "terminator not last");
          ok = false;
        }
      }
      for (const auto &inst : blk.insts) {
        const u32 want = inst.op == Opcode::br ? 1 : inst.op == Opcode::condbr ? 2 : 0;
        if (inst.targets.size() != want) {
          report("", blk.label, "malformed terminator");
          ok = false;
        }
        for (u32 t : inst.targets) {
          if (t >= f_.blocks.size()) {
            report("", blk.label, "unknown block label");
            ok = false;
          }
        }
        if (inst.op == Opcode::call && inst.callee >= m_.functions.size()) {
          report("", blk.label, "unknown callee");
          ok = false;
        }
        for (const auto &op : inst.ops) {
          if (op.is_value() && op.def >= f_.defs.size()) {
            report(std::to_string(op.def), blk.label, "undefined value");
            ok = false;
          }
        }
      }
      for (const auto &phi : blk.phis) {
        for (const auto &in : phi.incoming) {
          if (in.block >= f_.blocks.size()) {
            report(value_name(f_, phi.def), blk.label, "unknown block label");
            ok = false;
          }
          if (in.value.is_value() && in.value.def >= f_.defs.size()) {
            report(std::to_string(in.value.def), blk.label, "undefined value");
            ok = false;
          }
        }
      }
    }
    if (ok) {
      for (u32 d = 0; d < f_.defs.size(); ++d) {
        if (!seen[d]) {
          report(value_name(f_, d), "", "undefined value");
          ok = false;
        }
      }
    }
    return ok;
  }

  void check_type(const Operand &op, Type want, u32 user, const std::string &block) {
    if (op.is_value() && f_.defs[op.def].type != want) {
      report(value_name(f_, user), block, "type mismatch");
    }
  }

  void check_inst(const Inst &inst, const std::string &block) {
    const std::string name = value_name(f_, inst.def);
    if (inst.op == Opcode::ret) {
      if ((f_.ret == Type::void_) != inst.ops.empty()) {
        report(name, block, "type mismatch");
        return;
      }
    } else if (inst.ops.size() != operand_count(m_, inst)) {
      report(name, block, "operand count mismatch");
      return;
    }
    if (inst.type != result_type(m_, inst)) {
      report(name, block, "type mismatch");
    }
    for (u32 i = 0; i < inst.ops.size(); ++i) {
      check_type(inst.ops[i], operand_type(m_, f_, inst, i), inst.def, block);
    }
    if (inst.op == Opcode::addr) {
      const u64 scale = inst.ops[2].lo;
      const auto disp = static_cast<i64>(inst.ops[3].lo);
      if (!inst.ops[2].is_const() || !inst.ops[3].is_const() ||
          (scale != 1 && scale != 2 && scale != 4 && scale != 8) ||
          disp < INT32_MIN || disp > INT32_MAX) {
        report(name, block, "invalid addr operands");
      }
    }
    if (inst.op == Opcode::alloca_ref && inst.stack_var >= f_.stack_vars.size()) {
      report(name, block, "undeclared stack variable");
    }
  }

  u32 position(u32 def) const {
    const auto &d = f_.defs[def];
    // Phis come before all instructions of the block.
    return d.kind == DefInfo::Kind::phi ? 0 : d.index + 1;
  }

  bool dominates_use(const DomTree &dom, u32 def, u32 block, u32 inst_index) const {
    const auto &d = f_.defs[def];
    if (d.kind == DefInfo::Kind::param) {
      return true;
    }
    if (d.block == block) {
      return position(def) < inst_index + 1;
    }
    return dom.dominates(d.block, block);
  }

  bool defined_at_end(const DomTree &dom, u32 def, u32 block) const {
    const auto &d = f_.defs[def];
    return d.kind == DefInfo::Kind::param || dom.dominates(d.block, block);
  }

  const Module &m_;
  const Function &f_;
  std::vector<Violation> &out_;
};

} // namespace detail

/// Checks strict SSA form and structural rules. Empty result means valid.
inline std::vector<Violation> validate(const Module &m) {
  std::vector<Violation> out;
  std::unordered_set<std::string> names;
  for (const auto &f : m.functions) {
    if (!names.insert(f.name).second) {
      out.push_back(Violation{f.name, "", "", "duplicate function"});
    }
    for (const auto &sv : f.stack_vars) {
      if (sv.size == 0 || sv.align == 0 || sv.align > 16 ||
          (sv.align & (sv.align - 1)) != 0) {
        out.push_back(Violation{f.name, "", "", "invalid stack variable"});
      }
    }
    detail::FunctionValidator(m, f, out).run();
  }
  return out;
}

class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<Violation> v)
      : std::runtime_error(v.front().to_string()), violations(std::move(v)) {}
  std::vector<Violation> violations;
};

/// Parses and validates. Throws ParseError or ValidationError.
inline Module load_module(std::string_view text) {
  Module m = parse_module(text);
  auto v = validate(m);
  if (!v.empty()) {
    throw ValidationError(std::move(v));
  }
  return m;
}

} // namespace tpdemini::ir
