// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tpdemini/ir/Ir.hpp"
#include "tpdemini/ir/Validator.hpp"

/// Random valid seed IR programs for differential testing.
///
/// Programs always terminate: the only backward edges (in block order) are
/// loop latches, and each latch spends one unit of a per-frame fuel counter
/// kept in stack variable 0. The call graph is acyclic (callees have higher
/// indices).
namespace tpdemini::seed {

struct GenOptions {
  u32 max_funcs = 3;
  u32 max_blocks = 14;
  u32 max_insts = 8;
  u32 max_fuel = 12;
  /// Also add edges that enter loops past their header.
  bool irreducible = false;
};

namespace detail {

class Generator {
public:
  Generator(u64 seed, const GenOptions &opt) : rng_(seed), opt_(opt) {}

  ir::Module run() {
    const u32 nfuncs = 1 + pick(std::max(1u, opt_.max_funcs));
    m_.functions.resize(nfuncs);
    for (u32 i = 0; i < nfuncs; ++i) {
      signature(i);
    }
    for (u32 i = 0; i < nfuncs; ++i) {
      body(i);
    }
    m_.rebuild_symbols();
    return std::move(m_);
  }

private:
  using Type = ir::Type;
  using Op = ir::Opcode;

  struct Val {
    u32 def;
    Type type;
  };

  enum class Term : u8 { br, condbr, latch, ret };

  struct Skel {
    Term term = Term::br;
    std::vector<u32> succ;
  };

  struct Pending {
    u32 block;
    u32 slot;
  };

  u32 pick(u32 n) { return n == 0 ? 0 : static_cast<u32>(rng_() % n); }
  bool chance(u32 percent) { return pick(100) < percent; }

  void signature(u32 i) {
    ir::Function &f = m_.functions[i];
    f.name = "f" + std::to_string(i);
    u32 slots = 0;
    const u32 nparams = pick(5);
    for (u32 p = 0; p < nparams; ++p) {
      Type t = chance(20) ? Type::i128 : Type::i64;
      if (slots + ir::type_parts(t) > 6) {
        break;
      }
      slots += ir::type_parts(t);
      f.params.push_back({"a" + std::to_string(p), t});
    }
    const u32 r = pick(10);
    f.ret = r < 7 ? Type::i64 : r < 9 || i == 0 ? Type::i128 : Type::void_;
    f.stack_vars.push_back({8, 8});
    f.stack_vars.push_back({32, 8});
  }

  // ---- CFG skeleton --------------------------------------------------------

  u32 new_block(Term t) {
    Skel s;
    s.term = t;
    s.succ.assign(t == Term::ret ? 0 : t == Term::br ? 1 : 2, ~0u);
    skel_.push_back(std::move(s));
    return static_cast<u32>(skel_.size() - 1);
  }

  void connect(std::vector<Pending> &pending, u32 target) {
    for (auto [b, slot] : pending) {
      skel_[b].succ[slot] = target;
    }
    pending.clear();
  }

  void region(u32 depth, std::vector<Pending> &pending, std::vector<Pending> *breaks) {
    const u32 room = opt_.max_blocks > skel_.size() ? opt_.max_blocks - skel_.size() : 0;
    const u32 kind = room < 4 ? 0 : pick(depth > 2 ? 6 : 9);
    if (kind <= 1) {
      const u32 b = new_block(Term::br);
      connect(pending, b);
      pending.push_back({b, 0});
    } else if (kind <= 3) {
      const u32 c = new_block(Term::condbr);
      connect(pending, c);
      std::vector<Pending> t{{c, 0}};
      std::vector<Pending> e{{c, 1}};
      if (chance(80)) {
        region(depth + 1, t, breaks);
      }
      if (chance(50)) {
        region(depth + 1, e, breaks);
      }
      pending = t;
      pending.insert(pending.end(), e.begin(), e.end());
    } else if (kind == 4 && breaks) {
      const u32 c = new_block(Term::condbr);
      connect(pending, c);
      pending.push_back({c, 0});
      breaks->push_back({c, 1});
    } else if (kind == 4 || kind == 5) {
      const u32 c = new_block(Term::condbr);
      connect(pending, c);
      const u32 r = new_block(Term::ret);
      skel_[c].succ[1] = r;
      pending.push_back({c, 0});
    } else {
      const u32 h = new_block(Term::br);
      connect(pending, h);
      pending.push_back({h, 0});
      std::vector<Pending> my_breaks;
      const u32 n = 1 + pick(3);
      for (u32 i = 0; i < n; ++i) {
        region(depth + 1, pending, &my_breaks);
      }
      const u32 latch = new_block(Term::latch);
      connect(pending, latch);
      skel_[latch].succ[0] = h;
      loops_.push_back({h, latch});
      pending.push_back({latch, 1});
      pending.insert(pending.end(), my_breaks.begin(), my_breaks.end());
    }
  }

  void skeleton() {
    skel_.clear();
    loops_.clear();
    const u32 entry = new_block(Term::br);
    std::vector<Pending> pending{{entry, 0}};
    while (skel_.size() + 2 < opt_.max_blocks && (skel_.size() < 3 || chance(70))) {
      region(0, pending, nullptr);
    }
    const u32 exit = new_block(Term::ret);
    connect(pending, exit);
    if (opt_.irreducible) {
      for (auto [h, latch] : loops_) {
        if (latch <= h + 1 || !chance(70)) {
          continue;
        }
        // A block before the loop that ends in br becomes a condbr with an
        // extra edge into the loop body.
        std::vector<u32> cands;
        for (u32 b = 0; b < h; ++b) {
          if (skel_[b].term == Term::br) {
            cands.push_back(b);
          }
        }
        if (cands.empty()) {
          continue;
        }
        const u32 b = cands[pick(static_cast<u32>(cands.size()))];
        const u32 target = h + 1 + pick(latch - h);
        skel_[b].term = Term::condbr;
        skel_[b].succ.push_back(target);
        if (chance(50)) {
          std::swap(skel_[b].succ[0], skel_[b].succ[1]);
        }
      }
    }
  }

  // ---- Values ----------------------------------------------------------------

  u32 define(Type t, std::string prefix = "v") {
    const u32 id = static_cast<u32>(defs_.size());
    ir::DefInfo d;
    d.type = t;
    d.name = prefix + std::to_string(id);
    defs_.push_back(d);
    return id;
  }

  ir::Operand constant(Type t) {
    static constexpr u64 kSmall[] = {0, 1, 2, 3, 7, 8, 63, 64, 65, 255, 0x7fffffff};
    u64 lo;
    switch (pick(6)) {
    case 0: lo = ~u64{0}; break;
    case 1: lo = static_cast<u64>(static_cast<i64>(static_cast<i32>(rng_()))); break;
    case 2: lo = rng_(); break;
    case 3: lo = u64{1} << pick(64); break;
    default: lo = kSmall[pick(std::size(kSmall))];
    }
    u64 hi = 0;
    if (t == Type::i128) {
      hi = chance(50) ? 0 : chance(50) ? ~u64{0} : rng_();
    }
    return ir::Operand::constant(lo, hi);
  }

  ir::Operand operand(const std::vector<Val> &pool, Type t, u32 const_percent = 25) {
    if (!chance(const_percent)) {
      std::vector<u32> match;
      for (u32 i = 0; i < pool.size(); ++i) {
        if (pool[i].type == t) {
          match.push_back(i);
        }
      }
      if (!match.empty()) {
        // Favour recent values but reach back regularly.
        const u32 n = static_cast<u32>(match.size());
        const u32 k = chance(60) ? n - 1 - pick(std::min(n, 4u)) : pick(n);
        return ir::Operand::value(pool[match[k]].def);
      }
    }
    return constant(t);
  }

  // Addresses never enter the pool: the interpreter's are opaque.
  Val emit(ir::Block &blk, Op op, Type t, std::vector<ir::Operand> ops,
           std::vector<Val> &pool) {
    ir::Inst inst;
    inst.op = op;
    inst.type = t;
    inst.ops = std::move(ops);
    inst.def = define(t);
    blk.insts.push_back(inst);
    if (t != Type::void_ && op != Op::alloca_ref && op != Op::addr) {
      pool.push_back({inst.def, t});
    }
    return {inst.def, t};
  }

  void random_inst(u32 fi, ir::Block &blk, std::vector<Val> &pool) {
    static constexpr Op kBin[] = {Op::add, Op::sub, Op::mul, Op::and_, Op::or_,
                                  Op::xor_, Op::shl, Op::shr, Op::cmp_eq,
                                  Op::cmp_ne, Op::cmp_ult, Op::cmp_slt};
    const u32 k = pick(100);
    if (k < 55) {
      const Op op = kBin[pick(std::size(kBin))];
      emit(blk, op, Type::i64, {operand(pool, Type::i64), operand(pool, Type::i64)},
           pool);
    } else if (k < 59) {
      const Op op = chance(50) ? Op::udiv : Op::urem;
      emit(blk, op, Type::i64, {operand(pool, Type::i64), operand(pool, Type::i64)},
           pool);
    } else if (k < 65) {
      emit(blk, Op::zext128, Type::i128, {operand(pool, Type::i64)}, pool);
    } else if (k < 70) {
      emit(blk, Op::trunc, Type::i64, {operand(pool, Type::i128)}, pool);
    } else if (k < 76) {
      emit(blk, Op::add128, Type::i128,
           {operand(pool, Type::i128), operand(pool, Type::i128)}, pool);
    } else if (k < 90) {
      // Memory through the 4-word array; indices are masked in-bounds.
      ir::Operand index = ir::Operand::constant(pick(4));
      i64 disp = 0;
      if (chance(60)) {
        const Val m = emit(blk, Op::and_, Type::i64,
                           {operand(pool, Type::i64, 10), ir::Operand::constant(3)}, pool);
        index = ir::Operand::value(m.def);
      } else if (chance(50)) {
        disp = 8 * static_cast<i64>(pick(4));
        index = ir::Operand::constant(0);
      }
      const Val a = emit(blk, Op::addr, Type::i64,
                         {ir::Operand::value(mem_), index, ir::Operand::constant(8),
                          ir::Operand::constant(static_cast<u64>(disp))},
                         pool);
      if (chance(50)) {
        emit(blk, Op::load, Type::i64, {ir::Operand::value(a.def)}, pool);
      } else {
        emit(blk, Op::store, Type::void_,
             {ir::Operand::value(a.def), operand(pool, Type::i64)}, pool);
      }
    } else if (k < 95 && fi + 1 < m_.functions.size()) {
      const u32 callee = fi + 1 + pick(static_cast<u32>(m_.functions.size()) - fi - 1);
      const auto &cf = m_.functions[callee];
      ir::Inst inst;
      inst.op = Op::call;
      inst.callee = callee;
      inst.type = cf.ret;
      for (const auto &p : cf.params) {
        inst.ops.push_back(operand(pool, p.type));
      }
      inst.def = define(cf.ret);
      blk.insts.push_back(inst);
      if (cf.ret != Type::void_) {
        pool.push_back({inst.def, cf.ret});
      }
    } else {
      const Op op = kBin[pick(6)];
      emit(blk, op, Type::i64, {operand(pool, Type::i64, 0), operand(pool, Type::i64, 0)},
           pool);
    }
  }

  void body(u32 fi) {
    ir::Function &f = m_.functions[fi];
    defs_.clear();
    skeleton();
    const u32 n = static_cast<u32>(skel_.size());
    f.blocks.assign(n, {});
    for (u32 b = 0; b < n; ++b) {
      f.blocks[b].label = b == 0 ? "entry" : "b" + std::to_string(b);
      ir::Inst term;
      term.op = skel_[b].term == Term::ret ? Op::ret
                : skel_[b].term == Term::br ? Op::br
                                            : Op::condbr;
      term.targets = skel_[b].succ;
      f.blocks[b].insts.push_back(term);
    }
    for (const auto &p : f.params) {
      define(p.type, "a");
      defs_.back().name = p.name;
    }
    const ir::DomTree dom(f);
    const auto preds = ir::predecessors(f);
    std::vector<std::vector<Val>> pool_end(n);
    std::vector<Val> params;
    for (u32 p = 0; p < f.params.size(); ++p) {
      params.push_back({p, f.params[p].type});
    }
    for (u32 b : dom.rpo()) {
      std::vector<Val> pool = b == 0 ? params : pool_end[dom.idom(b)];
      ir::Block &blk = f.blocks[b];
      ir::Inst term = blk.insts.back();
      blk.insts.clear();
      if (b == 0) {
        fuel_ = emit(blk, Op::alloca_ref, Type::i64, {}, pool).def;
        blk.insts.back().stack_var = 0;
        emit(blk, Op::store, Type::void_,
             {ir::Operand::value(fuel_), ir::Operand::constant(1 + pick(opt_.max_fuel))},
             pool);
        mem_ = emit(blk, Op::alloca_ref, Type::i64, {}, pool).def;
        blk.insts.back().stack_var = 1;
      } else {
        const u32 nphis = preds[b].size() > 1 ? pick(4) : chance(15) ? 1 : 0;
        for (u32 i = 0; i < nphis; ++i) {
          ir::Phi phi;
          phi.type = chance(20) ? Type::i128 : Type::i64;
          phi.def = define(phi.type, "p");
          blk.phis.push_back(phi);
          pool.push_back({phi.def, phi.type});
        }
      }
      u32 count = pick(opt_.max_insts + 1);
      if (chance(8)) {
        count += 20 + pick(12);
      }
      for (u32 i = 0; i < count; ++i) {
        random_inst(fi, blk, pool);
      }
      switch (skel_[b].term) {
      case Term::br: break;
      case Term::ret:
        if (f.ret != Type::void_) {
          term.ops.push_back(operand(pool, f.ret, 15));
        }
        break;
      case Term::condbr:
        if (chance(65)) {
          static constexpr Op kCmp[] = {Op::cmp_eq, Op::cmp_ne, Op::cmp_ult, Op::cmp_slt};
          const Val c = emit(blk, kCmp[pick(4)], Type::i64,
                             {operand(pool, Type::i64, 10), operand(pool, Type::i64)},
                             pool);
          term.ops.push_back(ir::Operand::value(c.def));
        } else {
          term.ops.push_back(operand(pool, Type::i64, 5));
        }
        break;
      case Term::latch: {
        const Val l = emit(blk, Op::load, Type::i64, {ir::Operand::value(fuel_)}, pool);
        const Val d = emit(blk, Op::sub, Type::i64,
                           {ir::Operand::value(l.def), ir::Operand::constant(1)}, pool);
        emit(blk, Op::store, Type::void_,
             {ir::Operand::value(fuel_), ir::Operand::value(d.def)}, pool);
        const Val c = emit(blk, Op::cmp_slt, Type::i64,
                           {ir::Operand::constant(0), ir::Operand::value(d.def)}, pool);
        term.ops.push_back(ir::Operand::value(c.def));
        break;
      }
      }
      term.def = define(Type::void_);
      blk.insts.push_back(term);
      pool_end[b] = std::move(pool);
    }
    for (u32 b = 0; b < n; ++b) {
      for (auto &phi : f.blocks[b].phis) {
        for (u32 p : preds[b]) {
          phi.incoming.push_back({p, operand(pool_end[p], phi.type, 20)});
        }
      }
    }
    f.defs = std::move(defs_);
    f.renumber();
    for (u32 d = static_cast<u32>(f.params.size()); d < f.defs.size(); ++d) {
      auto &info = f.defs[d];
      info.name = (info.kind == ir::DefInfo::Kind::phi ? "p" : "v") + std::to_string(d);
    }
  }

  std::mt19937_64 rng_;
  GenOptions opt_;
  ir::Module m_;
  std::vector<Skel> skel_;
  std::vector<std::pair<u32, u32>> loops_;
  std::vector<ir::DefInfo> defs_;
  u32 fuel_ = 0;
  u32 mem_ = 0;
};

} // namespace detail

inline ir::Module generate(u64 seed, const GenOptions &opt = {}) {
  return detail::Generator(seed, opt).run();
}

// ---- Minimizer ---------------------------------------------------------------

namespace detail {

inline ir::Operand zero_of(ir::Type) { return ir::Operand::constant(0, 0); }

inline void replace_uses(ir::Function &f, u32 def, const ir::Operand &with) {
  for (auto &blk : f.blocks) {
    for (auto &phi : blk.phis) {
      for (auto &in : phi.incoming) {
        if (in.value.is_value() && in.value.def == def) {
          in.value = with;
        }
      }
    }
    for (auto &inst : blk.insts) {
      for (auto &op : inst.ops) {
        if (op.is_value() && op.def == def) {
          op = with;
        }
      }
    }
  }
}

/// Addresses stay opaque: a reduction must not turn one into a constant.
inline bool is_address(const ir::Inst &inst) {
  return inst.op == ir::Opcode::alloca_ref || inst.op == ir::Opcode::addr;
}

inline bool has_uses(const ir::Function &f, u32 def) {
  for (const auto &blk : f.blocks) {
    for (const auto &phi : blk.phis) {
      for (const auto &in : phi.incoming) {
        if (in.value.is_value() && in.value.def == def) {
          return true;
        }
      }
    }
    for (const auto &inst : blk.insts) {
      for (const auto &op : inst.ops) {
        if (op.is_value() && op.def == def) {
          return true;
        }
      }
    }
  }
  return false;
}

/// Drops blocks unreachable from the entry and the phi entries they fed.
inline void prune_unreachable(ir::Function &f) {
  const ir::DomTree dom(f);
  std::vector<u32> remap(f.blocks.size(), ~0u);
  std::vector<ir::Block> kept;
  for (u32 b = 0; b < f.blocks.size(); ++b) {
    if (dom.reachable(b)) {
      remap[b] = static_cast<u32>(kept.size());
      kept.push_back(std::move(f.blocks[b]));
    }
  }
  for (auto &blk : kept) {
    for (auto &phi : blk.phis) {
      std::erase_if(phi.incoming, [&](const ir::PhiIncoming &in) {
        return remap[in.block] == ~0u;
      });
      for (auto &in : phi.incoming) {
        in.block = remap[in.block];
      }
    }
    for (auto &t : blk.insts.back().targets) {
      t = remap[t];
    }
  }
  f.blocks = std::move(kept);
}

} // namespace detail

/// Greedy test-case reduction. `still_fails(module, entry)` is called on
/// valid candidates only; the result is the smallest module found that still
/// fails. Function `entry` is never dropped; `entry` is updated to its index
/// in the result.
inline ir::Module minimize(ir::Module m,
                           const std::function<bool(const ir::Module &, u32)> &still_fails,
                           u32 &entry, u32 max_rounds = 50) {
  u32 cand_entry = entry;
  const auto try_accept = [&](ir::Module &cand) {
    cand.rebuild_symbols();
    if (!ir::validate(cand).empty() || !still_fails(cand, cand_entry)) {
      cand_entry = entry;
      return false;
    }
    m = std::move(cand);
    entry = cand_entry;
    return true;
  };
  for (u32 round = 0; round < max_rounds; ++round) {
    bool progress = false;
    // Drop uncalled functions other than the entry.
    for (u32 fi = static_cast<u32>(m.functions.size()); fi-- > 0;) {
      if (fi == entry) {
        continue;
      }
      bool called = false;
      for (const auto &f : m.functions) {
        for (const auto &blk : f.blocks) {
          for (const auto &inst : blk.insts) {
            called |= inst.op == ir::Opcode::call && inst.callee == fi;
          }
        }
      }
      if (called) {
        continue;
      }
      ir::Module cand = m;
      cand.functions.erase(cand.functions.begin() + fi);
      for (auto &f : cand.functions) {
        for (auto &blk : f.blocks) {
          for (auto &inst : blk.insts) {
            if (inst.op == ir::Opcode::call && inst.callee > fi) {
              --inst.callee;
            }
          }
        }
      }
      cand_entry = entry - (fi < entry ? 1 : 0);
      progress |= try_accept(cand);
    }
    for (u32 fi = 0; fi < m.functions.size(); ++fi) {
      // Fold conditional branches to one side.
      for (u32 b = 0; b < m.functions[fi].blocks.size(); ++b) {
        for (u32 side = 0; side < 2; ++side) {
          const auto &term = m.functions[fi].blocks[b].insts.back();
          if (term.op != ir::Opcode::condbr) {
            break;
          }
          ir::Module cand = m;
          ir::Function &f = cand.functions[fi];
          ir::Inst &t = f.blocks[b].insts.back();
          const u32 keep = t.targets[side];
          const u32 drop = t.targets[1 - side];
          t.op = ir::Opcode::br;
          t.ops.clear();
          t.targets = {keep};
          if (drop != keep) {
            for (auto &phi : f.blocks[drop].phis) {
              std::erase_if(phi.incoming,
                            [&](const ir::PhiIncoming &in) { return in.block == b; });
            }
          }
          detail::prune_unreachable(f);
          f.renumber();
          if (try_accept(cand)) {
            progress = true;
            break;
          }
        }
      }
      // Delete instructions, replacing their results with zero.
      for (u32 b = 0; b < m.functions[fi].blocks.size(); ++b) {
        for (u32 i = 0; i + 1 < m.functions[fi].blocks[b].insts.size();) {
          ir::Module cand = m;
          ir::Function &f = cand.functions[fi];
          const ir::Inst inst = f.blocks[b].insts[i];
          if (detail::is_address(inst) && detail::has_uses(f, inst.def)) {
            ++i;
            continue;
          }
          detail::replace_uses(f, inst.def, detail::zero_of(inst.type));
          f.blocks[b].insts.erase(f.blocks[b].insts.begin() + i);
          f.renumber();
          if (try_accept(cand)) {
            progress = true;
          } else {
            ++i;
          }
        }
        for (u32 i = 0; i < m.functions[fi].blocks[b].phis.size();) {
          ir::Module cand = m;
          ir::Function &f = cand.functions[fi];
          const ir::Phi phi = f.blocks[b].phis[i];
          detail::replace_uses(f, phi.def, detail::zero_of(phi.type));
          f.blocks[b].phis.erase(f.blocks[b].phis.begin() + i);
          f.renumber();
          if (try_accept(cand)) {
            progress = true;
          } else {
            ++i;
          }
        }
      }
      // Replace remaining value operands with zero.
      for (u32 b = 0; b < m.functions[fi].blocks.size(); ++b) {
        for (u32 i = 0; i < m.functions[fi].blocks[b].insts.size(); ++i) {
          for (u32 o = 0; o < m.functions[fi].blocks[b].insts[i].ops.size(); ++o) {
            const auto &op = m.functions[fi].blocks[b].insts[i].ops[o];
            const ir::Opcode opc = m.functions[fi].blocks[b].insts[i].op;
            const bool address_slot = opc == ir::Opcode::addr ||
                                      ((opc == ir::Opcode::load || opc == ir::Opcode::store) &&
                                       o == 0);
            if (!op.is_value() || address_slot) {
              continue;
            }
            ir::Module cand = m;
            cand.functions[fi].blocks[b].insts[i].ops[o] = ir::Operand::constant(0, 0);
            progress |= try_accept(cand);
          }
        }
      }
    }
    if (!progress) {
      break;
    }
  }
  return m;
}

/// Number of phis and instructions, the minimizer's size measure.
inline u32 module_size(const ir::Module &m) {
  u32 n = 0;
  for (const auto &f : m.functions) {
    for (const auto &blk : f.blocks) {
      n += static_cast<u32>(blk.phis.size() + blk.insts.size());
    }
  }
  return n;
}

} // namespace tpdemini::seed
