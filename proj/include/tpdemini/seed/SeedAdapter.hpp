// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>
#include <span>
#include <vector>

#include "tpdemini/adapter/IRAdapter.hpp"
#include "tpdemini/ir/Ir.hpp"

namespace tpdemini::seed {

using adapter::BlockRef;
using adapter::FuncRef;
using adapter::ValueRef;

/// Exposes a seed IR module through the adapter contract. Value numbers are
/// the function's def ids; constants get handles with the top bit set.
class SeedAdapter {
public:
  static constexpr ValueRef kConstBit = 0x8000'0000u;

  explicit SeedAdapter(const ir::Module &m) : mod_(&m) {
    func_ids_.resize(m.functions.size());
    std::iota(func_ids_.begin(), func_ids_.end(), 0u);
  }

  const ir::Module &module() const { return *mod_; }
  const ir::Function &func() const {
    check_prepared();
    return mod_->functions[cur_];
  }

  std::span<const FuncRef> funcs() const { return func_ids_; }
  std::string_view func_name(FuncRef f) const { return mod_->functions[f].name; }
  adapter::Linkage func_linkage(FuncRef) const { return adapter::Linkage::external; }
  bool func_is_definition(FuncRef f) const { return !mod_->functions[f].blocks.empty(); }

  void prepare(FuncRef f) {
    cur_ = f;
    prepared_ = true;
    const ir::Function &fn = mod_->functions[f];
    aux_.assign(fn.blocks.size(), 0);
    blocks_.resize(fn.blocks.size());
    std::iota(blocks_.begin(), blocks_.end(), 0u);
    args_.resize(fn.params.size());
    std::iota(args_.begin(), args_.end(), 0u);
    stack_vars_.clear();
    for (const auto &sv : fn.stack_vars) {
      stack_vars_.push_back({sv.size, sv.align});
    }
    consts_.clear();
    operands_.assign(fn.defs.size(), {});
    phi_blocks_.assign(fn.defs.size(), {});
    phis_.assign(fn.blocks.size(), {});
    insts_.assign(fn.blocks.size(), {});
    for (u32 b = 0; b < fn.blocks.size(); ++b) {
      const auto &blk = fn.blocks[b];
      for (const auto &phi : blk.phis) {
        phis_[b].push_back(phi.def);
        for (const auto &in : phi.incoming) {
          operands_[phi.def].push_back(handle(in.value, phi.type));
          phi_blocks_[phi.def].push_back(in.block);
        }
      }
      for (const auto &inst : blk.insts) {
        insts_[b].push_back(inst.def);
        for (u32 k = 0; k < inst.ops.size(); ++k) {
          operands_[inst.def].push_back(
              handle(inst.ops[k], ir::operand_type(*mod_, fn, inst, k)));
        }
      }
    }
  }

  void finalize(FuncRef) { prepared_ = false; }

  FuncRef cur_func() const { return cur_; }
  std::span<const ValueRef> cur_args() const {
    check_prepared();
    return args_;
  }
  std::span<const adapter::StackVarInfo> cur_stack_vars() const {
    check_prepared();
    return stack_vars_;
  }
  std::span<const BlockRef> cur_blocks() const {
    check_prepared();
    return blocks_;
  }
  BlockRef cur_entry_block() const { return 0; }
  u32 value_count() const {
    check_prepared();
    return static_cast<u32>(operands_.size());
  }

  std::span<const BlockRef> block_succs(BlockRef b) const {
    check_prepared();
    return mod_->functions[cur_].blocks[b].successors();
  }
  std::span<const ValueRef> block_phis(BlockRef b) const {
    check_prepared();
    return phis_[b];
  }
  std::span<const ValueRef> block_insts(BlockRef b) const {
    check_prepared();
    return insts_[b];
  }
  u64 block_aux_get(BlockRef b) const {
    check_prepared();
    return aux_[b];
  }
  void block_aux_set(BlockRef b, u64 bits) {
    check_prepared();
    aux_[b] = bits;
  }
  std::string_view block_name(BlockRef b) const {
    return mod_->functions[cur_].blocks[b].label;
  }

  u32 val_local_idx(ValueRef v) const {
    TPDEMINI_ASSERT(!val_is_const(v), "constants have no value number");
    return v;
  }
  bool val_is_const(ValueRef v) const { return (v & kConstBit) != 0; }
  u64 val_const_part(ValueRef v, u32 part) const {
    TPDEMINI_ASSERT(val_is_const(v) && part < 2, "bad constant access");
    const auto &c = consts_[v & ~kConstBit];
    return part == 0 ? c.lo : c.hi;
  }

  adapter::ValueParts value_parts(ValueRef v) const {
    check_prepared();
    adapter::ValueParts p;
    p.count = ir::type_parts(val_is_const(v) ? consts_[v & ~kConstBit].type
                                             : mod_->functions[cur_].defs[v].type);
    for (u32 i = 0; i < p.count; ++i) {
      p.size[i] = 8;
      p.bank[i] = adapter::Bank::gp;
    }
    return p;
  }

  std::span<const ValueRef> inst_operands(ValueRef v) const {
    check_prepared();
    return operands_[v];
  }

  u32 phi_incoming_count(ValueRef v) const {
    return static_cast<u32>(phi_blocks_[v].size());
  }
  BlockRef phi_incoming_block(ValueRef v, u32 i) const { return phi_blocks_[v][i]; }
  ValueRef phi_incoming_val(ValueRef v, u32 i) const { return operands_[v][i]; }

private:
  struct Const {
    u64 lo;
    u64 hi;
    ir::Type type;
  };

  void check_prepared() const {
    if (!prepared_) {
      throw InternalError("adapter used outside prepare/finalize");
    }
  }

  ValueRef handle(const ir::Operand &op, ir::Type t) {
    if (op.is_value()) {
      return op.def;
    }
    consts_.push_back({op.lo, op.hi, t});
    return kConstBit | static_cast<u32>(consts_.size() - 1);
  }

  const ir::Module *mod_;
  std::vector<FuncRef> func_ids_;
  FuncRef cur_ = 0;
  bool prepared_ = false;
  std::vector<u64> aux_;
  std::vector<BlockRef> blocks_;
  std::vector<ValueRef> args_;
  std::vector<adapter::StackVarInfo> stack_vars_;
  std::vector<Const> consts_;
  std::vector<std::vector<ValueRef>> operands_;
  std::vector<std::vector<BlockRef>> phi_blocks_;
  std::vector<std::vector<ValueRef>> phis_;
  std::vector<std::vector<ValueRef>> insts_;
};

static_assert(adapter::IRAdapter<SeedAdapter>);

} // namespace tpdemini::seed
