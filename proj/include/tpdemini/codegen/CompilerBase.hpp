// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "tpdemini/adapter/IRAdapter.hpp"
#include "tpdemini/analysis/Analyzer.hpp"
#include "tpdemini/codegen/Assignment.hpp"
#include "tpdemini/codegen/ParallelCopy.hpp"
#include "tpdemini/codegen/RegisterFile.hpp"
#include "tpdemini/codegen/SessionEvents.hpp"

namespace tpdemini::codegen {

using adapter::BlockRef;
using adapter::ValueRef;

struct CompileOptions {
  /// Encoding candidates: immediates and address folding.
  bool fold = true;
  /// Pin loop-carried values of innermost loops to callee-saved registers.
  bool fixed_regs = true;
  bool record_events = false;
  /// Keep a copy of each function's bytes from just before frame finalize.
  bool snapshot_patches = false;
  /// Test hook: evictions forget to store dirty values.
  bool break_eviction = false;
};

struct FunctionStats {
  u64 insts = 0;
  u64 code_bytes = 0;
  u64 spills = 0;
  u64 reloads = 0;
  u64 evictions = 0;
  u64 fixed_values = 0;
  u64 compile_ns = 0;
  u32 frame_size = 0;
};

/// Target-independent single-pass code generation over an IR adapter.
/// `Derived` selects instructions and emits target code; `Target` supplies
/// the register file shape and calling convention.
template <adapter::IRAdapter A, typename Derived, typename Target>
class CompilerBase {
public:
  static constexpr u32 N = Target::kNumRegs;
  static constexpr RegMask kAllRegs = RegisterFile<N>::kAll;
  using Cond = typename Target::Cond;
  using Label = typename Target::Label;
  using Regs = RegisterFile<N>;
  using Kind = typename Regs::Kind;

  /// An owned temporary register.
  class ScratchReg {
  public:
    ScratchReg() = default;
    ScratchReg(CompilerBase *c, u8 r) : c_(c), reg_(r) {}
    ScratchReg(ScratchReg &&o) noexcept : c_(o.c_), reg_(o.reg_) { o.c_ = nullptr; }
    ScratchReg &operator=(ScratchReg &&o) noexcept {
      if (this != &o) {
        reset();
        c_ = o.c_;
        reg_ = o.reg_;
        o.c_ = nullptr;
      }
      return *this;
    }
    ScratchReg(const ScratchReg &) = delete;
    ScratchReg &operator=(const ScratchReg &) = delete;
    ~ScratchReg() { reset(); }

    bool valid() const { return c_ != nullptr; }
    u8 reg() const {
      TPDEMINI_ASSERT(valid(), "empty scratch register");
      return reg_;
    }
    void reset() {
      if (c_) {
        c_->release_scratch(reg_);
        c_ = nullptr;
      }
    }
    u8 release_ownership() {
      TPDEMINI_ASSERT(valid(), "empty scratch register");
      c_ = nullptr;
      return reg_;
    }

  private:
    CompilerBase *c_ = nullptr;
    u8 reg_ = 0;
  };

  /// One part of an operand. Value parts stay locked while the handle
  /// lives; constants carry their bits.
  class ValuePartRef {
  public:
    ValuePartRef() = default;
    ValuePartRef(CompilerBase *c, u32 v, u8 part) : c_(c), value_(v), part_(part) {
      c_->lock(v, part);
    }
    ValuePartRef(CompilerBase *c, u64 bits) : c_(c), const_(bits) {}
    ValuePartRef(ValuePartRef &&o) noexcept { take(o); }
    ValuePartRef &operator=(ValuePartRef &&o) noexcept {
      if (this != &o) {
        reset();
        take(o);
      }
      return *this;
    }
    ValuePartRef(const ValuePartRef &) = delete;
    ValuePartRef &operator=(const ValuePartRef &) = delete;
    ~ValuePartRef() { reset(); }

    bool valid() const { return c_ != nullptr; }
    bool is_const() const { return value_ == kNoValue; }
    u64 const_value() const { return const_; }
    u32 value() const { return value_; }
    u8 part() const { return part_; }

    /// Register currently holding this part, if any.
    std::optional<u8> reg() const {
      if (copy_ >= 0) {
        return static_cast<u8>(copy_);
      }
      if (is_const()) {
        return std::nullopt;
      }
      const u16 w = c_->assignments_.part(value_, part_);
      return part::reg_valid(w) ? std::optional<u8>(part::reg(w)) : std::nullopt;
    }

    void reset() {
      if (!c_) {
        return;
      }
      if (copy_ >= 0) {
        c_->release_scratch(static_cast<u8>(copy_));
      }
      if (!is_const()) {
        c_->unlock(value_, part_);
      }
      c_ = nullptr;
      copy_ = -1;
    }

  private:
    friend class CompilerBase;
    void take(ValuePartRef &o) {
      c_ = o.c_;
      value_ = o.value_;
      part_ = o.part_;
      const_ = o.const_;
      copy_ = o.copy_;
      o.c_ = nullptr;
      o.copy_ = -1;
    }

    CompilerBase *c_ = nullptr;
    u32 value_ = kNoValue;
    u8 part_ = 0;
    u64 const_ = 0;
    int copy_ = -1;
  };

  explicit CompilerBase(A &adapter, CompileOptions opts = {})
      : adapter_(adapter), opts_(opts) {}

  A &adapter() { return adapter_; }
  const A &adapter() const { return adapter_; }
  const analysis::Analyzer<A> &analyzer() const { return an_; }
  const CompileOptions &options() const { return opts_; }
  const FunctionStats &stats() const { return stats_; }
  const std::vector<SessionEvent> &events() const { return events_; }
  const AssignmentTable &assignments() const { return assignments_; }
  const Regs &regs() const { return regs_; }
  u32 cur_block() const { return cur_block_; }
  ValueRef cur_inst() const { return cur_inst_; }

  /// Runs the whole pipeline for one function: analysis, prologue, every
  /// block in layout order, frame finalization.
  void compile_function(adapter::FuncRef f) {
    const auto t0 = std::chrono::steady_clock::now();
    stats_ = FunctionStats{};
    adapter_.prepare(f);
    try {
      an_.run(adapter_);
      derived().reset_code();
      setup();
      derived().begin_function();
      init_params();
      derived().init_stack_vars();
      for (u32 i = 0; i < an_.block_count(); ++i) {
        compile_block(i);
      }
      const u32 nclob = static_cast<u32>(std::popcount(
          static_cast<RegMask>(regs_.clobbered() & Target::kCalleeSaved)));
      const u32 frame = (watermark_ + 8 * nclob + 15) & ~15u;
      std::vector<std::pair<u8, i32>> saves;
      u32 k = 0;
      for (u8 r = 0; r < N; ++r) {
        if ((Target::kCalleeSaved >> r & 1) && (regs_.clobbered() >> r & 1)) {
          saves.emplace_back(r, -static_cast<i32>(watermark_ + 8 * (++k)));
        }
      }
      stats_.frame_size = frame;
      derived().end_function(frame, saves);
    } catch (...) {
      adapter_.finalize(f);
      throw;
    }
    adapter_.finalize(f);
    stats_.compile_ns = static_cast<u64>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now() - t0)
            .count());
  }

  // ---- operands ------------------------------------------------------------

  ValuePartRef val_ref(ValueRef v, u32 part) {
    if (adapter_.val_is_const(v)) {
      return ValuePartRef(this, adapter_.val_const_part(v, part));
    }
    const u32 idx = adapter_.val_local_idx(v);
    const Assignment a = assignments_.get(idx);
    TPDEMINI_ASSERT(a.live() && !a.pending_phi(), "use of a value that is not live");
    TPDEMINI_ASSERT(part < a.part_count, "part index out of range");
    return ValuePartRef(this, idx, static_cast<u8>(part));
  }

  /// Puts the part into a register from `feasible` and returns it. The
  /// handle keeps it there until released.
  u8 load_to_reg(ValuePartRef &h, RegMask feasible = kAllRegs) {
    if (h.copy_ >= 0) {
      if (feasible >> h.copy_ & 1) {
        return static_cast<u8>(h.copy_);
      }
      const u8 n = pick_reg(feasible);
      hold_scratch(n);
      derived().emit_move(Loc::r(n), Loc::r(static_cast<u8>(h.copy_)));
      release_scratch(static_cast<u8>(h.copy_));
      h.copy_ = n;
      return n;
    }
    if (h.is_const()) {
      const u8 n = pick_reg(feasible);
      hold_scratch(n);
      derived().emit_move(Loc::r(n), Loc::imm(h.const_));
      h.copy_ = n;
      return n;
    }
    const u32 v = h.value_;
    const u8 p = h.part_;
    const u16 w = assignments_.part(v, p);
    if (part::reg_valid(w)) {
      const u8 r = part::reg(w);
      if (feasible >> r & 1) {
        return r;
      }
      const u8 n = pick_reg(feasible & ~(RegMask{1} << r));
      if (part::fixed(w)) {
        hold_scratch(n);
        derived().emit_move(Loc::r(n), Loc::r(r));
        h.copy_ = n;
        return n;
      }
      derived().emit_move(Loc::r(n), Loc::r(r));
      drop_reg(r);
      place(v, p, n);
      return n;
    }
    const u8 n = pick_reg(feasible);
    reload(v, p, n);
    return n;
  }

  ScratchReg alloc_scratch(RegMask feasible = kAllRegs) {
    const u8 r = pick_reg(feasible);
    hold_scratch(r);
    return ScratchReg(this, r);
  }

  /// True if the current instruction holds the remaining uses of `v` and
  /// `v` is not live past it.
  bool is_last_use(u32 v) const {
    const Assignment a = assignments_.get(v);
    return a.live() && a.remaining_uses == uses_in_cur_inst(v) &&
           a.last == cur_block_ && !a.end_of_block();
  }

  /// Moves ownership of a last-use register to a scratch. The value keeps
  /// its other locations. Returns an empty scratch when not allowed.
  ScratchReg try_take_over(ValuePartRef &h) {
    if (h.is_const() || h.copy_ >= 0 || !is_last_use(h.value_)) {
      return {};
    }
    const u16 w = assignments_.part(h.value_, h.part_);
    if (!part::reg_valid(w) || part::fixed(w) || part::locks(w) != 1) {
      return {};
    }
    const u8 r = part::reg(w);
    assignments_.set_part(h.value_, h.part_, part::without_reg(w));
    drop_reg(r);
    hold_scratch(r);
    return ScratchReg(this, r);
  }

  /// Makes register `r` free, moving a locked occupant elsewhere (its
  /// assignment follows the move). Registers in `avoid` are not used as
  /// the new home.
  void vacate(u8 r, RegMask avoid) {
    const auto &s = regs_.at(r);
    switch (s.kind) {
    case Kind::free: return;
    case Kind::scratch:
    case Kind::fixed: internal_fault("cannot vacate a reserved register", __FILE__, __LINE__);
    case Kind::value: break;
    }
    const u32 v = s.value;
    const u8 p = s.part;
    if (part::locks(assignments_.part(v, p)) == 0) {
      evict(r);
      return;
    }
    const u8 n = pick_reg(kAllRegs & ~avoid & ~(RegMask{1} << r));
    derived().emit_move(Loc::r(n), Loc::r(r));
    drop_reg(r);
    place(v, p, n);
  }

  /// Binds the result part to the register in `s`.
  void set_value(ValueRef v, u32 p, ScratchReg &&s) {
    const u32 idx = adapter_.val_local_idx(v);
    if (!assignments_.get(idx).live()) {
      define(idx, v);
    }
    const u8 r = s.release_ownership();
    if (const auto f = fixed_reg_for(idx, static_cast<u8>(p))) {
      if (*f != r) {
        derived().emit_move(Loc::r(*f), Loc::r(r));
      }
      drop_reg(r);
      regs_.hold_fixed(*f, idx, static_cast<u8>(p));
      event(EventKind::hold, *f, idx, static_cast<u8>(p), 0, "fixed");
      u16 w = part::with_reg(assignments_.part(idx, p), *f);
      assignments_.set_part(idx, p, part::set(w, part::kFixed, true));
      return;
    }
    drop_reg(r);
    place(idx, static_cast<u8>(p), r);
  }

  /// Defines `v` as fp + disp, materialized on demand.
  void set_recomputable(ValueRef v, i32 disp) {
    const u32 idx = adapter_.val_local_idx(v);
    define(idx, v);
    Assignment a = assignments_.get(idx);
    a.frame_off = disp;
    assignments_.put(idx, a);
    assignments_.set_part(idx, 0, part::set(assignments_.part(idx, 0), part::kRecomputable, true));
  }

  /// Where a part can be read from right now.
  Loc location(ValueRef v, u32 p) const {
    if (adapter_.val_is_const(v)) {
      return Loc::imm(adapter_.val_const_part(v, p));
    }
    return location_idx(adapter_.val_local_idx(v), p);
  }

  Loc location(const ValuePartRef &h) const {
    if (h.copy_ >= 0) {
      return Loc::r(static_cast<u8>(h.copy_));
    }
    if (h.is_const()) {
      return Loc::imm(h.const_);
    }
    return location_idx(h.value_, h.part_);
  }

  std::optional<i32> recompute_disp(ValueRef v) const {
    if (adapter_.val_is_const(v)) {
      return std::nullopt;
    }
    const u32 idx = adapter_.val_local_idx(v);
    const Assignment a = assignments_.get(idx);
    if (a.live() && part::recomputable(assignments_.part(idx, 0))) {
      return a.frame_off;
    }
    return std::nullopt;
  }

  i32 stack_var_offset(u32 i) const { return stack_var_off_[i]; }

  /// Operand uses of `inst` are consumed by a later instruction.
  void defer_operand_uses(ValueRef inst) { deferred_.push_back(inst); }
  /// Consumes the uses deferred for `inst` at the current instruction.
  void consume_operand_uses(ValueRef inst) {
    std::erase(deferred_, inst);
    extra_uses_.push_back(inst);
  }

  // ---- control flow --------------------------------------------------------

  void compile_br(BlockRef t) {
    const u32 ti = an_.block_index(adapter_, t);
    spill_before_branch({ti});
    emit_edge(ti);
    if (ti != cur_block_ + 1) {
      derived().emit_jump(block_labels_[ti]);
    }
    consume_phi_uses(t);
  }

  /// `cmp` emits the flag-setting compare and returns the branch condition.
  template <typename Cmp>
  void compile_condbr(Cmp &&cmp, BlockRef t, BlockRef f) {
    if (t == f) {
      compile_br(t);
      return;
    }
    u32 ti = an_.block_index(adapter_, t);
    u32 fi = an_.block_index(adapter_, f);
    spill_before_branch({ti, fi});
    Cond c = cmp();
    bool mt = !edge_moves(ti).empty();
    bool mf = !edge_moves(fi).empty();
    if (ti == cur_block_ + 1 && !mt) {
      std::swap(ti, fi);
      std::swap(mt, mf);
      c = invert_cond(c);
    }
    if (mt) {
      const Label skip = derived().new_label("");
      derived().emit_cond_branch(invert_cond(c), skip);
      emit_edge(ti);
      derived().emit_jump(block_labels_[ti]);
      derived().bind_label(skip);
    } else {
      derived().emit_cond_branch(c, block_labels_[ti]);
    }
    emit_edge(fi);
    if (fi != cur_block_ + 1) {
      derived().emit_jump(block_labels_[fi]);
    }
    consume_phi_uses(t);
    consume_phi_uses(f);
  }

  /// Moves the return value into the return registers; the caller emits
  /// the epilogue.
  void move_return_value(std::optional<ValueRef> v) {
    if (!v) {
      return;
    }
    const auto parts = adapter_.value_parts(*v);
    std::vector<Move> moves;
    for (u32 p = 0; p < parts.count; ++p) {
      moves.push_back(Move{Loc::r(Target::kRetRegs[p]), location(*v, p)});
    }
    run_moves(std::move(moves), 0);
  }

  /// Calling convention around a call: caller-saved registers are emptied,
  /// arguments go to the argument registers, the result arrives in the
  /// return registers.
  template <typename EmitCall>
  void compile_call(const std::vector<ValueRef> &args, std::optional<ValueRef> result,
                    EmitCall &&emit_call) {
    std::vector<Move> moves;
    u32 slot = 0;
    for (ValueRef a : args) {
      const auto parts = adapter_.value_parts(a);
      for (u32 p = 0; p < parts.count; ++p) {
        if (slot >= Target::kArgRegs.size()) {
          throw CompileError(std::string(adapter_.func_name(adapter_.cur_func())), "",
                             "more than " + std::to_string(Target::kArgRegs.size()) +
                                 " argument registers needed");
        }
        moves.push_back(Move{Loc::r(Target::kArgRegs[slot++]), location(a, p)});
      }
    }
    const RegMask caller_saved = kAllRegs & ~Target::kCalleeSaved;
    for (u8 r = 0; r < N; ++r) {
      if (!(caller_saved >> r & 1)) {
        continue;
      }
      const auto &s = regs_.at(r);
      TPDEMINI_ASSERT(s.kind == Kind::free || s.kind == Kind::value,
                      "register reserved across a call");
      if (s.kind == Kind::value) {
        TPDEMINI_ASSERT(part::locks(assignments_.part(s.value, s.part)) == 0,
                        "locked value across a call");
        if (live_after_inst(s.value)) {
          ensure_stack(s.value, s.part, r);
        }
      }
    }
    RegMask arg_mask = 0;
    for (u32 i = 0; i < slot; ++i) {
      arg_mask |= RegMask{1} << Target::kArgRegs[i];
    }
    run_moves(std::move(moves), arg_mask);
    for (u8 r = 0; r < N; ++r) {
      if ((caller_saved >> r & 1) && regs_.at(r).kind == Kind::value) {
        const auto s = regs_.at(r);
        assignments_.set_part(s.value, s.part,
                              part::without_reg(assignments_.part(s.value, s.part)));
        drop_reg(r);
      }
    }
    emit_call();
    if (result) {
      const auto parts = adapter_.value_parts(*result);
      for (u32 p = 0; p < parts.count; ++p) {
        hold_scratch(Target::kRetRegs[p]);
      }
      for (u32 p = 0; p < parts.count; ++p) {
        set_value(*result, p, ScratchReg(this, Target::kRetRegs[p]));
      }
    }
  }

  u32 uses_in_cur_inst(u32 v) const {
    u32 n = 0;
    const auto count = [&](ValueRef inst) {
      for (ValueRef op : adapter_.inst_operands(inst)) {
        n += !adapter_.val_is_const(op) && adapter_.val_local_idx(op) == v;
      }
    };
    if (cur_inst_ != adapter::kInvalidValue) {
      count(cur_inst_);
    }
    for (ValueRef e : extra_uses_) {
      count(e);
    }
    return n;
  }

  /// Event hook for emitted instructions; `reads` lists source registers.
  void note_emit(std::string text, RegMask reads, u32 word, RegMask writes = 0) {
    if (opts_.record_events) {
      event(EventKind::emit, 0, kNoValue, 0, word, std::move(text), reads, writes);
    }
  }

  /// Number of block entries where a live value was away from its home.
  u64 misplaced_entries() const { return misplaced_; }

protected:
  Derived &derived() { return static_cast<Derived &>(*this); }

  /// Labels of the blocks, indexed by layout position.
  std::vector<Label> block_labels_;

private:
  struct FixedEntry {
    u32 value;
    u8 part;
    u8 reg;
  };

  static Cond invert_cond(Cond c) { return Target::invert(c); }

  void event(EventKind k, u8 reg, u32 v, u8 part, i64 arg, std::string text = {},
             RegMask mask = 0, RegMask writes = 0) {
    if (opts_.record_events) {
      events_.push_back(SessionEvent{k, reg, part, v, arg, mask, writes, std::move(text)});
    }
  }

  // ---- setup ---------------------------------------------------------------

  void setup() {
    const u32 nv = adapter_.value_count();
    vals_.assign(nv, adapter::kInvalidValue);
    std::vector<u8> parts(nv, 0);
    const auto note = [&](ValueRef v) {
      const u32 idx = adapter_.val_local_idx(v);
      vals_[idx] = v;
      parts[idx] = static_cast<u8>(adapter_.value_parts(v).count);
    };
    for (ValueRef v : adapter_.cur_args()) {
      note(v);
    }
    for (BlockRef b : an_.layout()) {
      for (ValueRef v : adapter_.block_phis(b)) {
        note(v);
      }
      for (ValueRef v : adapter_.block_insts(b)) {
        note(v);
      }
    }
    assignments_.reset(parts);
    regs_.reset();
    live_.clear();
    live_pos_.assign(nv, kNoValue);
    free_slots_.assign(4, {});
    watermark_ = 0;
    stack_var_off_.clear();
    for (const auto &sv : adapter_.cur_stack_vars()) {
      const u32 size = (sv.size + 7) & ~7u;
      const u32 align = std::max<u32>(sv.align, 8);
      watermark_ = (watermark_ + size + align - 1) / align * align;
      stack_var_off_.push_back(-static_cast<i32>(watermark_));
    }
    ending_.assign(an_.block_count(), {});
    for (u32 v = 0; v < nv; ++v) {
      const auto &r = an_.live(v);
      if (r.defined()) {
        ending_[r.last].push_back(v);
      }
    }
    const auto loops = an_.loops();
    has_child_.assign(loops.size(), false);
    for (u32 l = 1; l < loops.size(); ++l) {
      has_child_[loops[l].parent] = true;
    }
    plans_.assign(loops.size(), {});
    plan_done_.assign(loops.size(), false);
    active_loop_ = analysis::kNone;
    block_labels_.clear();
    for (BlockRef b : an_.layout()) {
      block_labels_.push_back(derived().new_label(std::string(adapter_.block_name(b))));
    }
    cur_block_ = 0;
    cur_inst_ = adapter::kInvalidValue;
    deferred_.clear();
    extra_uses_.clear();
    events_.clear();
    misplaced_ = 0;
    total_locks_ = 0;
  }

  void init_params() {
    u32 slot = 0;
    for (ValueRef v : adapter_.cur_args()) {
      const u32 idx = adapter_.val_local_idx(v);
      define(idx, v);
      const u32 n = assignments_.get(idx).part_count;
      for (u32 p = 0; p < n; ++p) {
        if (slot >= Target::kArgRegs.size()) {
          throw CompileError(std::string(adapter_.func_name(adapter_.cur_func())), "",
                             "more than " + std::to_string(Target::kArgRegs.size()) +
                                 " parameter registers needed");
        }
        place(idx, static_cast<u8>(p), Target::kArgRegs[slot++]);
      }
    }
    for (ValueRef v : adapter_.cur_args()) {
      maybe_free_dead(adapter_.val_local_idx(v));
    }
  }

  void define(u32 idx, ValueRef v) {
    const auto &r = an_.live(idx);
    TPDEMINI_ASSERT(r.defined(), "definition without live range");
    Assignment a = assignments_.get(idx);
    TPDEMINI_ASSERT(!a.live(), "value defined twice");
    a.frame_off = 0;
    a.remaining_uses = r.uses;
    a.last = r.last;
    a.flags = Assignment::kLive | (r.end_of_block ? Assignment::kEndOfBlock : 0);
    assignments_.put(idx, a);
    const auto parts = adapter_.value_parts(v);
    for (u32 p = 0; p < a.part_count; ++p) {
      assignments_.set_part(idx, p, part::with_size(0, parts.size[p]));
    }
    live_pos_[idx] = static_cast<u32>(live_.size());
    live_.push_back(idx);
  }

  // ---- blocks --------------------------------------------------------------

  bool carried(u32 i) const {
    if (i == 0) {
      return true;
    }
    if (an_.multi_pred(i) || !adapter_.block_phis(an_.layout()[i]).empty()) {
      return false;
    }
    for (u32 s : an_.successors(i - 1)) {
      if (s == i) {
        return true;
      }
    }
    return false;
  }

  void compile_block(u32 i) {
    cur_block_ = i;
    const BlockRef b = an_.layout()[i];
    event(EventKind::block, 0, kNoValue, 0, i, std::string(adapter_.block_name(b)));
    derived().bind_label(block_labels_[i]);
    const bool carry = carried(i);
    if (active_loop_ != analysis::kNone && !an_.loops()[active_loop_].contains(i)) {
      leave_loop(carry);
    }
    if (!carry) {
      reset_registers();
    }
    const u32 l = an_.block_loop(i);
    if (l != 0 && active_loop_ != l && !has_child_[l] && opts_.fixed_regs) {
      activate(l);
    }
    for (ValueRef p : adapter_.block_phis(b)) {
      const u32 idx = adapter_.val_local_idx(p);
      Assignment a = assignments_.get(idx);
      TPDEMINI_ASSERT(a.live() && a.pending_phi(), "phi without incoming edge code");
      a.flags &= static_cast<u8>(~Assignment::kPendingPhi);
      assignments_.put(idx, a);
      for (u32 k = 0; k < a.part_count; ++k) {
        u16 w = assignments_.part(idx, k);
        if (const auto f = fixed_reg_for(idx, static_cast<u8>(k))) {
          w = part::set(part::with_reg(w, *f), part::kFixed, true);
          regs_.hold_fixed(*f, idx, static_cast<u8>(k));
          event(EventKind::hold, *f, idx, static_cast<u8>(k), 0, "fixed");
        } else {
          w = part::set(w, part::kStackValid, true);
        }
        assignments_.set_part(idx, k, w);
      }
    }
    if (an_.multi_pred(i)) {
      u64 bad = 0;
      for (u32 v : live_) {
        const Assignment a = assignments_.get(v);
        if (a.pending_phi()) {
          continue;
        }
        for (u32 k = 0; k < a.part_count; ++k) {
          const u16 w = assignments_.part(v, k);
          const bool home = part::fixed(w) ? part::reg_valid(w)
                                           : (part::stack_valid(w) || part::recomputable(w)) &&
                                                 !part::reg_valid(w);
          bad += !home;
        }
      }
      misplaced_ += bad;
      event(EventKind::entry_check, 0, kNoValue, 0, static_cast<i64>(bad));
    }
    for (ValueRef inst : adapter_.block_insts(b)) {
      cur_inst_ = inst;
      ++stats_.insts;
      if (!derived().compile_inst(inst)) {
        throw CompileError(std::string(adapter_.func_name(adapter_.cur_func())),
                           derived().inst_text(inst), "unsupported instruction");
      }
      end_inst(inst);
    }
    cur_inst_ = adapter::kInvalidValue;
    for (u32 v : ending_[i]) {
      if (assignments_.get(v).live()) {
        free_value(v);
      }
    }
    for (u8 r = 0; r < N; ++r) {
      TPDEMINI_ASSERT(regs_.at(r).kind != Kind::scratch, "scratch register leaked");
    }
  }

  void end_inst(ValueRef inst) {
    TPDEMINI_ASSERT(total_locks_ == 0, "value lock outlives its instruction");
    const auto consume = [&](ValueRef in) {
      for (ValueRef op : adapter_.inst_operands(in)) {
        if (adapter_.val_is_const(op)) {
          continue;
        }
        if (derived().absorbed(op)) {
          continue;
        }
        const u32 v = adapter_.val_local_idx(op);
        Assignment a = assignments_.get(v);
        TPDEMINI_ASSERT(a.live() && a.remaining_uses > 0, "use count underflow");
        --a.remaining_uses;
        assignments_.put(v, a);
      }
    };
    const auto it = std::find(deferred_.begin(), deferred_.end(), inst);
    const bool deferred = it != deferred_.end();
    if (deferred) {
      deferred_.erase(it);
    } else {
      consume(inst);
    }
    for (ValueRef e : extra_uses_) {
      consume(e);
    }
    for (ValueRef op : adapter_.inst_operands(inst)) {
      if (!adapter_.val_is_const(op)) {
        maybe_free_dead(adapter_.val_local_idx(op));
      }
    }
    for (ValueRef e : extra_uses_) {
      for (ValueRef op : adapter_.inst_operands(e)) {
        if (!adapter_.val_is_const(op)) {
          maybe_free_dead(adapter_.val_local_idx(op));
        }
      }
    }
    extra_uses_.clear();
    const u32 idx = adapter_.val_local_idx(inst);
    if (assignments_.get(idx).live()) {
      maybe_free_dead(idx);
    }
    event(EventKind::inst_end, 0, idx, 0, total_locks_);
  }

  void maybe_free_dead(u32 v) {
    const Assignment a = assignments_.get(v);
    if (a.live() && a.remaining_uses == 0 && a.last == cur_block_ && !a.end_of_block()) {
      free_value(v);
    }
  }

  void reset_registers() {
    for (u8 r = 0; r < N; ++r) {
      const auto s = regs_.at(r);
      if (s.kind == Kind::value) {
        assignments_.set_part(s.value, s.part,
                              part::without_reg(assignments_.part(s.value, s.part)));
        drop_reg(r);
      }
    }
  }

  // ---- fixed registers -----------------------------------------------------

  const std::vector<FixedEntry> &plan(u32 l) {
    if (plan_done_[l]) {
      return plans_[l];
    }
    plan_done_[l] = true;
    auto &out = plans_[l];
    if (!opts_.fixed_regs || l == 0 || has_child_[l]) {
      return out;
    }
    std::vector<u8> avail;
    for (u8 r = 0; r < N; ++r) {
      if (Target::kCalleeSaved >> r & 1) {
        avail.push_back(r);
      }
    }
    // One callee-saved register stays available for scratch use.
    avail.pop_back();
    const auto &lp = an_.loops()[l];
    u32 next = 0;
    for (u32 v = 0; v < vals_.size() && next < avail.size(); ++v) {
      const auto &r = an_.live(v);
      if (!r.defined() || vals_[v] == adapter::kInvalidValue) {
        continue;
      }
      const u32 lo = std::max(r.first, lp.begin);
      const u32 hi = std::min(r.last, lp.end - 1);
      if (r.first > lp.end - 1 || r.last < lp.begin) {
        continue;
      }
      // Values confined to one block gain nothing; in a single-block loop the
      // ones crossing the back edge or coming from outside still do.
      if (hi <= lo && r.first >= lp.begin && !r.end_of_block) {
        continue;
      }
      const u32 n = assignments_.get(v).part_count;
      if (n == 0 || next + n > avail.size() || !derived().fixed_candidate(vals_[v])) {
        continue;
      }
      for (u32 p = 0; p < n; ++p) {
        out.push_back(FixedEntry{v, static_cast<u8>(p), avail[next++]});
      }
    }
    return out;
  }

  std::optional<u8> fixed_reg_for(u32 v, u8 p) const {
    if (active_loop_ == analysis::kNone) {
      return std::nullopt;
    }
    for (const auto &e : plans_[active_loop_]) {
      if (e.value == v && e.part == p) {
        return e.reg;
      }
    }
    return std::nullopt;
  }

  void activate(u32 l) {
    active_loop_ = l;
    for (const auto &e : plan(l)) {
      TPDEMINI_ASSERT(regs_.at(e.reg).kind == Kind::free, "fixed register not free");
      regs_.hold_fixed(e.reg, e.value, e.part);
      event(EventKind::hold, e.reg, e.value, e.part, 0, "fixed");
      ++stats_.fixed_values;
      const Assignment a = assignments_.get(e.value);
      if (a.live() && !a.pending_phi()) {
        u16 w = part::with_reg(assignments_.part(e.value, e.part), e.reg);
        assignments_.set_part(e.value, e.part, part::set(w, part::kFixed, true));
      }
    }
  }

  void leave_loop(bool carry) {
    for (const auto &e : plans_[active_loop_]) {
      const auto s = regs_.at(e.reg);
      if (s.kind != Kind::fixed || s.value != e.value || s.part != e.part) {
        continue;
      }
      const Assignment a = assignments_.get(e.value);
      u16 w = assignments_.part(e.value, e.part);
      const bool keep = carry && a.live() && part::reg_valid(w) && part::reg(w) == e.reg;
      w = part::set(w, part::kFixed, false);
      drop_reg(e.reg);
      if (keep) {
        // Every loop exit stores fixed values, so the slot stays valid.
        assignments_.set_part(e.value, e.part, w);
        place(e.value, e.part, e.reg);
      } else {
        assignments_.set_part(e.value, e.part, a.live() ? part::without_reg(w) : w);
      }
    }
    active_loop_ = analysis::kNone;
  }

  // ---- edges ---------------------------------------------------------------

  bool live_after_block(u32 v) const {
    const Assignment a = assignments_.get(v);
    return a.last > cur_block_ || (a.last == cur_block_ && a.end_of_block());
  }

  /// Conservative: uses by the current instruction still count.
  bool needed_later(u32 v) const {
    return live_after_block(v) || assignments_.get(v).remaining_uses > 0;
  }

  bool live_after_inst(u32 v) const {
    const Assignment a = assignments_.get(v);
    return live_after_block(v) || a.remaining_uses > uses_in_cur_inst(v);
  }

  void spill_before_branch(std::initializer_list<u32> succs) {
    bool needed = false;
    bool leaving = false;
    // Earliest non-carried successor ahead of this block; a back edge makes
    // every value live after the block count.
    u32 reach = ~0u;
    for (u32 s : succs) {
      if (s == cur_block_ + 1 && carried(s)) {
        continue;
      }
      needed = true;
      reach = std::min(reach, s <= cur_block_ ? 0u : s);
      leaving |= active_loop_ != analysis::kNone && !an_.loops()[active_loop_].contains(s);
    }
    if (!needed) {
      return;
    }
    for (u32 v : live_) {
      const Assignment a = assignments_.get(v);
      if (a.pending_phi() || !live_after_block(v)) {
        continue;
      }
      // The carried successor inherits registers and spills on its own
      // exits; only values reaching a non-carried target need a slot now.
      const bool reaches = reach == 0 || a.last >= reach;
      for (u32 p = 0; p < a.part_count; ++p) {
        const u16 w = assignments_.part(v, p);
        if (!part::reg_valid(w) || part::recomputable(w)) {
          continue;
        }
        if (part::fixed(w)) {
          // Phi writes on back edges leave the slot stale; store
          // unconditionally when leaving the loop.
          if (leaving) {
            spill_part(v, static_cast<u8>(p), part::reg(w));
          }
        } else if (!part::stack_valid(w) && reaches) {
          spill_part(v, static_cast<u8>(p), part::reg(w));
        }
      }
    }
  }

  std::vector<Move> edge_moves(u32 ti) {
    std::vector<Move> moves;
    const BlockRef tb = an_.layout()[ti];
    const BlockRef cb = an_.layout()[cur_block_];
    const u32 tl = an_.block_loop(ti);
    const std::vector<FixedEntry> *tp = nullptr;
    if (tl != 0 && !has_child_[tl] && opts_.fixed_regs) {
      tp = &plan(tl);
    }
    const auto fixed_in_target = [&](u32 v, u8 p) -> std::optional<u8> {
      if (tp) {
        for (const auto &e : *tp) {
          if (e.value == v && e.part == p) {
            return e.reg;
          }
        }
      }
      return std::nullopt;
    };
    for (ValueRef phi : adapter_.block_phis(tb)) {
      const u32 idx = adapter_.val_local_idx(phi);
      const u32 n = adapter_.phi_incoming_count(phi);
      ValueRef in = adapter::kInvalidValue;
      for (u32 k = 0; k < n; ++k) {
        if (adapter_.phi_incoming_block(phi, k) == cb) {
          in = adapter_.phi_incoming_val(phi, k);
          break;
        }
      }
      TPDEMINI_ASSERT(in != adapter::kInvalidValue, "phi without incoming value for edge");
      if (!assignments_.get(idx).live()) {
        define(idx, phi);
        Assignment a = assignments_.get(idx);
        a.flags |= Assignment::kPendingPhi;
        assignments_.put(idx, a);
      }
      const Assignment a = assignments_.get(idx);
      for (u32 p = 0; p < a.part_count; ++p) {
        Loc dst;
        if (const auto f = fixed_in_target(idx, static_cast<u8>(p))) {
          dst = Loc::r(*f);
        } else {
          ensure_slot(idx);
          dst = Loc::slot(assignments_.get(idx).frame_off + 8 * static_cast<i32>(p));
        }
        moves.push_back(Move{dst, location(in, p)});
      }
    }
    if (tp && !an_.loops()[tl].contains(cur_block_)) {
      for (const auto &e : *tp) {
        const Assignment a = assignments_.get(e.value);
        if (!a.live() || a.pending_phi() || !live_after_block(e.value)) {
          continue;
        }
        moves.push_back(Move{Loc::r(e.reg), location_idx(e.value, e.part)});
      }
    }
    std::erase_if(moves, [](const Move &m) { return m.dst == m.src; });
    return moves;
  }

  void emit_edge(u32 ti) { run_moves(edge_moves(ti), 0); }

  void consume_phi_uses(BlockRef t) {
    const BlockRef cb = an_.layout()[cur_block_];
    for (ValueRef phi : adapter_.block_phis(t)) {
      const u32 n = adapter_.phi_incoming_count(phi);
      for (u32 k = 0; k < n; ++k) {
        if (adapter_.phi_incoming_block(phi, k) != cb) {
          continue;
        }
        const ValueRef in = adapter_.phi_incoming_val(phi, k);
        if (!adapter_.val_is_const(in)) {
          const u32 v = adapter_.val_local_idx(in);
          Assignment a = assignments_.get(v);
          TPDEMINI_ASSERT(a.remaining_uses > 0, "phi use count underflow");
          --a.remaining_uses;
          assignments_.put(v, a);
        }
        break;
      }
    }
  }

  /// Sequentializes `moves` with two temporaries that avoid `keep` and
  /// every register the moves touch.
  void run_moves(std::vector<Move> moves, RegMask keep) {
    std::erase_if(moves, [](const Move &m) { return m.dst == m.src; });
    if (moves.empty()) {
      return;
    }
    const auto involved = [&] {
      RegMask m = keep;
      for (const auto &mv : moves) {
        if (mv.dst.kind == Loc::Kind::reg) {
          m |= RegMask{1} << mv.dst.reg;
        }
        if (mv.src.kind == Loc::Kind::reg) {
          m |= RegMask{1} << mv.src.reg;
        }
      }
      return m;
    };
    std::vector<u8> temps;
    while (temps.size() < 2) {
      RegMask used = involved();
      for (u8 t : temps) {
        used |= RegMask{1} << t;
      }
      int pick = regs_.lowest_free(kAllRegs & ~used);
      if (pick < 0) {
        for (u8 r = 0; r < N && pick < 0; ++r) {
          const auto s = regs_.at(r);
          if ((used >> r & 1) || s.kind != Kind::value) {
            continue;
          }
          const u16 w = assignments_.part(s.value, s.part);
          if (part::locks(w) == 0 &&
              (part::stack_valid(w) || part::recomputable(w) || !needed_later(s.value))) {
            assignments_.set_part(s.value, s.part, part::without_reg(w));
            drop_reg(r);
            pick = r;
          }
        }
      }
      if (pick < 0) {
        // Free a source register by reading that value from memory.
        for (u8 r = 0; r < N && pick < 0; ++r) {
          const auto s = regs_.at(r);
          if ((keep >> r & 1) || s.kind != Kind::value) {
            continue;
          }
          bool is_dst = false;
          for (u8 t : temps) {
            is_dst |= t == r;
          }
          for (const auto &mv : moves) {
            is_dst |= mv.dst == Loc::r(r);
          }
          const u16 w = assignments_.part(s.value, s.part);
          if (is_dst || part::locks(w) != 0) {
            continue;
          }
          ensure_stack(s.value, s.part, r);
          assignments_.set_part(s.value, s.part,
                                part::without_reg(assignments_.part(s.value, s.part)));
          drop_reg(r);
          const Loc src = location_idx(s.value, s.part);
          for (auto &mv : moves) {
            if (mv.src == Loc::r(r)) {
              mv.src = src;
            }
          }
          pick = r;
        }
      }
      TPDEMINI_ASSERT(pick >= 0, "no temporary register for parallel copy");
      hold_scratch(static_cast<u8>(pick));
      temps.push_back(static_cast<u8>(pick));
    }
    parallel_copy(std::move(moves), temps[0], temps[1],
                  [&](const Loc &d, const Loc &s) { derived().emit_move(d, s); });
    for (u8 t : temps) {
      release_scratch(t);
    }
  }

  // ---- registers and slots -------------------------------------------------

  Loc location_idx(u32 idx, u32 p) const {
    const Assignment a = assignments_.get(idx);
    TPDEMINI_ASSERT(a.live() && !a.pending_phi(), "reading a value that is not live");
    const u16 w = assignments_.part(idx, p);
    if (part::reg_valid(w)) {
      return Loc::r(part::reg(w));
    }
    if (part::recomputable(w)) {
      return Loc::addr(a.frame_off);
    }
    TPDEMINI_ASSERT(part::stack_valid(w), "value has no location");
    return Loc::slot(a.frame_off + 8 * static_cast<i32>(p));
  }

  void lock(u32 v, u8 p) {
    const u16 w = assignments_.part(v, p);
    assignments_.set_part(v, p, part::with_locks(w, part::locks(w) + 1));
    ++total_locks_;
  }
  void unlock(u32 v, u8 p) {
    const u16 w = assignments_.part(v, p);
    TPDEMINI_ASSERT(part::locks(w) > 0, "unlock without lock");
    assignments_.set_part(v, p, part::with_locks(w, part::locks(w) - 1));
    --total_locks_;
  }

  void hold_scratch(u8 r) {
    TPDEMINI_ASSERT(regs_.at(r).kind == Kind::free, "scratch register not free");
    regs_.hold_scratch(r);
    event(EventKind::hold, r, kNoValue, 0, 0);
  }
  void release_scratch(u8 r) {
    TPDEMINI_ASSERT(regs_.at(r).kind == Kind::scratch, "releasing a non-scratch register");
    drop_reg(r);
  }
  void drop_reg(u8 r) {
    regs_.release(r);
    event(EventKind::drop, r, kNoValue, 0, 0);
  }

  /// Records that `r` holds v.p (the register file slot must be free).
  void place(u32 v, u8 p, u8 r) {
    regs_.hold_value(r, v, p);
    event(EventKind::hold, r, v, p, 0);
    assignments_.set_part(v, p, part::with_reg(assignments_.part(v, p), r));
  }

  /// Returns a free register from `feasible`, evicting if necessary.
  u8 pick_reg(RegMask feasible) {
    const int f = regs_.lowest_free(feasible);
    if (f >= 0) {
      return static_cast<u8>(f);
    }
    for (u32 k = 0; k < N; ++k) {
      const u8 r = static_cast<u8>((regs_.cursor() + k) % N);
      if (!(feasible >> r & 1)) {
        continue;
      }
      const auto s = regs_.at(r);
      if (s.kind != Kind::value || part::locks(assignments_.part(s.value, s.part)) != 0) {
        continue;
      }
      evict(r);
      regs_.advance_cursor(r);
      return r;
    }
    internal_fault("no register available", __FILE__, __LINE__);
  }

  void evict(u8 r) {
    const auto s = regs_.at(r);
    TPDEMINI_ASSERT(s.kind == Kind::value, "evicting a non-value register");
    event(EventKind::evict, r, s.value, s.part, 0);
    u16 w = assignments_.part(s.value, s.part);
    if (!part::stack_valid(w) && !part::recomputable(w) && needed_later(s.value)) {
      if (opts_.break_eviction) {
        ensure_slot(s.value);
        w = part::set(w, part::kStackValid, true);
      } else {
        spill_part(s.value, s.part, r);
        w = assignments_.part(s.value, s.part);
      }
    }
    assignments_.set_part(s.value, s.part, part::without_reg(w));
    drop_reg(r);
    ++stats_.evictions;
  }

  void ensure_slot(u32 v) {
    Assignment a = assignments_.get(v);
    if (a.frame_off != 0) {
      return;
    }
    const u32 bytes = 8 * std::max<u32>(a.part_count, 1);
    auto &fl = free_slots_[std::min<u32>(bytes / 8, 3)];
    if (bytes <= 16 && !fl.empty()) {
      a.frame_off = fl.back();
      fl.pop_back();
    } else {
      watermark_ += bytes;
      a.frame_off = -static_cast<i32>(watermark_);
    }
    assignments_.put(v, a);
  }

  /// Stores v.p from `r` unless memory already has it.
  void ensure_stack(u32 v, u8 p, u8 r) {
    const u16 w = assignments_.part(v, p);
    if (!part::stack_valid(w) && !part::recomputable(w)) {
      spill_part(v, p, r);
    }
  }

  void spill_part(u32 v, u8 p, u8 r) {
    ensure_slot(v);
    const i32 off = assignments_.get(v).frame_off + 8 * p;
    derived().emit_move(Loc::slot(off), Loc::r(r));
    event(EventKind::spill, r, v, p, off);
    assignments_.set_part(v, p, part::set(assignments_.part(v, p), part::kStackValid, true));
    ++stats_.spills;
  }

  void reload(u32 v, u8 p, u8 r) {
    const Assignment a = assignments_.get(v);
    const u16 w = assignments_.part(v, p);
    if (part::recomputable(w)) {
      derived().emit_move(Loc::r(r), Loc::addr(a.frame_off));
    } else {
      TPDEMINI_ASSERT(part::stack_valid(w), "value has no location");
      derived().emit_move(Loc::r(r), Loc::slot(a.frame_off + 8 * p));
      event(EventKind::reload, r, v, p, a.frame_off + 8 * p);
      ++stats_.reloads;
    }
    place(v, p, r);
  }

  void free_value(u32 v) {
    Assignment a = assignments_.get(v);
    for (u32 p = 0; p < a.part_count; ++p) {
      const u16 w = assignments_.part(v, p);
      TPDEMINI_ASSERT(part::locks(w) == 0, "freeing a locked value");
      if (part::reg_valid(w)) {
        const auto s = regs_.at(part::reg(w));
        if (s.value == v && s.part == p) {
          drop_reg(part::reg(w));
        }
      }
    }
    // A fixed binding for a value that never got defined still ends here.
    if (active_loop_ != analysis::kNone) {
      for (const auto &e : plans_[active_loop_]) {
        const auto s = regs_.at(e.reg);
        if (e.value == v && s.kind == Kind::fixed && s.value == v) {
          drop_reg(e.reg);
        }
      }
    }
    if (a.frame_off != 0 && !part::recomputable(assignments_.part(v, 0))) {
      const u32 bytes = 8 * std::max<u32>(a.part_count, 1);
      if (bytes <= 16) {
        free_slots_[bytes / 8].push_back(a.frame_off);
      }
    }
    a.flags = 0;
    a.frame_off = 0;
    assignments_.put(v, a);
    for (u32 p = 0; p < a.part_count; ++p) {
      assignments_.set_part(v, p, 0);
    }
    const u32 pos = live_pos_[v];
    live_[pos] = live_.back();
    live_pos_[live_[pos]] = pos;
    live_.pop_back();
    live_pos_[v] = kNoValue;
  }

  A &adapter_;
  CompileOptions opts_;
  analysis::Analyzer<A> an_;
  AssignmentTable assignments_;
  Regs regs_;
  FunctionStats stats_;
  std::vector<SessionEvent> events_;
  std::vector<ValueRef> vals_;
  std::vector<u32> live_;
  std::vector<u32> live_pos_;
  std::vector<std::vector<u32>> ending_;
  std::vector<std::vector<i32>> free_slots_;
  std::vector<i32> stack_var_off_;
  u32 watermark_ = 0;
  std::vector<bool> has_child_;
  std::vector<std::vector<FixedEntry>> plans_;
  std::vector<bool> plan_done_;
  u32 active_loop_ = analysis::kNone;
  u32 cur_block_ = 0;
  ValueRef cur_inst_ = adapter::kInvalidValue;
  std::vector<ValueRef> deferred_;
  std::vector<ValueRef> extra_uses_;
  u64 misplaced_ = 0;
  i64 total_locks_ = 0;
};

} // namespace tpdemini::codegen
