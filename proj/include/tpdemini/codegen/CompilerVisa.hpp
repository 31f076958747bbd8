// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "tpdemini/codegen/CompilerBase.hpp"
#include "tpdemini/visa/CodeBuffer.hpp"
#include "tpdemini/visa/Image.hpp"

namespace tpdemini::codegen {

struct VisaTarget {
  static constexpr u32 kNumRegs = visa::kNumAllocatable;
  static constexpr RegMask kCalleeSaved = 0x3F00;
  static constexpr std::array<u8, visa::kNumArgRegs> kArgRegs{0, 1, 2, 3, 4, 5};
  static constexpr std::array<u8, 2> kRetRegs{0, 1};
  using Cond = visa::Cond;
  using Label = visa::Label;
  static Cond invert(Cond c) { return visa::invert(c); }
};

static_assert(VisaTarget::kCalleeSaved ==
              ((RegMask{1} << visa::kNumCalleeSaved) - 1) << visa::kFirstCalleeSaved);

/// Allocatable registers an instruction reads.
inline RegMask visa_reads(const visa::Inst &i) {
  using visa::Op;
  RegMask m = 0;
  const auto add = [&](u8 r) {
    if (r < visa::kNumAllocatable) {
      m |= RegMask{1} << r;
    }
  };
  switch (i.op) {
  case Op::ADD: case Op::SUB: case Op::MUL: case Op::AND: case Op::OR:
  case Op::XOR: case Op::SHL: case Op::SHR: case Op::ADC:
    add(i.b1);
    add(i.b3);
    break;
  case Op::DIVMOD:
    add(0);
    add(i.b3);
    break;
  case Op::MOV: add(i.b2); break;
  case Op::MOVIH:
  case Op::ADDI: add(i.b1); break;
  case Op::CMPI: add(i.b2); break;
  case Op::CMP:
    add(i.b2);
    add(i.b3);
    break;
  case Op::LD:
  case Op::ST: {
    const visa::Mem mem = i.mem();
    add(mem.base);
    if (mem.index) {
      add(*mem.index);
    }
    if (i.op == Op::ST) {
      add(i.b1);
    }
    break;
  }
  case Op::PUSH: add(i.b2); break;
  default: break;
  }
  return m;
}

inline RegMask visa_writes(const visa::Inst &i) {
  using visa::Op;
  switch (i.op) {
  case Op::DIVMOD: return RegMask{3};
  case Op::ADD: case Op::SUB: case Op::MUL: case Op::AND: case Op::OR:
  case Op::XOR: case Op::SHL: case Op::SHR: case Op::ADC: case Op::MOV:
  case Op::MOVI: case Op::MOVIH: case Op::ADDI: case Op::LD: case Op::SETCC:
  case Op::POP:
    return i.b1 < visa::kNumAllocatable ? RegMask{1} << i.b1 : 0;
  default: return 0;
  }
}

/// Code emission for the virtual ISA: moves, frame setup with patch points
/// for the frame size and callee-saved registers, calls.
template <adapter::IRAdapter A, typename Derived>
class CompilerVisa : public CompilerBase<A, Derived, VisaTarget> {
public:
  using Base = CompilerBase<A, Derived, VisaTarget>;
  using Label = visa::Label;
  using Cond = visa::Cond;
  static constexpr u32 kSaveSlots = visa::kNumCalleeSaved;

  using Base::Base;

  visa::CodeBuffer &buffer() { return buf_; }
  const visa::CodeBuffer &buffer() const { return buf_; }
  /// Bytes as they were right before frame finalization.
  const std::vector<u8> &pre_finalize_snapshot() const { return snapshot_; }

  visa::FunctionImage take_image(std::string name) {
    return visa::FunctionImage{std::move(name), buf_.bytes(), this->stats().frame_size};
  }

  // ---- hooks used by the framework -----------------------------------------

  void reset_code() {
    buf_ = visa::CodeBuffer{};
    restore_patches_.clear();
    snapshot_.clear();
  }

  Label new_label(std::string name) { return buf_.new_label(std::move(name)); }
  void bind_label(Label l) { buf_.bind(l); }

  u32 emit(const visa::Inst &i) {
    const u32 pos = buf_.emit(i);
    if (this->options().record_events) {
      this->note_emit(visa::disassemble(i), visa_reads(i), pos, visa_writes(i));
    }
    return pos;
  }

  void emit_jump(Label l) { emit_branch(visa::ops::jmp(0), l); }
  void emit_cond_branch(Cond c, Label l) { emit_branch(visa::ops::bcc(c, 0), l); }

  void emit_move(const Loc &dst, const Loc &src) {
    using visa::ops::ld;
    using visa::ops::mov;
    using visa::ops::st;
    if (dst.kind == Loc::Kind::slot) {
      TPDEMINI_ASSERT(src.kind == Loc::Kind::reg, "memory move needs a register source");
      emit(st(visa::Mem{visa::kFp, std::nullopt, 1, dst.off}, src.reg));
      return;
    }
    TPDEMINI_ASSERT(dst.kind == Loc::Kind::reg, "bad move destination");
    switch (src.kind) {
    case Loc::Kind::reg: emit(mov(dst.reg, src.reg)); break;
    case Loc::Kind::slot:
      emit(ld(dst.reg, visa::Mem{visa::kFp, std::nullopt, 1, src.off}));
      break;
    case Loc::Kind::constant: materialize(dst.reg, src.value); break;
    case Loc::Kind::recompute:
      emit(mov(dst.reg, visa::kFp));
      emit(visa::ops::addi(dst.reg, src.off));
      break;
    }
  }

  void materialize(u8 r, u64 v) {
    const i64 s = static_cast<i64>(v);
    emit(visa::ops::movi(r, static_cast<i32>(static_cast<u32>(v))));
    if (!visa::fits_i32(s)) {
      emit(visa::ops::movih(r, static_cast<i32>(static_cast<u32>(v >> 32))));
    }
  }

  void begin_function() {
    using namespace visa::ops;
    emit(push(visa::kFp));
    emit(mov(visa::kFp, visa::kSp));
    const u32 at = emit(addi(visa::kSp, 0));
    frame_patch_ = buf_.add_patch_point(at * visa::kWordSize, visa::kWordSize,
                                        visa::PatchPurpose::frame_size);
    const u32 first = buf_.word_pos();
    for (u32 i = 0; i < kSaveSlots; ++i) {
      emit(nop());
    }
    save_patch_ = buf_.add_patch_point(first * visa::kWordSize, kSaveSlots * visa::kWordSize,
                                       visa::PatchPurpose::save_slot);
  }

  void init_stack_vars() {
    u32 i = 0;
    std::optional<typename Base::ScratchReg> zero;
    for (const auto &sv : this->adapter().cur_stack_vars()) {
      const i32 off = this->stack_var_offset(i++);
      if (sv.size == 0) {
        continue;
      }
      if (!zero) {
        zero.emplace(this->alloc_scratch());
        emit(visa::ops::movi(zero->reg(), 0));
      }
      for (u32 k = 0; k < (sv.size + 7) / 8; ++k) {
        emit(visa::ops::st(visa::Mem{visa::kFp, std::nullopt, 1,
                                     off + static_cast<i32>(8 * k)},
                           zero->reg()));
      }
    }
  }

  void emit_epilogue() {
    using namespace visa::ops;
    const u32 first = buf_.word_pos();
    for (u32 i = 0; i < kSaveSlots; ++i) {
      emit(nop());
    }
    restore_patches_.push_back(buf_.add_patch_point(first * visa::kWordSize,
                                                    kSaveSlots * visa::kWordSize,
                                                    visa::PatchPurpose::restore_slot));
    emit(mov(visa::kSp, visa::kFp));
    emit(pop(visa::kFp));
    emit(ret());
  }

  void end_function(u32 frame, const std::vector<std::pair<u8, i32>> &saves) {
    using namespace visa::ops;
    try {
      buf_.check_resolved();
    } catch (const visa::UnresolvedLabel &e) {
      throw CompileError(std::string(this->adapter().func_name(this->adapter().cur_func())),
                         "", "unresolved label " + e.label);
    }
    if (this->options().snapshot_patches) {
      snapshot_ = buf_.bytes();
    }
    const auto &pp = buf_.patch_points();
    buf_.patch_word(frame_patch_, pp[frame_patch_].offset / visa::kWordSize,
                    addi(visa::kSp, -static_cast<i32>(frame)));
    std::vector<u8> save_bytes;
    for (u32 i = 0; i < kSaveSlots; ++i) {
      const visa::Inst in = i < saves.size()
                                ? st(visa::Mem{visa::kFp, std::nullopt, 1, saves[i].second},
                                     saves[i].first)
                                : nop();
      const auto w = visa::encode(in);
      save_bytes.insert(save_bytes.end(), w.begin(), w.end());
    }
    buf_.patch(save_patch_, pp[save_patch_].offset, save_bytes);
    std::vector<u8> restore_bytes;
    for (u32 i = 0; i < kSaveSlots; ++i) {
      const std::size_t k = saves.size() - 1 - i;
      const visa::Inst in = i < saves.size()
                                ? ld(saves[k].first,
                                     visa::Mem{visa::kFp, std::nullopt, 1, saves[k].second})
                                : nop();
      const auto w = visa::encode(in);
      restore_bytes.insert(restore_bytes.end(), w.begin(), w.end());
    }
    for (u32 id : restore_patches_) {
      buf_.patch(id, pp[id].offset, restore_bytes);
    }
  }

  /// Default: every value may be pinned in a loop.
  bool fixed_candidate(ValueRef) const { return true; }
  /// Values folded into their user are never defined and have no uses to
  /// count.
  bool absorbed(ValueRef) const { return false; }

protected:
  void emit_branch(visa::Inst inst, Label l) {
    const u32 pos = buf_.emit_branch(inst, l);
    if (this->options().record_events) {
      this->note_emit(visa::disassemble(inst) + " -> " + buf_.label_name(l), 0, pos);
    }
  }

  visa::CodeBuffer buf_;
  u32 frame_patch_ = 0;
  u32 save_patch_ = 0;
  std::vector<u32> restore_patches_;
  std::vector<u8> snapshot_;
};

} // namespace tpdemini::codegen
