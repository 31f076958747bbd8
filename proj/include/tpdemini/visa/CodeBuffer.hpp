// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "tpdemini/visa/Isa.hpp"

namespace tpdemini::visa {

enum class PatchPurpose : u8 { frame_size, save_slot, restore_slot, branch };

inline const char *patch_purpose_name(PatchPurpose p) {
  switch (p) {
  case PatchPurpose::frame_size: return "frame-size";
  case PatchPurpose::save_slot: return "save-slot";
  case PatchPurpose::restore_slot: return "restore-slot";
  case PatchPurpose::branch: return "branch";
  }
  return "?";
}

struct PatchPoint {
  u32 offset = 0; // bytes
  u32 length = 0;
  PatchPurpose purpose = PatchPurpose::branch;
  bool written = false;
};

class UnresolvedLabel : public std::runtime_error {
public:
  explicit UnresolvedLabel(std::string label)
      : std::runtime_error("unresolved label " + label), label(std::move(label)) {}
  std::string label;
};

struct Label {
  u32 id = ~0u;
  bool valid() const { return id != ~0u; }
  bool operator==(const Label &) const = default;
};

/// Append-only code buffer. The only bytes that may change after being
/// appended are those inside registered patch points, each written once.
/// Every other attempted write is counted and rejected.
class CodeBuffer {
public:
  u32 size() const { return static_cast<u32>(bytes_.size()); }
  u32 word_pos() const { return size() / kWordSize; }
  const std::vector<u8> &bytes() const { return bytes_; }
  const std::vector<PatchPoint> &patch_points() const { return patches_; }
  u64 violations() const { return violations_; }
  u64 emitted_words() const { return word_pos(); }

  u32 emit(const Inst &inst) {
    const u32 pos = word_pos();
    const Word w = encode(inst);
    bytes_.insert(bytes_.end(), w.begin(), w.end());
    return pos;
  }

  /// Registers `[offset, offset + length)` as a patch region. Returns its id.
  u32 add_patch_point(u32 offset, u32 length, PatchPurpose purpose) {
    TPDEMINI_ASSERT(offset + length <= size(), "patch point beyond buffer end");
    patches_.push_back(PatchPoint{offset, length, purpose, false});
    return static_cast<u32>(patches_.size() - 1);
  }

  /// Overwrites bytes inside patch point `id`; the region may be written once.
  void patch(u32 id, u32 offset, std::span<const u8> data) {
    TPDEMINI_ASSERT(id < patches_.size(), "unknown patch point");
    PatchPoint &pp = patches_[id];
    if (pp.written || offset < pp.offset ||
        offset + data.size() > pp.offset + pp.length) {
      ++violations_;
      internal_fault("write outside a registered patch region", __FILE__, __LINE__);
    }
    std::memcpy(bytes_.data() + offset, data.data(), data.size());
    pp.written = true;
  }

  /// Replaces the instruction word at `word` inside patch point `id`.
  void patch_word(u32 id, u32 word, const Inst &inst) {
    const Word w = encode(inst);
    patch(id, word * kWordSize, w);
  }

  /// Write by address only. Allowed iff it lands in an unwritten patch
  /// region.
  void write_at(u32 offset, std::span<const u8> data) {
    for (u32 id = 0; id < patches_.size(); ++id) {
      const auto &pp = patches_[id];
      if (!pp.written && offset >= pp.offset &&
          offset + data.size() <= pp.offset + pp.length) {
        patch(id, offset, data);
        return;
      }
    }
    ++violations_;
    internal_fault("write outside a registered patch region", __FILE__, __LINE__);
  }

  Label new_label(std::string name) {
    labels_.push_back(LabelInfo{std::move(name), std::nullopt});
    return Label{static_cast<u32>(labels_.size() - 1)};
  }

  bool is_bound(Label l) const { return labels_[l.id].pos.has_value(); }
  u32 label_pos(Label l) const { return *labels_[l.id].pos; }
  const std::string &label_name(Label l) const { return labels_[l.id].name; }

  /// Binds `l` to the current position and resolves pending forward
  /// branches to it.
  void bind(Label l) {
    TPDEMINI_ASSERT(!is_bound(l), "label bound twice");
    labels_[l.id].pos = word_pos();
    if (l.id >= fixups_.size()) {
      return;
    }
    auto &fx = fixups_[l.id];
    for (const auto &f : fx) {
      resolve(f, word_pos());
    }
    fx.clear();
  }

  /// Emits a JMP/Bcc to `l`. Backward targets are encoded directly, forward
  /// targets get a placeholder and a branch patch point over the imm32.
  u32 emit_branch(Inst inst, Label l) {
    TPDEMINI_ASSERT(is_branch(inst.op), "emit_branch with a non-branch");
    const u32 pos = word_pos();
    if (is_bound(l)) {
      inst.imm = static_cast<i32>(label_pos(l)) - static_cast<i32>(pos + 1);
      emit(inst);
      return pos;
    }
    inst.imm = 0;
    emit(inst);
    const u32 pp = add_patch_point(pos * kWordSize + 4, 4, PatchPurpose::branch);
    if (fixups_.size() <= l.id) {
      fixups_.resize(labels_.size());
    }
    fixups_[l.id].push_back(Fixup{pos, pp});
    ++pending_;
    return pos;
  }

  u32 pending_fixups() const { return pending_; }

  /// Throws UnresolvedLabel naming the first label with pending branches.
  void check_resolved() const {
    for (u32 i = 0; i < fixups_.size(); ++i) {
      if (!fixups_[i].empty()) {
        throw UnresolvedLabel(labels_[i].name);
      }
    }
  }

private:
  struct LabelInfo {
    std::string name;
    std::optional<u32> pos;
  };
  struct Fixup {
    u32 branch_word;
    u32 patch_id;
  };

  void resolve(const Fixup &f, u32 target) {
    const i32 off = static_cast<i32>(target) - static_cast<i32>(f.branch_word + 1);
    const u32 v = static_cast<u32>(off);
    const u8 imm[4] = {static_cast<u8>(v), static_cast<u8>(v >> 8),
                       static_cast<u8>(v >> 16), static_cast<u8>(v >> 24)};
    patch(f.patch_id, f.branch_word * kWordSize + 4, imm);
    --pending_;
  }

  std::vector<u8> bytes_;
  std::vector<PatchPoint> patches_;
  std::vector<LabelInfo> labels_;
  std::vector<std::vector<Fixup>> fixups_;
  u32 pending_ = 0;
  u64 violations_ = 0;
};

} // namespace tpdemini::visa
