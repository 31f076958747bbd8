// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <concepts>
#include <ranges>
#include <string_view>

#include "tpdemini/base.hpp"

/// The contract between the framework and an IR. Analysis and codegen only
/// talk to IRs through this interface; all entities are integer handles.
namespace tpdemini::adapter {

using ValueRef = u32;
using BlockRef = u32;
using FuncRef = u32;

inline constexpr ValueRef kInvalidValue = ~0u;
inline constexpr BlockRef kInvalidBlock = ~0u;

enum class Bank : u8 { gp };

enum class Linkage : u8 { external };

inline constexpr u32 kMaxParts = 4;

struct ValueParts {
  u32 count = 0;
  std::array<u32, kMaxParts> size{};
  std::array<Bank, kMaxParts> bank{};

  bool operator==(const ValueParts &) const = default;
};

struct StackVarInfo {
  u32 size = 0;
  u32 align = 0;
};

template <typename R, typename T>
concept RangeOf = std::ranges::range<R> &&
                  std::convertible_to<std::ranges::range_value_t<R>, T>;

/// Function enumeration, per-function blocks/args/stack variables, per-block
/// successors/phis/instructions and 64 bits of aux storage, per-value dense
/// numbering and part layout, phi incoming pairs and constant bytes.
/// Constants are not numbered; `val_is_const` tells them apart.
template <typename A>
concept IRAdapter = requires(A &a, const A &ca, FuncRef f, BlockRef b, ValueRef v,
                             u32 i, u64 bits) {
  { ca.funcs() } -> RangeOf<FuncRef>;
  { ca.func_name(f) } -> std::convertible_to<std::string_view>;
  { ca.func_linkage(f) } -> std::same_as<Linkage>;
  { ca.func_is_definition(f) } -> std::convertible_to<bool>;

  a.prepare(f);
  a.finalize(f);

  { ca.cur_func() } -> std::convertible_to<FuncRef>;
  { ca.cur_args() } -> RangeOf<ValueRef>;
  { ca.cur_stack_vars() } -> RangeOf<StackVarInfo>;
  { ca.cur_blocks() } -> RangeOf<BlockRef>;
  { ca.cur_entry_block() } -> std::convertible_to<BlockRef>;
  { ca.value_count() } -> std::convertible_to<u32>;

  { ca.block_succs(b) } -> RangeOf<BlockRef>;
  { ca.block_phis(b) } -> RangeOf<ValueRef>;
  { ca.block_insts(b) } -> RangeOf<ValueRef>;
  { ca.block_aux_get(b) } -> std::convertible_to<u64>;
  a.block_aux_set(b, bits);
  { ca.block_name(b) } -> std::convertible_to<std::string_view>;

  { ca.val_local_idx(v) } -> std::convertible_to<u32>;
  { ca.val_is_const(v) } -> std::convertible_to<bool>;
  { ca.val_const_part(v, i) } -> std::convertible_to<u64>;
  { ca.value_parts(v) } -> std::same_as<ValueParts>;
  { ca.inst_operands(v) } -> RangeOf<ValueRef>;

  { ca.phi_incoming_count(v) } -> std::convertible_to<u32>;
  { ca.phi_incoming_block(v, i) } -> std::convertible_to<BlockRef>;
  { ca.phi_incoming_val(v, i) } -> std::convertible_to<ValueRef>;
};

} // namespace tpdemini::adapter
