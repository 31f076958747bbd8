// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tpdemini/adapter/IRAdapter.hpp"

/// Per-function analysis: block layout (RPO with contiguous loops), the loop
/// forest and conservative per-value live ranges over layout indices.
namespace tpdemini::analysis {

using adapter::BlockRef;
using adapter::ValueRef;

inline constexpr u32 kNone = ~0u;

/// Block aux layout shared with codegen.
inline constexpr u64 kAuxIndexMask = 0xFFFF'FFFFu;
inline constexpr u64 kAuxMultiPred = u64{1} << 32;
inline constexpr u64 kAuxVisited = u64{1} << 33;

struct Loop {
  u32 parent = 0;
  u32 level = 0;
  /// Layout index of the header.
  u32 header = 0;
  /// Layout span [begin, end).
  u32 begin = 0;
  u32 end = 0;
  bool irreducible = false;

  bool contains(u32 block) const { return block >= begin && block < end; }
};

struct LiveRange {
  u32 def_block = kNone;
  u32 first = kNone;
  u32 last = 0;
  /// Live until the end of block `last` (ends_at_block_end).
  bool end_of_block = false;
  u32 uses = 0;

  bool defined() const { return def_block != kNone; }
};

template <adapter::IRAdapter A>
class Analyzer {
public:
  void run(A &a) {
    clear();
    number_blocks(a);
    dfs();
    build_loops();
    build_layout(a);
    compute_liveness(a);
    for (BlockRef b : layout_) {
      a.block_aux_set(b, a.block_aux_get(b) & ~kAuxVisited);
    }
  }

  std::span<const BlockRef> layout() const { return layout_; }
  u32 block_count() const { return static_cast<u32>(layout_.size()); }
  u32 block_index(const A &a, BlockRef b) const {
    return static_cast<u32>(a.block_aux_get(b) & kAuxIndexMask);
  }
  bool multi_pred(u32 idx) const { return multi_pred_[idx]; }
  std::span<const u32> successors(u32 idx) const { return layout_succs_[idx]; }
  std::span<const Loop> loops() const { return loops_; }
  u32 block_loop(u32 idx) const { return block_loop_[idx]; }
  const LiveRange &live(u32 value) const { return ranges_[value]; }
  std::span<const LiveRange> ranges() const { return ranges_; }

  /// Innermost loop whose first layout block is `idx`, if any.
  u32 loop_starting_at(u32 idx) const {
    const u32 l = block_loop_[idx];
    return l != 0 && loops_[l].begin == idx ? l : kNone;
  }

  std::string dump(const A &a) const {
    std::ostringstream os;
    os << "layout:";
    for (BlockRef b : layout_) {
      os << ' ' << a.block_name(b);
    }
    os << '\n';
    for (u32 l = 0; l < loops_.size(); ++l) {
      const Loop &lp = loops_[l];
      os << "loop " << l << " parent=";
      if (l == 0) {
        os << '-';
      } else {
        os << lp.parent;
      }
      os << " level=" << lp.level << " header=" << a.block_name(layout_[lp.header])
         << " blocks=[" << lp.begin << ',' << lp.end << ')';
      if (lp.irreducible) {
        os << " irreducible";
      }
      os << '\n';
    }
    for (u32 v = 0; v < ranges_.size(); ++v) {
      const LiveRange &r = ranges_[v];
      if (!r.defined()) {
        continue;
      }
      os << 'v' << v << " [" << r.first << ',' << r.last
         << "] end=" << (r.end_of_block ? "out" : "in") << " uses=" << r.uses << '\n';
    }
    return os.str();
  }

private:
  void clear() {
    blocks_.clear();
    succs_.clear();
    postorder_.clear();
    loops_.clear();
    layout_.clear();
    layout_succs_.clear();
    multi_pred_.clear();
    block_loop_.clear();
    ranges_.clear();
  }

  void number_blocks(A &a) {
    for (BlockRef b : a.cur_blocks()) {
      a.block_aux_set(b, blocks_.size());
      blocks_.push_back(b);
    }
    succs_.resize(blocks_.size());
    for (u32 i = 0; i < blocks_.size(); ++i) {
      for (BlockRef s : a.block_succs(blocks_[i])) {
        succs_[i].push_back(static_cast<u32>(a.block_aux_get(s) & kAuxIndexMask));
      }
    }
    entry_ = static_cast<u32>(a.block_aux_get(a.cur_entry_block()) & kAuxIndexMask);
  }

  void tag_lhead(u32 b, u32 h) {
    if (b == h || h == kNone) {
      return;
    }
    u32 cur1 = b;
    u32 cur2 = h;
    while (iloop_header_[cur1] != kNone) {
      const u32 ih = iloop_header_[cur1];
      if (ih == cur2) {
        return;
      }
      if (dfsp_[ih] < dfsp_[cur2]) {
        iloop_header_[cur1] = cur2;
        cur1 = cur2;
        cur2 = ih;
      } else {
        cur1 = ih;
      }
    }
    iloop_header_[cur1] = cur2;
  }

  void visit_edge(u32 b, u32 s) {
    if (dfsp_[s] > 0) {
      is_header_[s] = true;
      tag_lhead(b, s);
      return;
    }
    u32 h = iloop_header_[s];
    if (h == kNone) {
      return;
    }
    if (dfsp_[h] > 0) {
      tag_lhead(b, h);
      return;
    }
    irreducible_[h] = true;
    while (iloop_header_[h] != kNone) {
      h = iloop_header_[h];
      if (dfsp_[h] > 0) {
        tag_lhead(b, h);
        return;
      }
      irreducible_[h] = true;
    }
  }

  // One DFS computes the postorder and the innermost loop header of every
  // block. Successors are visited in reverse so that RPO lists them in
  // declared order.
  void dfs() {
    const u32 n = static_cast<u32>(blocks_.size());
    traversed_.assign(n, false);
    dfsp_.assign(n, 0);
    iloop_header_.assign(n, kNone);
    is_header_.assign(n, false);
    irreducible_.assign(n, false);
    struct Frame {
      u32 block;
      u32 next;
    };
    std::vector<Frame> stack;
    const auto enter = [&](u32 b) {
      traversed_[b] = true;
      dfsp_[b] = static_cast<u32>(stack.size()) + 1;
      stack.push_back({b, static_cast<u32>(succs_[b].size())});
    };
    enter(entry_);
    while (!stack.empty()) {
      Frame &fr = stack.back();
      if (fr.next == 0) {
        const u32 b = fr.block;
        dfsp_[b] = 0;
        postorder_.push_back(b);
        stack.pop_back();
        if (!stack.empty()) {
          tag_lhead(stack.back().block, iloop_header_[b]);
        }
        continue;
      }
      const u32 s = succs_[fr.block][--fr.next];
      if (!traversed_[s]) {
        enter(s);
      } else {
        visit_edge(fr.block, s);
      }
    }
  }

  void build_loops() {
    const u32 n = static_cast<u32>(blocks_.size());
    loop_of_header_.assign(n, kNone);
    inner_loop_.assign(n, 0);
    loops_.push_back(Loop{0, 0, entry_, 0, 0, false});
    for (auto it = postorder_.rbegin(); it != postorder_.rend(); ++it) {
      const u32 b = *it;
      if (!is_header_[b]) {
        continue;
      }
      const u32 ph = iloop_header_[b];
      const u32 parent = ph == kNone ? 0 : loop_of_header_[ph];
      TPDEMINI_ASSERT(parent != kNone, "outer loop header not yet seen");
      loop_of_header_[b] = static_cast<u32>(loops_.size());
      loops_.push_back(Loop{parent, loops_[parent].level + 1, b, 0, 0, irreducible_[b]});
    }
    sizes_.assign(loops_.size(), 0);
    for (u32 b : postorder_) {
      if (is_header_[b]) {
        inner_loop_[b] = loop_of_header_[b];
      } else if (iloop_header_[b] != kNone) {
        inner_loop_[b] = loop_of_header_[iloop_header_[b]];
      }
      ++sizes_[inner_loop_[b]];
    }
    for (u32 l = static_cast<u32>(loops_.size()); l-- > 1;) {
      sizes_[loops_[l].parent] += sizes_[l];
    }
  }

  void build_layout(A &a) {
    const u32 n = static_cast<u32>(blocks_.size());
    const u32 reachable = static_cast<u32>(postorder_.size());
    std::vector<u32> next(loops_.size(), kNone);
    loops_[0].end = sizes_[0];
    next[0] = 0;
    std::vector<u32> pos(n, kNone);
    std::vector<u32> chain;
    for (auto it = postorder_.rbegin(); it != postorder_.rend(); ++it) {
      const u32 b = *it;
      const u32 l = inner_loop_[b];
      chain.clear();
      for (u32 c = l; next[c] == kNone; c = loops_[c].parent) {
        chain.push_back(c);
      }
      for (auto ci = chain.rbegin(); ci != chain.rend(); ++ci) {
        Loop &lp = loops_[*ci];
        const u32 begin = next[lp.parent];
        next[lp.parent] += sizes_[*ci];
        lp.begin = begin;
        lp.end = begin + sizes_[*ci];
        next[*ci] = begin;
      }
      pos[b] = next[l]++;
    }
    layout_.assign(reachable, 0);
    block_loop_.assign(reachable, 0);
    std::vector<u32> pred_count(reachable, 0);
    std::vector<u32> last_pred(reachable, kNone);
    for (u32 b = 0; b < n; ++b) {
      if (pos[b] == kNone) {
        continue;
      }
      layout_[pos[b]] = blocks_[b];
      block_loop_[pos[b]] = inner_loop_[b];
    }
    layout_succs_.assign(reachable, {});
    for (u32 b = 0; b < n; ++b) {
      if (pos[b] == kNone) {
        continue;
      }
      for (u32 s : succs_[b]) {
        layout_succs_[pos[b]].push_back(pos[s]);
        if (last_pred[pos[s]] != pos[b]) {
          last_pred[pos[s]] = pos[b];
          ++pred_count[pos[s]];
        }
      }
    }
    for (auto &lp : loops_) {
      lp.header = pos[lp.header];
    }
    multi_pred_.assign(reachable, false);
    for (u32 b = 0; b < n; ++b) {
      if (pos[b] == kNone) {
        a.block_aux_set(blocks_[b], kAuxIndexMask);
        continue;
      }
      multi_pred_[pos[b]] = pred_count[pos[b]] > 1;
      a.block_aux_set(blocks_[b], pos[b] | (multi_pred_[pos[b]] ? kAuxMultiPred : 0) |
                                      kAuxVisited);
    }
  }

  void define(ValueRef v, u32 block, const A &a) {
    LiveRange &r = ranges_[a.val_local_idx(v)];
    r.def_block = block;
    r.first = block;
    r.last = block;
  }

  // A use in block `u`. If the use sits in a loop that does not contain the
  // definition, the range extends over that whole loop.
  void visit(u32 v, u32 u, bool count) {
    LiveRange &r = ranges_[v];
    TPDEMINI_ASSERT(r.defined(), "use of a value without definition");
    if (count) {
      ++r.uses;
    }
    u32 l = block_loop_[u];
    u32 child = kNone;
    while (!loops_[l].contains(r.def_block)) {
      child = l;
      l = loops_[l].parent;
    }
    if (child == kNone) {
      if (r.last < u) {
        r.last = u;
        r.end_of_block = false;
      }
      r.first = std::min(r.first, u);
      return;
    }
    const Loop &lp = loops_[child];
    if (r.last <= lp.end - 1) {
      r.last = lp.end - 1;
      r.end_of_block = true;
    }
    r.first = std::min(r.first, lp.begin);
  }

  void compute_liveness(const A &a) {
    ranges_.assign(a.value_count(), LiveRange{});
    for (ValueRef v : a.cur_args()) {
      define(v, 0, a);
    }
    for (u32 i = 0; i < layout_.size(); ++i) {
      for (ValueRef p : a.block_phis(layout_[i])) {
        define(p, i, a);
      }
      for (ValueRef v : a.block_insts(layout_[i])) {
        define(v, i, a);
      }
    }
    for (u32 i = 0; i < layout_.size(); ++i) {
      const BlockRef b = layout_[i];
      for (ValueRef p : a.block_phis(b)) {
        const u32 pv = a.val_local_idx(p);
        const u32 n = a.phi_incoming_count(p);
        for (u32 k = 0; k < n; ++k) {
          const u64 aux = a.block_aux_get(a.phi_incoming_block(p, k));
          if ((aux & kAuxIndexMask) == kAuxIndexMask) {
            continue;
          }
          const u32 from = static_cast<u32>(aux & kAuxIndexMask);
          const ValueRef in = a.phi_incoming_val(p, k);
          if (!a.val_is_const(in)) {
            visit(a.val_local_idx(in), from, true);
          }
          // The phi is written on the back edge, so it stays assigned
          // through the end of that predecessor.
          if (from >= i) {
            visit(pv, from, false);
            LiveRange &r = ranges_[pv];
            if (r.last == from) {
              r.end_of_block = true;
            }
          }
        }
      }
      for (ValueRef inst : a.block_insts(b)) {
        for (ValueRef op : a.inst_operands(inst)) {
          if (!a.val_is_const(op)) {
            visit(a.val_local_idx(op), i, true);
          }
        }
      }
    }
  }

  std::vector<BlockRef> blocks_;
  std::vector<std::vector<u32>> succs_;
  u32 entry_ = 0;
  std::vector<bool> traversed_;
  std::vector<u32> dfsp_;
  std::vector<u32> iloop_header_;
  std::vector<bool> is_header_;
  std::vector<bool> irreducible_;
  std::vector<u32> postorder_;
  std::vector<u32> loop_of_header_;
  std::vector<u32> inner_loop_;
  std::vector<u32> sizes_;

  std::vector<Loop> loops_;
  std::vector<BlockRef> layout_;
  std::vector<std::vector<u32>> layout_succs_;
  std::vector<bool> multi_pred_;
  std::vector<u32> block_loop_;
  std::vector<LiveRange> ranges_;
};

} // namespace tpdemini::analysis
