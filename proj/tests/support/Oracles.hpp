// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tpdemini/ir/Ir.hpp"

namespace tpdemini::oracle {

/// Exact per-block liveness by iterative backward dataflow. Phi operands are
/// live out of the corresponding predecessor; phi results are not live in.
struct DataflowLiveness {
  std::vector<std::vector<u8>> live_in;
  std::vector<std::vector<u8>> live_out;

  explicit DataflowLiveness(const ir::Function &f) {
    const u32 nb = static_cast<u32>(f.blocks.size());
    const u32 nv = static_cast<u32>(f.defs.size());
    std::vector<std::vector<u8>> use(nb, std::vector<u8>(nv, 0));
    std::vector<std::vector<u8>> def(nb, std::vector<u8>(nv, 0));
    std::vector<std::vector<u8>> phi_out(nb, std::vector<u8>(nv, 0));
    for (u32 b = 0; b < nb; ++b) {
      const auto &blk = f.blocks[b];
      for (const auto &phi : blk.phis) {
        def[b][phi.def] = 1;
        for (const auto &in : phi.incoming) {
          if (in.value.is_value()) {
            phi_out[in.block][in.value.def] = 1;
          }
        }
      }
      for (const auto &inst : blk.insts) {
        for (const auto &op : inst.ops) {
          if (op.is_value() && !def[b][op.def]) {
            use[b][op.def] = 1;
          }
        }
        def[b][inst.def] = 1;
      }
    }
    live_in.assign(nb, std::vector<u8>(nv, 0));
    live_out.assign(nb, std::vector<u8>(nv, 0));
    bool changed = true;
    while (changed) {
      changed = false;
      for (u32 b = nb; b-- > 0;) {
        std::vector<u8> out = phi_out[b];
        for (u32 s : f.blocks[b].successors()) {
          for (u32 v = 0; v < nv; ++v) {
            out[v] |= live_in[s][v];
          }
        }
        std::vector<u8> in(nv, 0);
        for (u32 v = 0; v < nv; ++v) {
          in[v] = use[b][v] || (out[v] && !def[b][v]);
        }
        if (out != live_out[b] || in != live_in[b]) {
          live_out[b] = std::move(out);
          live_in[b] = std::move(in);
          changed = true;
        }
      }
    }
  }
};

/// Strongly connected components (Tarjan). Only components that contain a
/// cycle are returned.
inline std::vector<std::vector<u32>> cyclic_sccs(const ir::Function &f) {
  const u32 n = static_cast<u32>(f.blocks.size());
  std::vector<u32> index(n, ~0u), low(n, 0);
  std::vector<u8> on_stack(n, 0);
  std::vector<u32> stack;
  std::vector<std::vector<u32>> out;
  u32 counter = 0;
  struct Frame {
    u32 b;
    u32 next;
  };
  for (u32 root = 0; root < n; ++root) {
    if (index[root] != ~0u) {
      continue;
    }
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame &fr = call.back();
      const auto succ = f.blocks[fr.b].successors();
      if (fr.next < succ.size()) {
        const u32 s = succ[fr.next++];
        if (index[s] == ~0u) {
          index[s] = low[s] = counter++;
          stack.push_back(s);
          on_stack[s] = 1;
          call.push_back({s, 0});
        } else if (on_stack[s]) {
          low[fr.b] = std::min(low[fr.b], index[s]);
        }
        continue;
      }
      const u32 b = fr.b;
      call.pop_back();
      if (!call.empty()) {
        low[call.back().b] = std::min(low[call.back().b], low[b]);
      }
      if (low[b] == index[b]) {
        std::vector<u32> comp;
        u32 w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != b);
        bool cyclic = comp.size() > 1;
        for (u32 s : f.blocks[b].successors()) {
          cyclic |= s == b;
        }
        if (cyclic) {
          out.push_back(std::move(comp));
        }
      }
    }
  }
  return out;
}

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace tpdemini::oracle
