// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "tpdemini/ir/Parser.hpp"
#include "tpdemini/seed/SeedCompiler.hpp"

/// Compile-time scaling over synthetic straight-line chains.
namespace tpdemini::fuzz {

/// `@chain(%x)`: `n` dependent instructions cycling through add, xor and
/// mul, each also reading the parameter so it stays live to the end.
inline std::string chain_text(u32 n) {
  std::string s = "func @chain(%x: i64) -> i64 {\nentry:\n";
  s.reserve(s.size() + std::size_t{n} * 32);
  std::string prev = "%x";
  for (u32 i = 0; i < n; ++i) {
    const std::string cur = "%v" + std::to_string(i);
    switch (i % 4) {
    case 0: s += "  " + cur + " = add " + prev + ", " + std::to_string(i % 97 + 1) + "\n"; break;
    case 1: s += "  " + cur + " = xor " + prev + ", %x\n"; break;
    case 2: s += "  " + cur + " = mul " + prev + ", 3\n"; break;
    default: s += "  " + cur + " = sub " + prev + ", %x\n"; break;
    }
    prev = cur;
  }
  s += "  ret " + prev + "\n}\n";
  return s;
}

/// Expected result of `@chain(x)`, computed directly.
inline u64 chain_value(u32 n, u64 x) {
  u64 v = x;
  for (u32 i = 0; i < n; ++i) {
    switch (i % 4) {
    case 0: v += i % 97 + 1; break;
    case 1: v ^= x; break;
    case 2: v *= 3; break;
    default: v -= x; break;
    }
  }
  return v;
}

struct BenchRow {
  u32 n = 0;
  double seconds = 0; // best of the repetitions
  u64 code_bytes = 0;
};

/// Compiles a chain of `n` instructions `reps` times; parsing is not timed.
inline BenchRow bench_chain(u32 n, u32 reps, const snippets::SnippetLibrary &lib) {
  const ir::Module m = ir::parse_module(chain_text(n));
  BenchRow row{n, 1e30, 0};
  for (u32 r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = seed::compile_module(m, lib);
    const auto t1 = std::chrono::steady_clock::now();
    row.seconds = std::min(row.seconds, std::chrono::duration<double>(t1 - t0).count());
    row.code_bytes = out.image.functions[0].code.size();
  }
  return row;
}

/// Repetitions giving a stable minimum for small sizes.
inline u32 bench_reps(u32 n) { return n <= 1000 ? 50 : n <= 10000 ? 10 : 3; }

} // namespace tpdemini::fuzz
