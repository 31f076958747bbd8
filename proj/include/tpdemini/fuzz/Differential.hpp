// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tpdemini/ir/Interpreter.hpp"
#include "tpdemini/ir/Printer.hpp"
#include "tpdemini/seed/Generator.hpp"
#include "tpdemini/seed/SeedCompiler.hpp"
#include "tpdemini/vm/Vm.hpp"

/// Interpreter-versus-VM comparison of whole modules.
namespace tpdemini::fuzz {

struct Divergence {
  std::vector<u64> args;
  ExecResult expected;
  ExecResult actual;
  /// Compile failure text; empty when both sides ran.
  std::string error;

  std::string describe() const {
    if (!error.empty()) {
      return "compile error: " + error;
    }
    std::string s = "args [";
    for (std::size_t i = 0; i < args.size(); ++i) {
      s += (i ? ", " : "") + std::to_string(args[i]);
    }
    const auto show = [](const ExecResult &r) {
      return r.ok() ? "(" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + ")"
                    : std::string("trap ") + trap_name(r.trap);
    };
    return s + "]: interpreter " + show(expected) + ", vm " + show(actual);
  }
};

/// Random argument words for `f`; a mix of small and full-width values.
inline std::vector<u64> random_args(const ir::Function &f, std::mt19937_64 &rng) {
  std::vector<u64> args(f.param_slot_count());
  for (auto &a : args) {
    switch (rng() % 4) {
    case 0: a = rng() % 16; break;
    case 1: a = ~u64{0} - rng() % 4; break;
    default: a = rng(); break;
    }
  }
  return args;
}

/// Compiles `m` and runs function `entry` on `vectors` argument sets in both
/// the interpreter and the VM. Returns the first disagreement.
inline std::optional<Divergence> check_module(const ir::Module &m, u32 entry, u32 vectors,
                                              u64 seed, const snippets::SnippetLibrary &lib,
                                              codegen::CompileOptions opts = {}) {
  visa::ModuleImage img;
  try {
    img = seed::compile_module(m, lib, opts).image;
  } catch (const std::exception &e) {
    Divergence d;
    d.error = e.what();
    return d;
  }
  const ir::Function &f = m.functions[entry];
  const u32 parts = ir::type_parts(f.ret);
  std::mt19937_64 rng(seed);
  vm::Vm machine(img);
  for (u32 k = 0; k < vectors; ++k) {
    const std::vector<u64> args = random_args(f, rng);
    const ExecResult want = ir::interpret(m, entry, args);
    if (want.trap == Trap::step_limit) {
      continue;
    }
    const ExecResult got = machine.run(entry, args);
    if (!want.same_outcome(got, parts)) {
      return Divergence{args, want, got, {}};
    }
  }
  return std::nullopt;
}

struct FuzzReport {
  u32 modules = 0;
  u32 functions = 0;
  u32 runs = 0;
  /// FNV-1a over the printed generated modules; equal seeds give equal hashes.
  u64 corpus_hash = 0xcbf29ce484222325ull;
  std::optional<u64> failing_seed;
  std::optional<Divergence> divergence;
  /// Entry function of `reproducer` and the seed of its argument vectors.
  u32 entry = 0;
  u64 vector_seed = 0;
  /// Reduced reproducer text, when minimization ran.
  std::string reproducer;
};

struct FuzzConfig {
  u64 seed = 1;
  u32 count = 100;
  u32 vectors = 8;
  seed::GenOptions gen;
  codegen::CompileOptions compile;
  bool minimize = true;
};

/// Generates `count` modules from consecutive seeds and checks every
/// function of each. Stops at the first divergence.
inline FuzzReport run_fuzz(const FuzzConfig &cfg, const snippets::SnippetLibrary &lib) {
  FuzzReport rep;
  for (u32 i = 0; i < cfg.count; ++i) {
    const u64 s = cfg.seed + i;
    const ir::Module m = seed::generate(s, cfg.gen);
    ++rep.modules;
    for (char ch : ir::print_module(m)) {
      rep.corpus_hash = (rep.corpus_hash ^ static_cast<u8>(ch)) * 0x100000001b3ull;
    }
    for (u32 f = 0; f < m.functions.size(); ++f) {
      ++rep.functions;
      rep.runs += cfg.vectors;
      auto d = check_module(m, f, cfg.vectors, s * 31 + f, lib, cfg.compile);
      if (!d) {
        continue;
      }
      rep.failing_seed = s;
      rep.divergence = d;
      rep.entry = f;
      rep.vector_seed = s * 31 + f;
      if (cfg.minimize) {
        const auto fails = [&](const ir::Module &cand, u32 e) {
          return check_module(cand, e, cfg.vectors, s * 31 + f, lib, cfg.compile).has_value();
        };
        u32 entry = f;
        const ir::Module small = seed::minimize(m, fails, entry);
        rep.divergence = check_module(small, entry, cfg.vectors, s * 31 + f, lib, cfg.compile);
        rep.entry = entry;
        rep.reproducer = "; entry @" + small.functions[entry].name + "\n" +
                         ir::print_module(small);
      } else {
        rep.reproducer = ir::print_module(m);
      }
      return rep;
    }
  }
  return rep;
}

} // namespace tpdemini::fuzz
