// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "Corpus.hpp"
#include "Oracles.hpp"
#include "tpdemini/analysis/Analyzer.hpp"
#include "tpdemini/codegen/Assignment.hpp"
#include "tpdemini/codegen/ParallelCopy.hpp"
#include "tpdemini/codegen/SessionEvents.hpp"
#include "tpdemini/fuzz/Bench.hpp"
#include "tpdemini/fuzz/Differential.hpp"
#include "tpdemini/ir/Validator.hpp"

using namespace tpdemini;
using codegen::EventKind;
using codegen::Loc;
using codegen::Move;
using codegen::SessionEvent;

namespace {

constexpr u32 kRegs = visa::kNumAllocatable;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  // Records a failure; only the first few messages are kept.
  void fail(const std::string &why) {
    if (ok || failures < 3) {
      detail << (failures ? "; " : "") << why;
    }
    ok = false;
    ++failures;
  }
  u32 failures = 0;
};

const std::vector<corpus::Program> &programs() {
  static const auto p = corpus::load_dir(TPDEMINI_CORPUS_DIR);
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Compiled {
  ir::Module m;
  std::vector<std::vector<SessionEvent>> events;
  visa::ModuleImage image;
};

Compiled compile_with_events(const std::string &text) {
  Compiled out{ir::load_module(text), {}, {}};
  codegen::CompileOptions opts;
  opts.record_events = true;
  seed::SeedAdapter a(out.m);
  seed::SeedCompiler c(a, seed::default_snippets(), opts);
  for (u32 f = 0; f < out.m.functions.size(); ++f) {
    c.compile_function(f);
    out.events.push_back(c.events());
    out.image.functions.push_back(c.take_image(out.m.functions[f].name));
  }
  return out;
}

// ---- differential correctness ------------------------------------------------

void differential(Outcome &o) {
  const auto t0 = std::chrono::steady_clock::now();
  u32 checks = 0;
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    const auto img = seed::compile_module(m).image;
    vm::Vm machine(img);
    for (const auto &e : p.expects) {
      const u32 fi = *img.find(e.func);
      const u32 parts = ir::type_parts(m.functions[fi].ret);
      if (!ir::interpret(m, fi, e.args).same_outcome(e.want, parts) ||
          !machine.run(fi, e.args).same_outcome(e.want, parts)) {
        o.fail(p.name + " @" + e.func + " disagrees with its expectation");
      }
      ++checks;
    }
    for (u32 f = 0; f < m.functions.size(); ++f) {
      if (const auto d = fuzz::check_module(m, f, 8, 7 + f, seed::default_snippets())) {
        o.fail(p.name + " @" + m.functions[f].name + ": " + d->describe());
      }
    }
  }
  fuzz::FuzzConfig cfg;
  cfg.seed = 1;
  cfg.count = 600;
  cfg.vectors = 8;
  const auto rep = fuzz::run_fuzz(cfg, seed::default_snippets());
  if (rep.divergence) {
    o.fail("fuzz seed " + std::to_string(*rep.failing_seed) + ": " + rep.divergence->describe());
  }
  if (rep.functions < 1000) {
    o.fail("only " + std::to_string(rep.functions) + " fuzzed functions");
  }
  const double t = seconds_since(t0);
  if (t > 120) {
    o.fail("took " + std::to_string(t) + " s");
  }
  o.detail << (o.ok ? "" : "; ") << programs().size() << " programs, " << checks
           << " expectations, " << rep.functions << " fuzzed functions x 8 vectors in "
           << static_cast<int>(t) << " s";
}

// ---- liveness ----------------------------------------------------------------

void liveness(Outcome &o) {
  u32 cfgs = 0;
  u32 violations = 0;
  u32 tail_checked = 0;
  for (u64 s = 0; cfgs < 500; ++s) {
    seed::GenOptions opt;
    opt.irreducible = s % 2 == 1;
    opt.max_blocks = 8 + s % 24;
    const ir::Module m = seed::generate(1000 + s, opt);
    seed::SeedAdapter a(m);
    for (u32 fi = 0; fi < m.functions.size(); ++fi, ++cfgs) {
      const ir::Function &f = m.functions[fi];
      a.prepare(fi);
      analysis::Analyzer<seed::SeedAdapter> an;
      an.run(a);
      const oracle::DataflowLiveness df(f);
      const u32 nb = an.block_count();
      std::vector<u32> pos(nb);
      for (u32 i = 0; i < nb; ++i) {
        pos[an.layout()[i]] = i;
      }
      for (u32 v = 0; v < f.defs.size(); ++v) {
        const auto &r = an.live(v);
        for (u32 b = 0; b < nb; ++b) {
          const u32 p = pos[b];
          const bool in_range = r.defined() && p >= r.first && p <= r.last;
          if ((df.live_in[b][v] || df.live_out[b][v]) && !in_range) {
            ++violations;
            o.fail("v" + std::to_string(v) + " live at " + f.blocks[b].label +
                   " outside its range");
          }
          bool across = false;
          for (u32 succ : f.blocks[b].successors()) {
            across |= df.live_in[succ][v] != 0;
          }
          // A range without ends_at_block_end must die inside its last block.
          if (across && r.defined() && p == r.last && !r.end_of_block) {
            ++violations;
            o.fail("v" + std::to_string(v) + " outlives the tail of " + f.blocks[b].label);
          }
          tail_checked += r.defined() && p == r.last && !r.end_of_block;
        }
      }
      a.finalize(fi);
    }
  }
  o.detail << (o.ok ? "" : "; ") << cfgs << " CFGs, " << tail_checked
           << " tight tails checked, " << violations << " violations";
}

// ---- single-pass discipline --------------------------------------------------

void single_pass(Outcome &o) {
  u32 functions = 0;
  u32 diffs = 0;
  codegen::CompileOptions opts;
  opts.snapshot_patches = true;
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    seed::SeedAdapter a(m);
    seed::SeedCompiler c(a, seed::default_snippets(), opts);
    for (u32 f = 0; f < m.functions.size(); ++f, ++functions) {
      c.compile_function(f);
      const auto &buf = c.buffer();
      if (buf.violations() != 0) {
        o.fail(p.name + ": " + std::to_string(buf.violations()) + " writes outside patch points");
      }
      const auto &before = c.pre_finalize_snapshot();
      const auto &after = buf.bytes();
      if (before.size() != after.size()) {
        o.fail(p.name + ": code size changed during finalization");
        continue;
      }
      for (u32 i = 0; i < after.size(); ++i) {
        if (before[i] == after[i]) {
          continue;
        }
        ++diffs;
        bool allowed = false;
        for (const auto &pp : buf.patch_points()) {
          if (i < pp.offset || i >= pp.offset + pp.length) {
            continue;
          }
          switch (pp.purpose) {
          case visa::PatchPurpose::frame_size: allowed = i >= pp.offset + 4; break;
          case visa::PatchPurpose::save_slot:
          case visa::PatchPurpose::restore_slot: allowed = true; break;
          case visa::PatchPurpose::branch: break;
          }
        }
        if (!allowed) {
          o.fail(p.name + " byte " + std::to_string(i) + " changed outside frame/save slots");
        }
      }
    }
  }
  o.detail << (o.ok ? "" : "; ") << functions << " functions, " << diffs
           << " patched bytes, all in frame immediates or save/restore slots";
}

// ---- allocation policy -------------------------------------------------------

std::string wide_function(u32 n) {
  std::string s = "func @w(%x: i64) -> i64 {\nentry:\n";
  for (u32 k = 1; k <= n; ++k) {
    s += "  %v" + std::to_string(k) + " = add %x, " + std::to_string(k) + "\n";
  }
  std::string acc = "%v1";
  for (u32 k = 2; k <= n; ++k) {
    s += "  %a" + std::to_string(k) + " = xor " + acc + ", %v" + std::to_string(k) + "\n";
    acc = "%a" + std::to_string(k);
  }
  return s + "  ret " + acc + "\n}\n";
}

std::string pinned_loop() {
  std::string body;
  std::string acc = "%s";
  for (u32 k = 1; k <= 18; ++k) {
    body += "  %t" + std::to_string(k) + " = mul %i, " + std::to_string(k + 2) + "\n";
  }
  for (u32 k = 1; k <= 18; ++k) {
    body += "  %u" + std::to_string(k) + " = add " + acc + ", %t" + std::to_string(k) + "\n";
    acc = "%u" + std::to_string(k);
  }
  return "func @f(%n: i64) -> i64 {\nentry:\n  br loop\nloop:\n"
         "  %i = phi i64 [0, entry], [%i2, loop]\n"
         "  %s = phi i64 [0, entry], [" + acc + ", loop]\n" + body +
         "  %i2 = add %i, 1\n  %c = cmp.ult %i2, %n\n"
         "  condbr %c, loop, done\ndone:\n  ret " + acc + "\n}\n";
}

void allocation(Outcome &o) {
  // lowest free register first
  const Compiled w = compile_with_events(wide_function(20));
  std::map<u32, u8> home;
  std::vector<u8> victims;
  for (const auto &e : w.events[0]) {
    if (e.kind == EventKind::hold && e.value != codegen::kNoValue && !home.count(e.value)) {
      home[e.value] = e.reg;
    }
    if (e.kind == EventKind::evict) {
      victims.push_back(e.reg);
    }
  }
  for (u32 k = 0; k < kRegs; ++k) {
    if (!home.count(k) || home[k] != k) {
      o.fail("value " + std::to_string(k) + " did not get r" + std::to_string(k));
    }
  }
  // round-robin eviction: r0 holds the locked operand, victims go r1, r2, ...
  if (victims.size() < 7) {
    o.fail("too few evictions");
  } else {
    for (u8 k = 0; k < 7; ++k) {
      if (victims[k] != k + 1) {
        o.fail("eviction " + std::to_string(k) + " took r" + std::to_string(victims[k]));
      }
    }
  }
  // fixed registers are never evicted
  const Compiled pl = compile_with_events(pinned_loop());
  std::array<bool, kRegs> fixed{};
  u32 fixed_holds = 0;
  u32 loop_evictions = 0;
  for (const auto &e : pl.events[0]) {
    if (e.kind == EventKind::hold) {
      fixed[e.reg] = e.text == "fixed";
      fixed_holds += fixed[e.reg];
    } else if (e.kind == EventKind::drop) {
      fixed[e.reg] = false;
    } else if (e.kind == EventKind::evict) {
      ++loop_evictions;
      if (fixed[e.reg]) {
        o.fail("fixed r" + std::to_string(e.reg) + " evicted");
      }
    }
  }
  if (fixed_holds == 0 || loop_evictions == 0) {
    o.fail("pinned loop exercised no fixed registers or no evictions");
  }
  // spill-all at multi-predecessor entries, plus the general session audit
  u32 entries = 0;
  const auto audit = [&](const std::string &name, const Compiled &c) {
    for (u32 f = 0; f < c.events.size(); ++f) {
      for (const auto &p : codegen::audit_events<kRegs>(c.events[f])) {
        o.fail(name + ": " + p);
      }
      u32 multi = 0;
      for (auto preds : ir::predecessors(c.m.functions[f])) {
        std::sort(preds.begin(), preds.end());
        multi += std::unique(preds.begin(), preds.end()) - preds.begin() > 1;
      }
      u32 seen = 0;
      for (const auto &e : c.events[f]) {
        seen += e.kind == EventKind::entry_check;
      }
      if (seen != multi) {
        o.fail(name + ": " + std::to_string(seen) + " entry checks for " +
               std::to_string(multi) + " join blocks");
      }
      entries += seen;
    }
  };
  for (const auto &p : programs()) {
    audit(p.name, compile_with_events(p.text));
  }
  seed::GenOptions g;
  g.max_insts = 20;
  for (u64 s = 1; s <= 100; ++s) {
    audit("seed " + std::to_string(s), compile_with_events(ir::print_module(seed::generate(s, g))));
  }
  o.detail << (o.ok ? "" : "; ") << "lowest-free r0..r" << kRegs - 1 << ", " << victims.size()
           << " round-robin evictions, " << fixed_holds << " fixed holds never evicted, "
           << entries << " join entries audited";
}

// ---- fusion and folding ------------------------------------------------------

std::string disasm(const std::string &name, bool fold = true) {
  const ir::Module m =
      ir::load_module(corpus::read_file(std::string(TPDEMINI_CORPUS_DIR) + "/" + name + ".tir"));
  codegen::CompileOptions opts;
  opts.fold = fold;
  std::string out;
  for (const auto &f : seed::compile_module(m, opts).image.functions) {
    out += "@" + f.name + " frame=" + std::to_string(f.frame_size) + "\n" +
           visa::disassemble_code(f.code);
  }
  return out;
}

u32 count(const std::string &text, const std::string &needle) {
  u32 n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) {
    ++n;
  }
  return n;
}

u32 instruction_count(const visa::ModuleImage &img) {
  u32 n = 0;
  for (const auto &f : img.functions) {
    n += static_cast<u32>(f.code.size() / visa::kWordSize);
  }
  return n;
}

void fusion(Outcome &o) {
  const auto golden = [&](const std::string &name) {
    const std::string d = disasm(name);
    if (d != corpus::read_file(std::string(TPDEMINI_CORPUS_DIR) + "/../golden/" + name + ".dis")) {
      o.fail(name + " differs from its golden disassembly");
    }
    return d;
  };
  const std::string fuse = golden("fuse");
  if (count(fuse, ": cmp ") != 1 || count(fuse, ": b.") != 1 || count(fuse, ": set.") != 0) {
    o.fail("fuse is not a single cmp + b.cc");
  }
  const std::string addr = golden("addrfold");
  if (count(addr, ": ld ") != 1 || count(addr, ": ld r0, [fp - ") != 1 ||
      std::regex_search(addr, std::regex(R"(: mov r\d+, fp\n)"))) {
    o.fail("addrfold is not one fp-relative load");
  }
  const std::string addi = golden("addimm");
  if (count(addi, ": addi r0, 5\n") != 1 || count(addi, ": movi") != 0) {
    o.fail("addimm is not one addi");
  }
  u32 changed = 0;
  u32 runs = 0;
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    codegen::CompileOptions plain;
    plain.fold = false;
    const auto folded = seed::compile_module(m).image;
    const auto unfolded = seed::compile_module(m, plain).image;
    changed += instruction_count(folded) != instruction_count(unfolded);
    vm::Vm a(folded);
    vm::Vm b(unfolded);
    for (u32 f = 0; f < m.functions.size(); ++f) {
      std::mt19937_64 rng(f + 5);
      const u32 parts = ir::type_parts(m.functions[f].ret);
      for (u32 k = 0; k < 8; ++k, ++runs) {
        const auto args = fuzz::random_args(m.functions[f], rng);
        if (!a.run(f, args).same_outcome(b.run(f, args), parts)) {
          o.fail(p.name + " @" + m.functions[f].name + ": folding changes the result");
        }
      }
    }
  }
  if (changed == 0) {
    o.fail("disabling folding never changed an instruction count");
  }
  o.detail << (o.ok ? "" : "; ") << "goldens match; no-fold changes " << changed << " of "
           << programs().size() << " instruction counts, " << runs << " runs agree";
}

// ---- parallel copies ---------------------------------------------------------

void parallel_moves(Outcome &o) {
  constexpr u8 kScratch = 4;
  u32 sets = 0;
  u32 with_cycles = 0;
  // every function {0..3} -> {0..3} plus "untouched", one scratch register
  for (u32 code = 0; code < 5 * 5 * 5 * 5; ++code, ++sets) {
    std::vector<Move> moves;
    std::array<int, 4> src{};
    u32 c = code;
    for (u8 d = 0; d < 4; ++d) {
      src[d] = static_cast<int>(c % 5) - 1;
      c /= 5;
      if (src[d] >= 0) {
        moves.push_back(Move{Loc::r(d), Loc::r(static_cast<u8>(src[d]))});
      }
    }
    std::array<u64, 5> regs{100, 101, 102, 103, 999};
    bool scratch = false;
    codegen::parallel_copy(moves, kScratch, std::nullopt, [&](const Loc &d, const Loc &s) {
      regs[d.reg] = regs[s.reg];
      scratch |= d.reg == kScratch;
    });
    with_cycles += scratch;
    for (u8 d = 0; d < 4; ++d) {
      const u64 want = src[d] >= 0 ? 100 + static_cast<u64>(src[d]) : 100 + d;
      if (regs[d] != want) {
        o.fail("move set " + std::to_string(code) + " leaves r" + std::to_string(d) + " wrong");
      }
    }
  }
  // the swap cycle: three moves through the scratch register
  std::vector<std::pair<Loc, Loc>> seq;
  codegen::parallel_copy({Move{Loc::r(0), Loc::r(1)}, Move{Loc::r(1), Loc::r(0)}}, kScratch,
                         std::nullopt, [&](const Loc &d, const Loc &s) { seq.emplace_back(d, s); });
  std::array<u64, 5> regs{10, 11, 0, 0, 0};
  for (const auto &[d, s] : seq) {
    regs[d.reg] = regs[s.reg];
  }
  if (seq.size() != 3 || regs[0] != 11 || regs[1] != 10) {
    o.fail("swap cycle not realized in three moves");
  }
  o.detail << (o.ok ? "" : "; ") << sets << " move sets (" << with_cycles
           << " with cycles) and the swap realized exactly";
}

// ---- scaling -----------------------------------------------------------------

void scaling(Outcome &o) {
  const auto &lib = seed::default_snippets();
  for (u32 n : {1000u, 100000u}) {
    const ir::Module m = ir::parse_module(fuzz::chain_text(n));
    const u64 args[] = {12345};
    if (vm::Vm(seed::compile_module(m, lib).image).run(0, args).lo != fuzz::chain_value(n, 12345)) {
      o.fail("chain " + std::to_string(n) + " computes the wrong value");
    }
  }
  const auto small = fuzz::bench_chain(1000, fuzz::bench_reps(1000), lib);
  const auto large = fuzz::bench_chain(100000, fuzz::bench_reps(100000), lib);
  const double ratio = large.seconds / small.seconds;
  if (ratio > 300) {
    o.fail("ratio " + std::to_string(ratio));
  }
  if (large.seconds > 5) {
    o.fail("1e5 chain took " + std::to_string(large.seconds) + " s");
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "1e3: %.6f s, 1e5: %.4f s, ratio %.1f", small.seconds,
                large.seconds, ratio);
  o.detail << (o.ok ? "" : "; ") << buf;
}

// ---- footprint ---------------------------------------------------------------

void footprint(Outcome &o) {
  static_assert(sizeof(codegen::Assignment) <= 16, "assignment record too large");
  const u32 one = codegen::assignment_bytes(1);
  const u32 two = codegen::assignment_bytes(2);
  if (sizeof(codegen::Assignment) > 16 || two - one > 2) {
    o.fail("record " + std::to_string(sizeof(codegen::Assignment)) + " bytes, extra part " +
           std::to_string(two - one));
  }
  o.detail << (o.ok ? "" : "; ") << "record " << sizeof(codegen::Assignment)
           << " bytes, extra part " << two - one << " bytes";
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<void(Outcome &)>>> criteria = {
      {"differential-correctness", differential},
      {"liveness-soundness", liveness},
      {"single-pass-discipline", single_pass},
      {"allocation-policy", allocation},
      {"fusion-and-folding", fusion},
      {"parallel-move-oracle", parallel_moves},
      {"compile-time-scaling", scaling},
      {"assignment-footprint", footprint},
  };
  int failed = 0;
  for (const auto &[name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception &e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
    failed += !o.ok;
  }
  return failed ? 1 : 0;
}
