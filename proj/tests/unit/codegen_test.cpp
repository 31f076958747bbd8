// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <random>
#include <regex>

#include "Corpus.hpp"
#include "tpdemini/codegen/Assignment.hpp"
#include "tpdemini/codegen/ParallelCopy.hpp"
#include "tpdemini/codegen/SessionEvents.hpp"
#include "tpdemini/fuzz/Differential.hpp"
#include "tpdemini/ir/Validator.hpp"

using namespace tpdemini;
using codegen::EventKind;
using codegen::Loc;
using codegen::Move;
using codegen::SessionEvent;

namespace {

constexpr u32 kRegs = visa::kNumAllocatable;

struct Compiled {
  ir::Module m;
  std::vector<std::vector<SessionEvent>> events;
  visa::ModuleImage image;
};

Compiled compile_with_events(const std::string &text, codegen::CompileOptions opts = {}) {
  Compiled out{ir::load_module(text), {}, {}};
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

const std::vector<corpus::Program> &programs() {
  static const auto p = corpus::load_dir(TPDEMINI_CORPUS_DIR);
  return p;
}

} // namespace

// ---- parallel copies ---------------------------------------------------------

// Brute force over every move set on four registers: each register is either
// left alone or assigned from any of the four. Register 4 is the scratch.
TEST(ParallelCopy, AllFunctionsOverFourRegisters) {
  constexpr u8 kScratch = 4;
  u32 checked = 0;
  u32 cycles = 0;
  for (u32 code = 0; code < 5 * 5 * 5 * 5; ++code) {
    std::vector<Move> moves;
    std::array<int, 4> src{};
    u32 c = code;
    for (u8 d = 0; d < 4; ++d) {
      src[d] = static_cast<int>(c % 5) - 1; // -1: not a destination
      c /= 5;
      if (src[d] >= 0) {
        moves.push_back(Move{Loc::r(d), Loc::r(static_cast<u8>(src[d]))});
      }
    }
    std::array<u64, 5> regs{100, 101, 102, 103, 999};
    u32 scratch_writes = 0;
    codegen::parallel_copy(moves, kScratch, std::nullopt, [&](const Loc &dst, const Loc &s) {
      ASSERT_EQ(dst.kind, Loc::Kind::reg);
      ASSERT_EQ(s.kind, Loc::Kind::reg);
      regs[dst.reg] = regs[s.reg];
      scratch_writes += dst.reg == kScratch;
    });
    for (u8 d = 0; d < 4; ++d) {
      const u64 want = src[d] >= 0 ? 100 + static_cast<u64>(src[d]) : 100 + d;
      ASSERT_EQ(regs[d], want) << "move set " << code << " register " << int(d);
    }
    cycles += scratch_writes > 0;
    ++checked;
  }
  EXPECT_EQ(checked, 625u);
  EXPECT_GT(cycles, 0u);
}

TEST(ParallelCopy, SwapCycleUsesScratchOnce) {
  std::vector<std::pair<Loc, Loc>> seq;
  codegen::parallel_copy({Move{Loc::r(0), Loc::r(1)}, Move{Loc::r(1), Loc::r(0)}}, 5,
                         std::nullopt,
                         [&](const Loc &d, const Loc &s) { seq.emplace_back(d, s); });
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0].first, Loc::r(5));
  std::array<u64, 6> regs{10, 11, 0, 0, 0, 0};
  for (const auto &[d, s] : seq) {
    regs[d.reg] = regs[s.reg];
  }
  EXPECT_EQ(regs[0], 11u);
  EXPECT_EQ(regs[1], 10u);
}

// Mixed registers, slots and constants, all permutations of four locations.
TEST(ParallelCopy, PermutationsWithSlotsAndConstants) {
  const std::array<Loc, 4> locs{Loc::r(0), Loc::r(1), Loc::slot(-8), Loc::slot(-16)};
  const auto key = [](const Loc &l) { return l.kind == Loc::Kind::reg ? l.reg : 10 - l.off; };
  std::array<int, 4> perm{0, 1, 2, 3};
  u32 n = 0;
  do {
    for (int with_const = 0; with_const < 2; ++with_const) {
      std::vector<Move> moves;
      for (int i = 0; i < 4; ++i) {
        moves.push_back(Move{locs[i], locs[perm[i]]});
      }
      if (with_const) {
        moves.push_back(Move{Loc::r(2), Loc::imm(77)});
      }
      std::map<int, u64> state;
      for (const auto &l : locs) {
        state[key(l)] = 1000 + key(l);
      }
      state[2] = 5;
      state[key(Loc::r(6))] = 0;
      state[key(Loc::r(7))] = 0;
      const auto before = state;
      codegen::parallel_copy(moves, 6, u8{7}, [&](const Loc &d, const Loc &s) {
        ASSERT_FALSE(d.is_mem() && s.is_mem()) << "memory to memory move";
        state[key(d)] = s.kind == Loc::Kind::constant ? s.value : state[key(s)];
      });
      for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(state[key(locs[i])], before.at(key(locs[perm[i]])));
      }
      if (with_const) {
        EXPECT_EQ(state[2], 77u);
      }
      ++n;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(n, 48u);
}

// ---- allocation policy -------------------------------------------------------

namespace {

/// `%vK = add %x, K` for K = 1..n, all live until a final xor chain.
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

} // namespace

TEST(AllocationPolicy, LowestFreeRegisterFirst) {
  const Compiled c = compile_with_events(wide_function(20));
  // v1..v13 are values 1..13; x sits in r0.
  std::map<u32, u8> home;
  for (const auto &e : c.events[0]) {
    if (e.kind == EventKind::hold && e.value != codegen::kNoValue && !home.count(e.value)) {
      home[e.value] = e.reg;
    }
  }
  EXPECT_EQ(home.at(0), 0);
  for (u32 k = 1; k < kRegs; ++k) {
    EXPECT_EQ(home.at(k), k) << "value " << k;
  }
}

TEST(AllocationPolicy, RoundRobinEviction) {
  const Compiled c = compile_with_events(wide_function(20));
  std::vector<u8> victims;
  for (const auto &e : c.events[0]) {
    if (e.kind == EventKind::evict) {
      victims.push_back(e.reg);
    }
  }
  ASSERT_GE(victims.size(), 7u);
  // x in r0 is an operand of every add, so it is locked and skipped.
  for (u8 k = 0; k < 7; ++k) {
    EXPECT_EQ(victims[k], k + 1) << "eviction " << int(k);
  }
  // The cursor keeps going around instead of restarting at r0.
  for (std::size_t i = 1; i < victims.size(); ++i) {
    EXPECT_NE(victims[i], victims[i - 1]);
  }
  const u64 args[] = {1};
  EXPECT_EQ(vm::Vm(c.image).run(0, args).lo, ir::interpret(c.m, 0, args).lo);
}

TEST(AllocationPolicy, FixedRegistersAreNeverEvicted) {
  // Loop-carried values are pinned; the body needs more registers than left.
  std::string body;
  std::string acc = "%s";
  for (u32 k = 1; k <= 18; ++k) {
    body += "  %t" + std::to_string(k) + " = mul %i, " + std::to_string(k + 2) + "\n";
  }
  for (u32 k = 1; k <= 18; ++k) {
    body += "  %u" + std::to_string(k) + " = add " + acc + ", %t" + std::to_string(k) + "\n";
    acc = "%u" + std::to_string(k);
  }
  const std::string text = "func @f(%n: i64) -> i64 {\nentry:\n  br loop\nloop:\n"
                           "  %i = phi i64 [0, entry], [%i2, loop]\n"
                           "  %s = phi i64 [0, entry], [" + acc + ", loop]\n" + body +
                           "  %i2 = add %i, 1\n  %c = cmp.ult %i2, %n\n"
                           "  condbr %c, loop, done\ndone:\n  ret " + acc + "\n}\n";
  const Compiled c = compile_with_events(text);
  std::array<bool, kRegs> fixed{};
  u32 evictions = 0;
  u32 fixed_holds = 0;
  for (const auto &e : c.events[0]) {
    switch (e.kind) {
    case EventKind::hold:
      fixed[e.reg] = e.text == "fixed";
      fixed_holds += fixed[e.reg];
      break;
    case EventKind::drop: fixed[e.reg] = false; break;
    case EventKind::evict:
      ++evictions;
      EXPECT_FALSE(fixed[e.reg]) << "evicted fixed r" << int(e.reg);
      break;
    default: break;
    }
  }
  EXPECT_GT(fixed_holds, 0u);
  EXPECT_GT(evictions, 0u);
  for (u64 n : {0, 1, 5, 40}) {
    const u64 args[] = {n};
    EXPECT_TRUE(ir::interpret(c.m, 0, args).same_outcome(vm::Vm(c.image).run(0, args), 1));
  }
}

// Session audit over the corpus and a batch of generated modules: no read of
// a free register, no lock surviving its instruction, and every
// multi-predecessor entry has each live value in exactly one home.
TEST(AllocationPolicy, SessionAuditAcrossCorpusAndFuzz) {
  u32 entry_checks = 0;
  const auto audit = [&](const std::string &name, const Compiled &c) {
    for (u32 f = 0; f < c.events.size(); ++f) {
      const auto problems = codegen::audit_events<kRegs>(c.events[f]);
      EXPECT_TRUE(problems.empty()) << name << " @" << c.m.functions[f].name << ": "
                                    << (problems.empty() ? "" : problems.front());
      u32 multi = 0;
      for (const auto &p : ir::predecessors(c.m.functions[f])) {
        std::vector<u32> u = p;
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        multi += u.size() > 1;
      }
      u32 seen = 0;
      for (const auto &e : c.events[f]) {
        seen += e.kind == EventKind::entry_check;
      }
      EXPECT_EQ(seen, multi) << name << " @" << c.m.functions[f].name;
      entry_checks += seen;
    }
  };
  for (const auto &p : programs()) {
    audit(p.name, compile_with_events(p.text));
  }
  seed::GenOptions g;
  g.max_insts = 20;
  for (u64 s = 1; s <= 60; ++s) {
    audit("seed " + std::to_string(s),
          compile_with_events(ir::print_module(seed::generate(s, g))));
  }
  EXPECT_GT(entry_checks, 50u);
}

// ---- single-pass discipline ------------------------------------------------

TEST(CodeBufferDiscipline, PatchDiffsStayInsideFrameAndSaveSlots) {
  u32 functions = 0;
  codegen::CompileOptions opts;
  opts.snapshot_patches = true;
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    seed::SeedAdapter a(m);
    seed::SeedCompiler c(a, seed::default_snippets(), opts);
    for (u32 f = 0; f < m.functions.size(); ++f) {
      c.compile_function(f);
      const auto &buf = c.buffer();
      EXPECT_EQ(buf.violations(), 0u);
      const auto &before = c.pre_finalize_snapshot();
      const auto &after = buf.bytes();
      ASSERT_EQ(before.size(), after.size());
      for (u32 i = 0; i < after.size(); ++i) {
        if (before[i] == after[i]) {
          continue;
        }
        bool allowed = false;
        for (const auto &pp : buf.patch_points()) {
          if (i < pp.offset || i >= pp.offset + pp.length) {
            continue;
          }
          switch (pp.purpose) {
          case visa::PatchPurpose::frame_size:
            allowed = i >= pp.offset + 4; // the immediate only
            break;
          case visa::PatchPurpose::save_slot:
          case visa::PatchPurpose::restore_slot: allowed = true; break;
          case visa::PatchPurpose::branch: break;
          }
        }
        EXPECT_TRUE(allowed) << p.name << " byte " << i;
      }
      ++functions;
    }
  }
  EXPECT_GT(functions, 30u);
}

TEST(CodeBufferDiscipline, SaveAndRestoreAreSymmetric) {
  const ir::Module m = ir::load_module(corpus::read_file(std::string(TPDEMINI_CORPUS_DIR) +
                                                        "/nested3.tir"));
  const auto img = seed::compile_module(m).image;
  std::vector<visa::Inst> code;
  const auto &bytes = img.functions[0].code;
  for (std::size_t o = 0; o < bytes.size(); o += visa::kWordSize) {
    code.push_back(visa::decode(std::span(bytes).subspan(o, visa::kWordSize)));
  }
  std::vector<std::pair<u8, i32>> saves;
  for (u32 i = 3; i < 3 + visa::kNumCalleeSaved && code[i].op == visa::Op::ST; ++i) {
    saves.emplace_back(code[i].b1, code[i].mem().disp);
  }
  ASSERT_FALSE(saves.empty()) << "loop values should use callee-saved registers";
  for (const auto &[r, off] : saves) {
    EXPECT_TRUE(visa::is_callee_saved(r));
  }
  u32 epilogues = 0;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i].op != visa::Op::RET) {
      continue;
    }
    ++epilogues;
    const std::size_t first = i - 2 - visa::kNumCalleeSaved;
    for (std::size_t k = 0; k < saves.size(); ++k) {
      const auto &ld = code[first + k];
      EXPECT_EQ(ld.op, visa::Op::LD);
      EXPECT_EQ(ld.b1, saves[saves.size() - 1 - k].first);
      EXPECT_EQ(ld.mem().disp, saves[saves.size() - 1 - k].second);
    }
  }
  EXPECT_GE(epilogues, 1u);
}

// ---- fusion and folding ----------------------------------------------------

namespace {

std::string golden_path(const std::string &name) {
  return std::string(TPDEMINI_CORPUS_DIR) + "/../golden/" + name + ".dis";
}

std::string disasm(const std::string &name, bool fold = true) {
  const ir::Module m =
      ir::load_module(corpus::read_file(std::string(TPDEMINI_CORPUS_DIR) + "/" + name + ".tir"));
  codegen::CompileOptions o;
  o.fold = fold;
  std::string out;
  for (const auto &f : seed::compile_module(m, o).image.functions) {
    out += "@" + f.name + " frame=" + std::to_string(f.frame_size) + "\n" +
           visa::disassemble_code(f.code);
  }
  return out;
}

u32 count(const std::string &text, const std::string &needle) {
  u32 n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos;
       p = text.find(needle, p + 1)) {
    ++n;
  }
  return n;
}

} // namespace

TEST(Golden, FuseIsCompareAndBranch) {
  const std::string d = disasm("fuse");
  EXPECT_EQ(d, corpus::read_file(golden_path("fuse")));
  EXPECT_EQ(count(d, "set"), 0u);
  EXPECT_EQ(count(d, ": cmp r0, r1\n"), 1u);
  EXPECT_EQ(count(d, ": b."), 1u);
}

TEST(Golden, AddrfoldIsOneFrameRelativeLoad) {
  const std::string d = disasm("addrfold");
  EXPECT_EQ(d, corpus::read_file(golden_path("addrfold")));
  EXPECT_EQ(count(d, ": ld "), 1u);
  EXPECT_EQ(count(d, ": ld r0, [fp - 16]\n"), 1u);
  // The address is never built in a register.
  const std::regex from_fp(R"(: mov r\d+, fp\n)");
  EXPECT_FALSE(std::regex_search(d, from_fp));
  EXPECT_TRUE(std::regex_search(disasm("addrfold", false), from_fp));
}

TEST(Golden, AddimmIsOneAddi) {
  const std::string d = disasm("addimm");
  EXPECT_EQ(d, corpus::read_file(golden_path("addimm")));
  EXPECT_EQ(count(d, ": addi r0, 5\n"), 1u);
  EXPECT_EQ(count(d, ": movi"), 0u);
  EXPECT_EQ(count(disasm("addimm", false), ": movi"), 1u);
}

TEST(Golden, CompareWithOtherUsersIsNotFused) {
  const std::string d = disasm("setcc");
  EXPECT_GE(count(d, ": set."), 4u);
  const std::string x = disasm("crossblock");
  EXPECT_EQ(count(x, ": set.slt"), 1u);
}

// ---- differential ------------------------------------------------------------

TEST(Differential, CorpusExpectations) {
  ASSERT_GE(programs().size(), 25u);
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    const auto img = seed::compile_module(m).image;
    vm::Vm machine(img);
    for (const auto &e : p.expects) {
      const auto fi = img.find(e.func);
      ASSERT_TRUE(fi.has_value()) << p.name << " @" << e.func;
      const u32 parts = ir::type_parts(m.functions[*fi].ret);
      EXPECT_TRUE(ir::interpret(m, *fi, e.args).same_outcome(e.want, parts))
          << p.name << " interpreter @" << e.func;
      EXPECT_TRUE(machine.run(*fi, e.args).same_outcome(e.want, parts))
          << p.name << " vm @" << e.func;
    }
  }
}

TEST(Differential, CorpusAcrossOptions) {
  u64 bytes_fold = 0;
  u64 bytes_plain = 0;
  for (const auto &p : programs()) {
    const ir::Module m = ir::load_module(p.text);
    for (int variant = 0; variant < 3; ++variant) {
      codegen::CompileOptions o;
      o.fold = variant != 1;
      o.fixed_regs = variant != 2;
      for (u32 f = 0; f < m.functions.size(); ++f) {
        const auto d = fuzz::check_module(m, f, 16, 99 + f, seed::default_snippets(), o);
        EXPECT_FALSE(d.has_value()) << p.name << " @" << m.functions[f].name << " variant "
                                    << variant << ": " << d->describe();
      }
      if (variant < 2) {
        u64 &b = variant == 0 ? bytes_fold : bytes_plain;
        for (const auto &f : seed::compile_module(m, o).image.functions) {
          b += f.code.size();
        }
      }
    }
  }
  EXPECT_LT(bytes_fold, bytes_plain);
}

TEST(Differential, NegativeCorpusRejectedWithRule) {
  const auto negs = corpus::load_dir(TPDEMINI_NEGATIVE_DIR);
  ASSERT_GE(negs.size(), 5u);
  for (const auto &p : negs) {
    const std::string rule = corpus::expected_rule(p.text);
    ASSERT_FALSE(rule.empty()) << p.name;
    std::string message;
    try {
      ir::load_module(p.text);
    } catch (const std::exception &e) {
      message = e.what();
    }
    EXPECT_NE(message.find(rule), std::string::npos) << p.name << ": " << message;
  }
}

TEST(Fuzz, SmallRunIsClean) {
  fuzz::FuzzConfig cfg;
  cfg.seed = 1;
  cfg.count = 100;
  const auto rep = fuzz::run_fuzz(cfg, seed::default_snippets());
  EXPECT_FALSE(rep.divergence.has_value())
      << rep.divergence->describe() << "\n" << rep.reproducer;
  EXPECT_EQ(rep.modules, 100u);
  EXPECT_GE(rep.functions, 100u);
}

TEST(Fuzz, SameSeedSameCorpus) {
  fuzz::FuzzConfig cfg;
  cfg.seed = 77;
  cfg.count = 20;
  cfg.vectors = 1;
  const auto a = fuzz::run_fuzz(cfg, seed::default_snippets());
  const auto b = fuzz::run_fuzz(cfg, seed::default_snippets());
  EXPECT_EQ(a.corpus_hash, b.corpus_hash);
  cfg.seed = 78;
  EXPECT_NE(fuzz::run_fuzz(cfg, seed::default_snippets()).corpus_hash, a.corpus_hash);
}

TEST(Fuzz, BrokenEvictionIsCaughtAndReduced) {
  fuzz::FuzzConfig cfg;
  cfg.seed = 1;
  cfg.count = 100;
  cfg.compile.break_eviction = true;
  const auto rep = fuzz::run_fuzz(cfg, seed::default_snippets());
  ASSERT_TRUE(rep.divergence.has_value());
  ASSERT_FALSE(rep.reproducer.empty());
  const ir::Module small = ir::load_module(rep.reproducer);
  const ir::Module orig = seed::generate(*rep.failing_seed, cfg.gen);
  EXPECT_LT(seed::module_size(small), seed::module_size(orig));
  ASSERT_LT(rep.entry, small.functions.size());
  EXPECT_NE(rep.reproducer.find("; entry @" + small.functions[rep.entry].name),
            std::string::npos);
  codegen::CompileOptions broken;
  broken.break_eviction = true;
  EXPECT_TRUE(fuzz::check_module(small, rep.entry, cfg.vectors, rep.vector_seed,
                                 seed::default_snippets(), broken)
                  .has_value());
  // The reduced program is fine with the real eviction.
  EXPECT_FALSE(fuzz::check_module(small, rep.entry, 32, 3, seed::default_snippets()).has_value());
}

// ---- structure -------------------------------------------------------------

TEST(Footprint, AssignmentRecord) {
  EXPECT_LE(sizeof(codegen::Assignment), 16u);
  EXPECT_LE(codegen::assignment_bytes(2) - codegen::assignment_bytes(1), 2u);
  codegen::AssignmentTable t;
  t.reset(std::vector<u8>(1000, 1));
  EXPECT_LE(t.bytes(), 16u * 1000);
}

TEST(Architecture, CoreDoesNotSeeTheIr) {
  const std::filesystem::path root = TPDEMINI_INCLUDE_DIR;
  u32 files = 0;
  for (const char *dir : {"analysis", "codegen", "snippets", "visa", "vm", "adapter"}) {
    for (const auto &e : std::filesystem::directory_iterator(root / "tpdemini" / dir)) {
      const std::string text = corpus::read_file(e.path().string());
      EXPECT_EQ(text.find("tpdemini/ir/"), std::string::npos) << e.path();
      EXPECT_EQ(text.find("tpdemini/seed/"), std::string::npos) << e.path();
      ++files;
    }
  }
  EXPECT_GT(files, 8u);
}
