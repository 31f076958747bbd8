// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
//
// tpdemini: compile, run, disassemble, fuzz and benchmark the seed IR.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "tpdemini/analysis/Analyzer.hpp"
#include "tpdemini/fuzz/Bench.hpp"
#include "tpdemini/fuzz/Differential.hpp"
#include "tpdemini/ir/Validator.hpp"
#include "tpdemini/visa/Image.hpp"

using namespace tpdemini;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CliError("cannot read " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(data.data(), static_cast<std::streamsize>(data.size()))) {
    throw CliError("cannot write " + path);
  }
}

bool is_image(const std::string &path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".tvo";
}

ir::Module load_ir(const std::string &path) {
  try {
    return ir::load_module(read_file(path));
  } catch (const ir::ParseError &e) {
    throw CliError(path + ":" + e.what());
  } catch (const ir::ValidationError &e) {
    throw CliError(path + ": " + e.what());
  }
}

/// Compiles a .tir file or reads a .tvo image.
visa::ModuleImage load_image(const std::string &path, const codegen::CompileOptions &opts,
                             const ir::Module *m = nullptr) {
  if (is_image(path)) {
    const std::string data = read_file(path);
    try {
      return visa::read_image(std::span(reinterpret_cast<const u8 *>(data.data()), data.size()));
    } catch (const visa::ImageError &e) {
      throw CliError(path + ": " + e.what());
    }
  }
  return seed::compile_module(*m, opts).image;
}

struct CompileArgs {
  std::string input;
  std::string output;
  bool stats = false;
  bool dump_analysis = false;
  bool no_fold = false;
  bool no_fixed = false;
  bool events = false;
};

int cmd_compile(const CompileArgs &a) {
  const ir::Module m = load_ir(a.input);
  codegen::CompileOptions opts;
  opts.fold = !a.no_fold;
  opts.fixed_regs = !a.no_fixed;
  opts.record_events = a.events;
  if (a.dump_analysis) {
    seed::SeedAdapter ad(m);
    analysis::Analyzer<seed::SeedAdapter> an;
    for (u32 f = 0; f < m.functions.size(); ++f) {
      ad.prepare(f);
      an.run(ad);
      std::cout << "function @" << m.functions[f].name << '\n' << an.dump(ad);
    }
  }
  seed::SeedAdapter ad(m);
  seed::SeedCompiler c(ad, seed::default_snippets(), opts);
  visa::ModuleImage img;
  std::vector<codegen::FunctionStats> stats;
  for (u32 f = 0; f < m.functions.size(); ++f) {
    c.compile_function(f);
    img.functions.push_back(c.take_image(m.functions[f].name));
    stats.push_back(c.stats());
    if (a.events) {
      for (const auto &e : c.events()) {
        std::cout << e.to_string() << '\n';
      }
    }
  }
  if (a.stats) {
    std::cout << std::left << std::setw(16) << "function" << std::right << std::setw(8)
              << "insts" << std::setw(8) << "bytes" << std::setw(8) << "spills"
              << std::setw(12) << "ns" << '\n';
    for (u32 f = 0; f < m.functions.size(); ++f) {
      std::cout << std::left << std::setw(16) << ("@" + m.functions[f].name) << std::right
                << std::setw(8) << stats[f].insts << std::setw(8)
                << img.functions[f].code.size() << std::setw(8) << stats[f].spills
                << std::setw(12) << stats[f].compile_ns << '\n';
    }
  }
  if (!a.output.empty()) {
    const auto bytes = visa::write_image(img);
    write_file(a.output, std::string_view(reinterpret_cast<const char *>(bytes.data()),
                                          bytes.size()));
  }
  return 0;
}

struct RunArgs {
  std::string input;
  std::string func;
  std::vector<std::string> args;
  bool trace = false;
  bool interp = false;
  bool wide = false;
};

int cmd_run(const RunArgs &a) {
  std::vector<u64> words;
  for (const auto &s : a.args) {
    try {
      std::size_t used = 0;
      words.push_back(std::stoull(s, &used, 0));
      if (used != s.size()) {
        throw std::invalid_argument(s);
      }
    } catch (const std::exception &) {
      throw CliError("bad argument '" + s + "'");
    }
  }
  std::optional<ir::Module> m;
  if (!is_image(a.input)) {
    m = load_ir(a.input);
  } else if (a.interp) {
    throw CliError("--interp needs a .tir input");
  }
  const visa::ModuleImage img = load_image(a.input, {}, m ? &*m : nullptr);
  const std::string name = a.func.empty() ? img.functions.at(0).name : a.func;
  const auto idx = img.find(name);
  if (!idx) {
    throw CliError("no function @" + name);
  }
  u32 parts = a.wide ? 2 : 1;
  if (m) {
    const auto &f = m->functions[*idx];
    parts = ir::type_parts(f.ret);
    if (words.size() != f.param_slot_count()) {
      throw CliError("@" + name + " takes " + std::to_string(f.param_slot_count()) +
                     " argument words, got " + std::to_string(words.size()));
    }
  }
  ExecResult r;
  if (a.interp) {
    r = ir::interpret(*m, *idx, words);
  } else {
    vm::VmOptions vo;
    if (a.trace) {
      vo.trace = &std::cerr;
    }
    vm::Vm machine(img, vo);
    try {
      r = machine.run(*idx, words);
    } catch (const vm::VmError &e) {
      throw CliError(e.what());
    }
  }
  if (!r.ok()) {
    std::cout << "trap " << trap_name(r.trap) << '\n';
  } else if (parts == 2) {
    std::cout << '(' << r.lo << ", " << r.hi << ")\n";
  } else if (parts == 1) {
    std::cout << r.lo << '\n';
  } else {
    std::cout << "void\n";
  }
  return 0;
}

int cmd_disasm(const std::string &input, bool no_fold) {
  std::optional<ir::Module> m;
  if (!is_image(input)) {
    m = load_ir(input);
  }
  codegen::CompileOptions opts;
  opts.fold = !no_fold;
  const visa::ModuleImage img = load_image(input, opts, m ? &*m : nullptr);
  for (const auto &f : img.functions) {
    std::cout << '@' << f.name << " frame=" << f.frame_size << '\n'
              << visa::disassemble_code(f.code);
  }
  return 0;
}

struct FuzzArgs {
  fuzz::FuzzConfig cfg;
  std::string out = "fuzz-repro.tir";
};

int cmd_fuzz(const FuzzArgs &a) {
  const auto rep = fuzz::run_fuzz(a.cfg, seed::default_snippets());
  std::cout << "modules " << rep.modules << " functions " << rep.functions << " runs "
            << rep.runs << " hash " << std::hex << std::setw(16) << std::setfill('0')
            << rep.corpus_hash << std::dec << std::setfill(' ') << '\n';
  if (rep.divergence) {
    write_file(a.out, "; seed " + std::to_string(*rep.failing_seed) + "\n; " +
                          rep.divergence->describe() + "\n" + rep.reproducer);
    std::cerr << "error: divergence at seed " << *rep.failing_seed << ": "
              << rep.divergence->describe() << " (reproducer in " << a.out << ")\n";
    return 1;
  }
  std::cout << "0 divergences\n";
  return 0;
}

int cmd_bench(const std::vector<u32> &sizes) {
  const auto &lib = seed::default_snippets();
  std::vector<fuzz::BenchRow> rows;
  std::cout << std::setw(8) << "n" << std::setw(14) << "seconds" << std::setw(12) << "ns/inst"
            << std::setw(10) << "bytes" << '\n';
  for (u32 n : sizes) {
    // Correctness first: the compiled chain must agree with the closed form.
    const ir::Module m = ir::parse_module(fuzz::chain_text(n));
    const auto img = seed::compile_module(m, lib).image;
    const u64 args[] = {0x1234567};
    const ExecResult r = vm::Vm(img).run(0, args);
    if (!r.ok() || r.lo != fuzz::chain_value(n, args[0])) {
      throw CliError("chain of " + std::to_string(n) + " computed a wrong value");
    }
    rows.push_back(fuzz::bench_chain(n, fuzz::bench_reps(n), lib));
    const auto &row = rows.back();
    std::cout << std::setw(8) << n << std::setw(14) << std::fixed << std::setprecision(6)
              << row.seconds << std::setw(12) << std::setprecision(1)
              << row.seconds * 1e9 / n << std::setw(10) << row.code_bytes << '\n';
  }
  if (rows.size() >= 2) {
    const double ratio = rows.back().seconds / rows.front().seconds;
    const double size_ratio = static_cast<double>(rows.back().n) / rows.front().n;
    std::cout << "ratio " << std::setprecision(1) << ratio << " for size ratio "
              << size_ratio << '\n';
    if (ratio > 3 * size_ratio) {
      throw CliError("compile time grows faster than linear (ratio " +
                     std::to_string(ratio) + ")");
    }
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"tpdemini: single-pass compiler for the seed IR"};
  app.require_subcommand(1);

  CompileArgs ca;
  auto *compile = app.add_subcommand("compile", "compile a .tir file to a .tvo image");
  compile->add_option("input", ca.input, "input .tir")->required();
  compile->add_option("-o,--output", ca.output, "output .tvo");
  compile->add_flag("--stats", ca.stats, "per-function statistics");
  compile->add_flag("--dump-analysis", ca.dump_analysis, "print block layout, loops and liveness");
  compile->add_flag("--no-fold", ca.no_fold, "disable immediate and address folding");
  compile->add_flag("--no-fixed-regs", ca.no_fixed, "do not pin loop values");
  compile->add_flag("--events", ca.events, "print the register allocation event log");

  RunArgs ra;
  auto *run = app.add_subcommand("run", "run a function of a .tir or .tvo file");
  run->add_option("input", ra.input, "input .tir or .tvo")->required();
  run->add_option("args", ra.args, "argument words (i128 takes two)");
  run->add_option("-f,--func", ra.func, "function name (default: first)");
  run->add_flag("--trace", ra.trace, "print executed instructions to stderr");
  run->add_flag("--interp", ra.interp, "use the IR interpreter instead of the VM");
  run->add_flag("--wide", ra.wide, "print both result words (.tvo input)");

  std::string dis_in;
  bool dis_no_fold = false;
  auto *disasm = app.add_subcommand("disasm", "disassemble a .tir or .tvo file");
  disasm->add_option("input", dis_in, "input .tir or .tvo")->required();
  disasm->add_flag("--no-fold", dis_no_fold, "disable folding when compiling .tir");

  FuzzArgs fa;
  auto *fz = app.add_subcommand("fuzz", "differential fuzzing of interpreter against VM");
  fz->add_option("--seed", fa.cfg.seed, "first seed");
  fz->add_option("--count", fa.cfg.count, "modules to generate");
  fz->add_option("--vectors", fa.cfg.vectors, "argument vectors per function");
  fz->add_option("--max-blocks", fa.cfg.gen.max_blocks, "blocks per function");
  fz->add_option("--max-insts", fa.cfg.gen.max_insts, "instructions per block");
  fz->add_flag("--irreducible", fa.cfg.gen.irreducible, "add side entries into loops");
  fz->add_flag("--break-eviction", fa.cfg.compile.break_eviction,
               "test hook: evictions drop dirty values");
  fz->add_option("-o,--out", fa.out, "reproducer path");

  std::vector<u32> sizes{1000, 10000, 100000};
  auto *bench = app.add_subcommand("bench", "compile-time scaling on straight-line chains");
  bench->add_option("--sizes", sizes, "chain lengths, smallest first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*compile) {
      return cmd_compile(ca);
    }
    if (*run) {
      return cmd_run(ra);
    }
    if (*disasm) {
      return cmd_disasm(dis_in, dis_no_fold);
    }
    if (*fz) {
      return cmd_fuzz(fa);
    }
    if (*bench) {
      return cmd_bench(sizes);
    }
  } catch (const std::exception &e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 1;
}
