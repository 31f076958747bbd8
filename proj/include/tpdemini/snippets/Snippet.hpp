// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tpdemini/visa/Isa.hpp"

/// Snippet definitions: post-register-allocation instruction templates in a
/// small text format, and the plans built from them.
namespace tpdemini::snippets {

class SnippetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class InKind : u8 { gp, imm };

struct TInput {
  std::string name;
  InKind kind = InKind::gp;
  bool kill = false;
};

struct TOperand {
  enum class Kind : u8 { none, reg, imm, mem };
  Kind kind = Kind::none;
  /// Template register (reg, mem base, or an imm input used as a hole).
  int treg = -1;
  i64 imm = 0;
  i32 disp = 0;
};

enum class Form : u8 {
  alu,    // d = OP tie(x), y
  divmod, // d:rK = DIVMOD y
  mov,    // d = MOV x
  movi,   // d = MOVI imm
  addi,   // d = ADDI tie(x), imm
  cmp,    // CMP x, y
  cmpi,   // CMPI x, imm
  ld,     // d = LD [x + disp]
  st,     // ST [x + disp], y
  setcc,  // d = SET.cc
  bcc,    // B.cc label
  jmp,    // JMP label
  label,  // label:
};

struct TInst {
  Form form = Form::alu;
  visa::Op op = visa::Op::NOP;
  visa::Cond cond = visa::Cond::eq;
  int dst = -1;
  int dst_fixed = -1;
  TOperand a;
  TOperand b;
  int label = -1;
  int line = 0;

  bool reads(int t) const {
    const auto uses = [&](const TOperand &o) {
      return (o.kind == TOperand::Kind::reg || o.kind == TOperand::Kind::mem ||
              o.kind == TOperand::Kind::imm) &&
             o.treg == t;
    };
    return uses(a) || uses(b);
  }
};

struct SnippetDef {
  std::string name;
  /// Inputs are template registers 0..inputs.size()-1.
  std::vector<TInput> inputs;
  std::vector<int> outputs;
  std::vector<std::string> tregs;
  /// `fix rK = in`
  std::vector<std::pair<u8, int>> fix_in;
  /// `fix-out rK`
  std::vector<u8> fix_out;
  std::vector<TInst> body;
  std::vector<std::string> labels;
  bool multi_block = false;
};

enum class Candidate : u8 { imm_addi, imm_cmpi, fold_addr, reg_form };

inline const char *candidate_name(Candidate c) {
  switch (c) {
  case Candidate::imm_addi: return "ADDI-if-const-fits";
  case Candidate::imm_cmpi: return "CMPI-if-const-fits";
  case Candidate::fold_addr: return "fold-addr";
  case Candidate::reg_form: return "default";
  }
  return "?";
}

struct EncoderPlan {
  SnippetDef def;
  /// Every fixed register of the body, in body order, deduplicated.
  std::vector<u8> prelude;
  /// Ordered alternatives per body instruction; the last is the default.
  std::vector<std::vector<Candidate>> candidates;
  /// Per template register: last body index reading it (outputs: body size).
  std::vector<int> last_use;
  /// Materialize every input before the body (branches or flag readers).
  bool upfront = false;
};

namespace detail {

class SnipLexer {
public:
  explicit SnipLexer(std::string_view s) : s_(s) {}

  [[noreturn]] void fail(const std::string &msg) const {
    throw SnippetError("line " + std::to_string(line_) + ": " + msg);
  }

  int line() const { return line_; }

  /// Skips blanks and comments. Newlines are significant when `nl` is set.
  void ws(bool nl = true) {
    while (p_ < s_.size()) {
      const char c = s_[p_];
      if (c == '#') {
        while (p_ < s_.size() && s_[p_] != '\n') {
          ++p_;
        }
      } else if (c == '\n') {
        if (!nl) {
          return;
        }
        ++line_;
        ++p_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++p_;
      } else {
        return;
      }
    }
  }

  bool eof() {
    ws();
    return p_ >= s_.size();
  }

  char peek(bool nl = true) {
    ws(nl);
    return p_ < s_.size() ? s_[p_] : '\0';
  }

  bool accept(char c, bool nl = true) {
    if (peek(nl) == c) {
      ++p_;
      return true;
    }
    return false;
  }

  bool accept_str(std::string_view w, bool nl = true) {
    ws(nl);
    if (s_.substr(p_, w.size()) == w) {
      p_ += w.size();
      return true;
    }
    return false;
  }

  void expect(char c, bool nl = true) {
    if (!accept(c, nl)) {
      fail(std::string("expected '") + c + "'");
    }
  }

  std::string ident(bool nl = true) {
    ws(nl);
    const std::size_t b = p_;
    while (p_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[p_])) || s_[p_] == '_' ||
            s_[p_] == '.' || s_[p_] == '-' || s_[p_] == '%')) {
      ++p_;
    }
    if (b == p_) {
      fail("expected identifier");
    }
    return std::string(s_.substr(b, p_ - b));
  }

  bool at_integer(bool nl = false) {
    ws(nl);
    std::size_t q = p_;
    if (q < s_.size() && s_[q] == '#') {
      ++q;
    }
    if (q < s_.size() && (s_[q] == '-' || s_[q] == '+')) {
      ++q;
    }
    return q < s_.size() && std::isdigit(static_cast<unsigned char>(s_[q]));
  }

  i64 integer() {
    ws(false);
    accept('#', false);
    bool neg = false;
    if (p_ < s_.size() && (s_[p_] == '-' || s_[p_] == '+')) {
      neg = s_[p_] == '-';
      ++p_;
    }
    i64 v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + p_, s_.data() + s_.size(), v);
    if (ec != std::errc()) {
      fail("expected integer");
    }
    p_ = static_cast<std::size_t>(ptr - s_.data());
    return neg ? -v : v;
  }

  /// End of a statement: newline, ';' or '}' (not consumed).
  bool at_stmt_end() {
    ws(false);
    return p_ >= s_.size() || s_[p_] == '\n' || s_[p_] == ';' || s_[p_] == '}';
  }

  std::size_t pos() const { return p_; }
  void seek(std::size_t p) { p_ = p; }

private:
  std::string_view s_;
  std::size_t p_ = 0;
  int line_ = 1;
};

inline std::optional<u8> parse_phys(const std::string &w) {
  if (w.size() < 2 || w[0] != 'r') {
    return std::nullopt;
  }
  u32 v = 0;
  auto [ptr, ec] = std::from_chars(w.data() + 1, w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size() || v >= visa::kNumAllocatable) {
    return std::nullopt;
  }
  return static_cast<u8>(v);
}

inline std::optional<visa::Cond> parse_cond(std::string_view s) {
  for (u8 c = 0; c < visa::kNumConds; ++c) {
    if (s == visa::cond_name(static_cast<visa::Cond>(c))) {
      return static_cast<visa::Cond>(c);
    }
  }
  return std::nullopt;
}

inline std::optional<visa::Op> alu_op(std::string_view m) {
  static const std::map<std::string_view, visa::Op> ops = {
      {"ADD", visa::Op::ADD}, {"SUB", visa::Op::SUB}, {"MUL", visa::Op::MUL},
      {"AND", visa::Op::AND}, {"OR", visa::Op::OR},   {"XOR", visa::Op::XOR},
      {"SHL", visa::Op::SHL}, {"SHR", visa::Op::SHR}, {"ADC", visa::Op::ADC}};
  const auto it = ops.find(m);
  return it == ops.end() ? std::nullopt : std::optional(it->second);
}

class SnipParser {
public:
  explicit SnipParser(std::string_view text) : lx_(text) {}

  std::vector<SnippetDef> parse() {
    std::vector<SnippetDef> out;
    while (!lx_.eof()) {
      if (lx_.ident() != "snippet") {
        lx_.fail("expected 'snippet'");
      }
      SnippetDef d = parse_def();
      for (const auto &o : out) {
        if (o.name == d.name) {
          lx_.fail("duplicate snippet name '" + d.name + "'");
        }
      }
      out.push_back(std::move(d));
    }
    return out;
  }

private:
  SnippetDef parse_def() {
    SnippetDef d;
    d.name = lx_.ident();
    defined_.clear();
    lx_.expect('(');
    if (!lx_.accept(')')) {
      do {
        TInput in;
        in.name = lx_.ident();
        if (lx_.accept(':')) {
          const std::string bank = lx_.ident();
          if (bank == "gp") {
            in.kind = InKind::gp;
          } else if (bank == "imm") {
            in.kind = InKind::imm;
          } else {
            lx_.fail("unknown operand bank '" + bank + "'");
          }
          if (lx_.peek() == 'k') {
            const std::size_t save = lx_.pos();
            if (lx_.ident() == "kill") {
              in.kill = true;
            } else {
              lx_.seek(save);
            }
          }
        }
        for (const auto &o : d.inputs) {
          if (o.name == in.name) {
            lx_.fail("duplicate input name '" + in.name + "'");
          }
        }
        d.tregs.push_back(in.name);
        d.inputs.push_back(std::move(in));
        defined_.push_back(true);
      } while (lx_.accept(','));
      lx_.expect(')');
    }
    if (!lx_.accept_str("->")) {
      lx_.fail("expected '->'");
    }
    std::vector<std::string> outs;
    lx_.expect('(');
    if (!lx_.accept(')')) {
      do {
        outs.push_back(lx_.ident());
      } while (lx_.accept(','));
      lx_.expect(')');
    }
    lx_.expect('{');
    std::vector<std::pair<int, int>> label_uses; // (label, line)
    while (!lx_.accept('}')) {
      if (lx_.accept(';')) {
        continue;
      }
      parse_stmt(d, label_uses);
    }
    for (const auto &[l, line] : label_uses) {
      bool bound = false;
      for (const auto &ti : d.body) {
        bound |= ti.form == Form::label && ti.label == l;
      }
      if (!bound) {
        throw SnippetError("line " + std::to_string(line) + ": undefined label '" +
                           d.labels[l] + "'");
      }
    }
    for (const auto &o : outs) {
      const int t = find(d, o);
      if (t < 0 || !defined_[t]) {
        lx_.fail("output '" + o + "' is never defined in " + d.name);
      }
      d.outputs.push_back(t);
    }
    return d;
  }

  int find(const SnippetDef &d, const std::string &n) const {
    for (std::size_t i = 0; i < d.tregs.size(); ++i) {
      if (d.tregs[i] == n) {
        return static_cast<int>(i);
      }
    }
    return -1;
  }

  int use(SnippetDef &d, const std::string &n) {
    const int t = find(d, n);
    if (t < 0 || !defined_[t]) {
      lx_.fail("undefined template register '" + n + "'");
    }
    return t;
  }

  int def(SnippetDef &d, const std::string &n) {
    int t = find(d, n);
    if (t < 0) {
      d.tregs.push_back(n);
      defined_.push_back(false);
      t = static_cast<int>(d.tregs.size() - 1);
    }
    if (t < static_cast<int>(d.inputs.size())) {
      lx_.fail("cannot redefine input '" + n + "'");
    }
    return t;
  }

  int label_id(SnippetDef &d, const std::string &n) {
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
      if (d.labels[i] == n) {
        return static_cast<int>(i);
      }
    }
    d.labels.push_back(n);
    return static_cast<int>(d.labels.size() - 1);
  }

  TOperand reg_operand(SnippetDef &d) {
    TOperand o;
    o.kind = TOperand::Kind::reg;
    o.treg = use(d, lx_.ident(false));
    if (d.inputs.size() > static_cast<std::size_t>(o.treg) &&
        d.inputs[o.treg].kind == InKind::imm) {
      lx_.fail("immediate input '" + d.tregs[o.treg] + "' used as a register");
    }
    return o;
  }

  TOperand imm_operand(SnippetDef &d) {
    TOperand o;
    o.kind = TOperand::Kind::imm;
    if (lx_.at_integer()) {
      o.imm = lx_.integer();
      if (!visa::fits_i32(o.imm)) {
        lx_.fail("immediate out of range");
      }
      return o;
    }
    o.treg = use(d, lx_.ident(false));
    if (o.treg >= static_cast<int>(d.inputs.size()) ||
        d.inputs[o.treg].kind != InKind::imm) {
      lx_.fail("'" + d.tregs[o.treg] + "' is not an immediate input");
    }
    return o;
  }

  TOperand mem_operand(SnippetDef &d) {
    lx_.expect('[', false);
    TOperand o;
    o.kind = TOperand::Kind::mem;
    o.treg = use(d, lx_.ident(false));
    if (lx_.accept('+', false)) {
      o.disp = static_cast<i32>(lx_.integer());
    } else if (lx_.accept('-', false)) {
      o.disp = -static_cast<i32>(lx_.integer());
    }
    lx_.expect(']', false);
    return o;
  }

  /// `tie(x)` or plain `x` as the first ALU source.
  TOperand tied_operand(SnippetDef &d, bool &tied) {
    const std::size_t save = lx_.pos();
    if (lx_.ident(false) == "tie") {
      lx_.expect('(', false);
      TOperand o = reg_operand(d);
      lx_.expect(')', false);
      tied = true;
      return o;
    }
    lx_.seek(save);
    tied = false;
    return reg_operand(d);
  }

  void parse_stmt(SnippetDef &d, std::vector<std::pair<int, int>> &label_uses) {
    const int line = lx_.line();
    const std::string first = lx_.ident();
    if (first == "fix") {
      const auto r = parse_phys(lx_.ident(false));
      if (!r) {
        lx_.fail("fix needs a target register");
      }
      lx_.expect('=', false);
      const int t = use(d, lx_.ident(false));
      if (t >= static_cast<int>(d.inputs.size())) {
        lx_.fail("fix binds an input");
      }
      d.fix_in.emplace_back(*r, t);
      return end_stmt();
    }
    if (first == "fix-out") {
      const auto r = parse_phys(lx_.ident(false));
      if (!r) {
        lx_.fail("fix-out needs a target register");
      }
      d.fix_out.push_back(*r);
      return end_stmt();
    }
    TInst ti;
    ti.line = line;
    std::string mnemonic = first;
    if (lx_.accept(':', false)) {
      if (lx_.at_stmt_end()) {
        ti.form = Form::label;
        ti.label = label_id(d, first);
        for (const auto &b : d.body) {
          if (b.form == Form::label && b.label == ti.label) {
            lx_.fail("label '" + first + "' bound twice");
          }
        }
        d.multi_block = true;
        d.body.push_back(ti);
        return;
      }
      const auto r = parse_phys(lx_.ident(false));
      if (!r) {
        lx_.fail("expected a target register after ':'");
      }
      ti.dst_fixed = *r;
      lx_.expect('=', false);
      ti.dst = -2; // resolved after the sources
      mnemonic = lx_.ident(false);
    } else if (lx_.accept('=', false)) {
      ti.dst = -2;
      mnemonic = lx_.ident(false);
    }
    const bool has_dst = ti.dst == -2;
    const std::string dst_name = first;
    const auto need_dst = [&](bool want) {
      if (want != has_dst) {
        lx_.fail(mnemonic + (want ? " needs a destination" : " has no destination"));
      }
    };
    bool tied = false;
    if (const auto op = alu_op(mnemonic)) {
      need_dst(true);
      ti.form = Form::alu;
      ti.op = *op;
      ti.a = tied_operand(d, tied);
      lx_.expect(',', false);
      ti.b = reg_operand(d);
    } else if (mnemonic == "DIVMOD") {
      need_dst(true);
      ti.form = Form::divmod;
      ti.op = visa::Op::DIVMOD;
      if (ti.dst_fixed != 0 && ti.dst_fixed != 1) {
        lx_.fail("DIVMOD result must be fixed to r0 or r1");
      }
      ti.b = reg_operand(d);
    } else if (mnemonic == "MOV") {
      need_dst(true);
      ti.form = Form::mov;
      ti.op = visa::Op::MOV;
      if (lx_.accept_str("tie", false)) {
        lx_.fail("tie to non-input operand of MOV");
      }
      ti.a = reg_operand(d);
    } else if (mnemonic == "MOVI") {
      need_dst(true);
      ti.form = Form::movi;
      ti.op = visa::Op::MOVI;
      ti.b = imm_operand(d);
    } else if (mnemonic == "ADDI") {
      need_dst(true);
      ti.form = Form::addi;
      ti.op = visa::Op::ADDI;
      ti.a = tied_operand(d, tied);
      lx_.expect(',', false);
      ti.b = imm_operand(d);
    } else if (mnemonic == "CMP") {
      need_dst(false);
      ti.form = Form::cmp;
      ti.op = visa::Op::CMP;
      ti.a = reg_operand(d);
      lx_.expect(',', false);
      ti.b = reg_operand(d);
    } else if (mnemonic == "CMPI") {
      need_dst(false);
      ti.form = Form::cmpi;
      ti.op = visa::Op::CMPI;
      ti.a = reg_operand(d);
      lx_.expect(',', false);
      ti.b = imm_operand(d);
    } else if (mnemonic == "LD") {
      need_dst(true);
      ti.form = Form::ld;
      ti.op = visa::Op::LD;
      ti.a = mem_operand(d);
    } else if (mnemonic == "ST") {
      need_dst(false);
      ti.form = Form::st;
      ti.op = visa::Op::ST;
      ti.a = mem_operand(d);
      lx_.expect(',', false);
      ti.b = reg_operand(d);
    } else if (mnemonic.rfind("SET.", 0) == 0) {
      need_dst(true);
      const auto c = parse_cond(mnemonic.substr(4));
      if (!c) {
        lx_.fail("unknown condition in " + mnemonic);
      }
      ti.form = Form::setcc;
      ti.op = visa::Op::SETCC;
      ti.cond = *c;
    } else if (mnemonic.rfind("B.", 0) == 0) {
      need_dst(false);
      const auto c = parse_cond(mnemonic.substr(2));
      if (!c) {
        lx_.fail("unknown condition in " + mnemonic);
      }
      ti.form = Form::bcc;
      ti.op = visa::Op::BCC;
      ti.cond = *c;
      ti.label = label_id(d, lx_.ident(false));
      label_uses.emplace_back(ti.label, line);
      d.multi_block = true;
    } else if (mnemonic == "JMP") {
      need_dst(false);
      ti.form = Form::jmp;
      ti.op = visa::Op::JMP;
      ti.label = label_id(d, lx_.ident(false));
      label_uses.emplace_back(ti.label, line);
      d.multi_block = true;
    } else {
      lx_.fail("unknown opcode '" + mnemonic + "'");
    }
    if (tied && ti.form != Form::alu && ti.form != Form::addi) {
      lx_.fail("tie on a non two-address instruction");
    }
    if (has_dst) {
      ti.dst = def(d, dst_name);
      defined_[ti.dst] = true;
    }
    d.body.push_back(ti);
    end_stmt();
  }

  void end_stmt() {
    if (!lx_.at_stmt_end()) {
      lx_.fail("unexpected text after statement");
    }
    lx_.accept(';', false);
  }

  SnipLexer lx_;
  std::vector<bool> defined_;
};

inline bool reads_flags(const TInst &t) { return t.form == Form::bcc || t.op == visa::Op::ADC; }
inline bool writes_flags(const TInst &t) {
  return t.form == Form::cmp || t.form == Form::cmpi ||
         (t.form == Form::alu && visa::sets_flags(t.op));
}

} // namespace detail

inline std::vector<SnippetDef> parse_snippets(std::string_view text) {
  return detail::SnipParser(text).parse();
}

inline EncoderPlan build_plan(SnippetDef def) {
  EncoderPlan p;
  const auto add_fixed = [&](u8 r) {
    if (std::find(p.prelude.begin(), p.prelude.end(), r) == p.prelude.end()) {
      p.prelude.push_back(r);
    }
  };
  // Body order: fixed inputs come first, then fixed outputs and clobbers.
  for (const auto &[r, t] : def.fix_in) {
    add_fixed(r);
  }
  for (const auto &ti : def.body) {
    if (ti.dst_fixed >= 0) {
      add_fixed(static_cast<u8>(ti.dst_fixed));
    }
  }
  for (u8 r : def.fix_out) {
    add_fixed(r);
  }
  std::sort(p.prelude.begin(), p.prelude.end());
  p.last_use.assign(def.tregs.size(), -1);
  for (std::size_t i = 0; i < def.body.size(); ++i) {
    const TInst &ti = def.body[i];
    for (int t = 0; t < static_cast<int>(def.tregs.size()); ++t) {
      if (ti.reads(t)) {
        p.last_use[t] = static_cast<int>(i);
      }
    }
    // A tied redefinition reads its own old value too.
    if (ti.dst >= 0 && (ti.form == Form::alu || ti.form == Form::addi) && ti.a.treg == ti.dst) {
      p.last_use[ti.dst] = static_cast<int>(i);
    }
  }
  for (int o : def.outputs) {
    p.last_use[o] = static_cast<int>(def.body.size());
  }
  bool flag_reader = false;
  for (const auto &ti : def.body) {
    flag_reader |= detail::reads_flags(ti);
  }
  p.upfront = def.multi_block || flag_reader;
  for (std::size_t i = 0; i < def.body.size(); ++i) {
    const TInst &ti = def.body[i];
    std::vector<Candidate> c;
    if (ti.form == Form::alu && ti.op == visa::Op::ADD) {
      // ADDI leaves the flags alone; only usable if nobody reads them.
      bool read_later = false;
      for (std::size_t k = i + 1; k < def.body.size(); ++k) {
        if (detail::reads_flags(def.body[k])) {
          read_later = true;
          break;
        }
        if (detail::writes_flags(def.body[k])) {
          break;
        }
      }
      if (!read_later) {
        c.push_back(Candidate::imm_addi);
      }
    } else if (ti.form == Form::cmp) {
      c.push_back(Candidate::imm_cmpi);
    } else if (ti.form == Form::ld || ti.form == Form::st) {
      c.push_back(Candidate::fold_addr);
    }
    c.push_back(Candidate::reg_form);
    p.candidates.push_back(std::move(c));
  }
  p.def = std::move(def);
  return p;
}

/// Named plans loaded from a snippet file.
class SnippetLibrary {
public:
  SnippetLibrary() = default;
  explicit SnippetLibrary(std::string_view text) {
    for (auto &d : parse_snippets(text)) {
      std::string name = d.name;
      plans_.emplace(std::move(name), build_plan(std::move(d)));
    }
  }

  const EncoderPlan *find(std::string_view name) const {
    const auto it = plans_.find(std::string(name));
    return it == plans_.end() ? nullptr : &it->second;
  }

  const EncoderPlan &get(std::string_view name) const {
    const EncoderPlan *p = find(name);
    if (!p) {
      throw SnippetError("snippet '" + std::string(name) + "' is not defined");
    }
    return *p;
  }

  std::size_t size() const { return plans_.size(); }

private:
  std::map<std::string, EncoderPlan> plans_;
};

} // namespace tpdemini::snippets
