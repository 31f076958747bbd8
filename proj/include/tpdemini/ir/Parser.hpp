// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <climits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tpdemini/ir/Ir.hpp"

namespace tpdemini::ir {

class ParseError : public std::runtime_error {
public:
  ParseError(u32 line, u32 column, const std::string &msg)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) +
                           ": " + msg),
        line(line), column(column), message(msg) {}

  u32 line;
  u32 column;
  std::string message;
};

/// Checks the incoming list of `phi` against the block's distinct
/// predecessors. Returns the violated rule, if any.
inline std::optional<std::string>
phi_structure_violation(const Phi &phi, std::span<const u32> preds) {
  for (std::size_t i = 0; i < phi.incoming.size(); ++i) {
    const auto &in = phi.incoming[i];
    if (std::find(preds.begin(), preds.end(), in.block) == preds.end()) {
      return "phi incoming from non-predecessor";
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (phi.incoming[j].block == in.block) {
        return phi.incoming[j].value == in.value ? "phi duplicate incoming"
                                                 : "phi multi-edge conflict";
      }
    }
  }
  for (u32 p : preds) {
    const bool found =
        std::any_of(phi.incoming.begin(), phi.incoming.end(),
                    [p](const PhiIncoming &in) { return in.block == p; });
    if (!found) {
      return "phi incomplete";
    }
  }
  return std::nullopt;
}

namespace detail {

struct Token {
  enum class Kind : u8 { ident, global, local, integer, punct, eof };
  Kind kind = Kind::eof;
  std::string text;
  u64 value = 0;
  bool negative = false;
  u32 line = 1;
  u32 column = 1;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token tok;
      tok.line = line_;
      tok.column = col_;
      if (pos_ >= src_.size()) {
        out.push_back(tok);
        return out;
      }
      const char c = src_[pos_];
      if (c == '@' || c == '%') {
        advance();
        tok.kind = c == '@' ? Token::Kind::global : Token::Kind::local;
        tok.text = ident_chars();
        if (tok.text.empty()) {
          throw ParseError(tok.line, tok.column,
                           std::string("expected name after '") + c + "'");
        }
      } else if (is_digit(c) ||
                 (c == '-' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) {
        tok.kind = Token::Kind::integer;
        if (c == '-') {
          tok.negative = true;
          advance();
        }
        number(tok);
      } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
        tok.kind = Token::Kind::punct;
        tok.text = "->";
        advance();
        advance();
      } else if (is_ident_start(c)) {
        tok.kind = Token::Kind::ident;
        tok.text = ident_chars();
      } else if (std::string_view("(){}[],:=").find(c) != std::string_view::npos) {
        tok.kind = Token::Kind::punct;
        tok.text = std::string(1, c);
        advance();
      } else {
        throw ParseError(tok.line, tok.column,
                         std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(tok));
    }
  }

private:
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }
  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident(char c) {
    return is_ident_start(c) || is_digit(c) || c == '.';
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ';') {
        while (pos_ < src_.size() && src_[pos_] != '\n') {
          advance();
        }
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  std::string ident_chars() {
    std::string s;
    while (pos_ < src_.size() && is_ident(src_[pos_])) {
      s.push_back(src_[pos_]);
      advance();
    }
    return s;
  }

  void number(Token &tok) {
    const u32 line = line_, col = col_;
    int base = 10;
    if (pos_ + 1 < src_.size() && src_[pos_] == '0' &&
        (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
      base = 16;
      advance();
      advance();
    }
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (base == 16 ? std::isxdigit(static_cast<unsigned char>(src_[pos_])) != 0
                       : is_digit(src_[pos_]))) {
      advance();
    }
    if (pos_ < src_.size() && is_ident(src_[pos_])) {
      throw ParseError(line, col, "malformed integer literal");
    }
    const auto digits = src_.substr(start, pos_ - start);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(),
                                     tok.value, base);
    if (digits.empty() || ec != std::errc() ||
        ptr != digits.data() + digits.size()) {
      throw ParseError(line, col, "malformed integer literal");
    }
    if (tok.negative) {
      if (tok.value > (u64{1} << 63)) {
        throw ParseError(line, col, "integer literal out of range");
      }
      tok.value = ~tok.value + 1;
    }
    tok.text = std::string(digits);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  u32 line_ = 1;
  u32 col_ = 1;
};

struct Pos {
  u32 line = 0;
  u32 column = 0;
};

/// Identifies one operand slot of a phi (incoming index) or an instruction.
struct SlotKey {
  u32 def;
  u32 idx;
  bool operator==(const SlotKey &) const = default;
};
struct SlotKeyHash {
  std::size_t operator()(const SlotKey &k) const {
    return (std::size_t{k.def} << 20) ^ k.idx;
  }
};

class Parser {
public:
  explicit Parser(std::string_view src) : toks_(Lexer(src).run()) {}

  Module run() {
    Module m;
    while (!at_eof()) {
      const Token ft = peek();
      expect_ident("func");
      m.functions.push_back(function());
      if (!m.symbols.emplace(m.functions.back().name,
                             static_cast<u32>(m.functions.size() - 1))
               .second) {
        throw error(ft, "duplicate function @" + m.functions.back().name);
      }
    }
    for (u32 fi = 0; fi < m.functions.size(); ++fi) {
      auto &f = m.functions[fi];
      for (const auto &site : states_[fi].calls) {
        auto callee = m.find(site.name);
        if (!callee) {
          throw error(site.pos, "unknown callee @" + site.name);
        }
        auto &inst = f.blocks[f.defs[site.def].block].insts[f.defs[site.def].index];
        inst.callee = *callee;
        inst.type = m.functions[*callee].ret;
        f.defs[inst.def].type = inst.type;
      }
    }
    for (u32 fi = 0; fi < m.functions.size(); ++fi) {
      type_check(m, fi);
    }
    return m;
  }

private:
  struct CallSite {
    u32 def;
    std::string name;
    Pos pos;
  };

  struct FuncState {
    std::unordered_map<SlotKey, Pos, SlotKeyHash> operand_pos;
    std::unordered_map<SlotKey, bool, SlotKeyHash> pair_const;
    std::unordered_map<u32, Pos> def_pos;
    std::unordered_map<u32, bool> named;
    std::vector<CallSite> calls;
  };

  struct PendingRef {
    u32 block;
    bool phi;
    u32 index;
    u32 slot;
    std::string name;
    Pos pos;
  };

  struct RawOperand {
    Operand op;
    bool pending = false;
    bool pair = false;
    std::string name;
    Pos pos;
  };

  const Token &peek(std::size_t k = 0) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  bool at_eof() const { return peek().kind == Token::Kind::eof; }
  const Token &next() {
    const Token &t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) {
      ++pos_;
    }
    return t;
  }

  static ParseError error(const Token &t, const std::string &msg) {
    return ParseError(t.line, t.column, msg);
  }
  static ParseError error(Pos p, const std::string &msg) {
    return ParseError(p.line, p.column, msg);
  }

  std::string found() const {
    const auto &t = peek();
    if (t.kind == Token::Kind::eof) {
      return ", found end of input";
    }
    return ", found '" + t.text + "'";
  }

  bool is_punct(const char *p, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::punct && peek(k).text == p;
  }
  bool is_ident(const char *kw, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::ident && peek(k).text == kw;
  }
  bool at_label() const {
    return peek().kind == Token::Kind::ident && is_punct(":", 1);
  }

  void expect_punct(const char *p) {
    if (!is_punct(p)) {
      throw error(peek(), std::string("expected '") + p + "'" + found());
    }
    next();
  }

  void expect_ident(const char *kw) {
    if (!is_ident(kw)) {
      throw error(peek(), std::string("expected '") + kw + "'" + found());
    }
    next();
  }

  std::string ident() {
    if (peek().kind != Token::Kind::ident) {
      throw error(peek(), "expected identifier" + found());
    }
    return next().text;
  }

  Type type() {
    const Token &t = peek();
    if (t.kind == Token::Kind::ident &&
        (t.text == "i64" || t.text == "i128" || t.text == "void")) {
      next();
      return t.text == "i64"    ? Type::i64
             : t.text == "i128" ? Type::i128
                                : Type::void_;
    }
    throw error(t, "expected type" + found());
  }

  u64 integer() {
    if (peek().kind != Token::Kind::integer) {
      throw error(peek(), "expected integer" + found());
    }
    return next().value;
  }

  static Pos pos_of(const Token &t) { return Pos{t.line, t.column}; }

  FuncState &state() { return states_.back(); }

  u32 new_def(Function &f, DefInfo::Kind kind, u32 block, u32 index, Type type,
              const std::string &name, const Token &at) {
    const u32 id = static_cast<u32>(f.defs.size());
    if (!name.empty() && !names_.emplace(name, id).second) {
      throw error(at, "duplicate definition %" + name);
    }
    f.defs.push_back(DefInfo{kind, block, index, type, name});
    state().def_pos[id] = pos_of(at);
    state().named[id] = !name.empty();
    return id;
  }

  RawOperand operand() {
    RawOperand r;
    const Token &t = peek();
    r.pos = pos_of(t);
    if (t.kind == Token::Kind::local) {
      r.pending = true;
      r.name = next().text;
      r.op = Operand::value(0);
    } else if (t.kind == Token::Kind::integer) {
      const bool neg = t.negative;
      const u64 v = next().value;
      r.op = Operand::constant(v, neg ? ~u64{0} : 0);
    } else if (is_punct("(")) {
      next();
      const u64 lo = integer();
      expect_punct(",");
      const u64 hi = integer();
      expect_punct(")");
      r.op = Operand::constant(lo, hi);
      r.pair = true;
    } else {
      throw error(t, "expected operand" + found());
    }
    return r;
  }

  void note_operand(u32 block, bool phi, u32 index, u32 def, u32 slot,
                    const RawOperand &r) {
    state().operand_pos[SlotKey{def, slot}] = r.pos;
    if (r.pair) {
      state().pair_const[SlotKey{def, slot}] = true;
    }
    if (r.pending) {
      pending_.push_back(PendingRef{block, phi, index, slot, r.name, r.pos});
    }
  }

  Function function() {
    names_.clear();
    labels_.clear();
    pending_.clear();
    pending_labels_.clear();
    states_.emplace_back();

    Function f;
    const Token nt = peek();
    if (nt.kind != Token::Kind::global) {
      throw error(nt, "expected function name" + found());
    }
    f.name = next().text;
    expect_punct("(");
    if (!is_punct(")")) {
      while (true) {
        const Token pt = peek();
        if (pt.kind != Token::Kind::local) {
          throw error(pt, "expected parameter" + found());
        }
        std::string name = next().text;
        expect_punct(":");
        const Type t = type();
        if (t == Type::void_) {
          throw error(pt, "type mismatch: parameter cannot be void");
        }
        f.params.push_back(Param{name, t});
        new_def(f, DefInfo::Kind::param, 0,
                static_cast<u32>(f.params.size() - 1), t, name, pt);
        if (!is_punct(",")) {
          break;
        }
        next();
      }
    }
    expect_punct(")");
    expect_punct("->");
    f.ret = type();
    expect_punct("{");

    while (is_ident("stack") && !is_punct(":", 1)) {
      const Token st = next();
      const u64 size = integer();
      expect_ident("align");
      const u64 align = integer();
      if (size == 0 || size > (1u << 16) || align == 0 || align > 16 ||
          (align & (align - 1)) != 0) {
        throw error(st, "invalid stack variable: size must be in 1..65536 and "
                        "align a power of two up to 16");
      }
      f.stack_vars.push_back(
          StackVar{static_cast<u32>(size), static_cast<u32>(align)});
    }

    std::vector<Pos> label_pos;
    while (!is_punct("}")) {
      if (at_eof()) {
        throw error(peek(), "unterminated function body");
      }
      const Token lt = peek();
      std::string label = ident();
      expect_punct(":");
      if (!labels_.emplace(label, static_cast<u32>(f.blocks.size())).second) {
        throw error(lt, "duplicate block label " + label);
      }
      f.blocks.push_back(Block{label, {}, {}});
      label_pos.push_back(pos_of(lt));
      block(f, static_cast<u32>(f.blocks.size() - 1), pos_of(lt));
    }
    expect_punct("}");
    if (f.blocks.empty()) {
      throw error(nt, "function @" + f.name + " has no blocks");
    }

    for (const auto &p : pending_) {
      auto it = names_.find(p.name);
      if (it == names_.end()) {
        throw error(p.pos, "undefined value %" + p.name);
      }
      Operand &op = p.phi ? f.blocks[p.block].phis[p.index].incoming[p.slot].value
                          : f.blocks[p.block].insts[p.index].ops[p.slot];
      op = Operand::value(it->second);
    }
    for (const auto &p : pending_labels_) {
      auto it = labels_.find(p.name);
      if (it == labels_.end()) {
        throw error(p.pos, "unknown block label " + p.name);
      }
      u32 &slot = p.phi ? f.blocks[p.block].phis[p.index].incoming[p.slot].block
                        : f.blocks[p.block].insts[p.index].targets[p.slot];
      slot = it->second;
    }

    const auto preds = predecessors(f);
    if (!preds[0].empty()) {
      throw error(label_pos[0], "entry has predecessors");
    }
    for (u32 b = 0; b < f.blocks.size(); ++b) {
      for (const auto &phi : f.blocks[b].phis) {
        if (auto v = phi_structure_violation(phi, preds[b])) {
          throw error(state().def_pos.at(phi.def), *v);
        }
      }
    }
    return f;
  }

  void block(Function &f, u32 b, Pos label_pos) {
    while (peek().kind == Token::Kind::local && is_punct("=", 1) &&
           is_ident("phi", 2)) {
      const Token nt = peek();
      std::string name = next().text;
      next();
      next();
      Phi phi;
      phi.type = type();
      if (phi.type == Type::void_) {
        throw error(nt, "type mismatch: phi cannot be void");
      }
      const u32 idx = static_cast<u32>(f.blocks[b].phis.size());
      phi.def = new_def(f, DefInfo::Kind::phi, b, idx, phi.type, name, nt);
      while (true) {
        expect_punct("[");
        RawOperand v = operand();
        expect_punct(",");
        const Token lt = peek();
        std::string label = ident();
        expect_punct("]");
        const u32 slot = static_cast<u32>(phi.incoming.size());
        phi.incoming.push_back(PhiIncoming{0, v.op});
        note_operand(b, true, idx, phi.def, slot, v);
        pending_labels_.push_back(PendingRef{b, true, idx, slot, label, pos_of(lt)});
        if (!is_punct(",")) {
          break;
        }
        next();
      }
      f.blocks[b].phis.push_back(std::move(phi));
    }

    while (true) {
      if (is_punct("}") || at_eof() || at_label()) {
        throw error(label_pos, "missing terminator in block " + f.blocks[b].label);
      }
      inst(f, b);
      if (is_terminator(f.blocks[b].insts.back().op)) {
        return;
      }
    }
  }

  void inst(Function &f, u32 b) {
    const Token start = peek();
    std::string name;
    if (start.kind == Token::Kind::local) {
      name = next().text;
      expect_punct("=");
    }
    const Token opt = peek();
    if (opt.kind != Token::Kind::ident) {
      throw error(opt, "expected opcode" + found());
    }
    if (opt.text == "phi") {
      throw error(opt, "phi must precede all instructions of a block");
    }
    auto op = opcode_from_name(opt.text);
    if (!op) {
      throw error(opt, "unknown opcode '" + opt.text + "'");
    }
    next();

    Inst inst;
    inst.op = *op;
    const u32 idx = static_cast<u32>(f.blocks[b].insts.size());
    std::vector<RawOperand> raw;
    std::vector<std::pair<std::string, Pos>> labels;
    std::string callee;
    Pos callee_pos;

    const auto read_ops = [&](std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (i != 0) {
          expect_punct(",");
        }
        raw.push_back(operand());
      }
    };
    const auto read_label = [&] {
      const Token lt = peek();
      labels.emplace_back(ident(), pos_of(lt));
      inst.targets.push_back(0);
    };

    switch (inst.op) {
    case Opcode::addr:
      read_ops(4);
      inst.type = Type::i64;
      break;
    case Opcode::load:
    case Opcode::trunc:
      read_ops(1);
      inst.type = Type::i64;
      break;
    case Opcode::zext128:
      read_ops(1);
      inst.type = Type::i128;
      break;
    case Opcode::add128:
      read_ops(2);
      inst.type = Type::i128;
      break;
    case Opcode::store:
      read_ops(2);
      break;
    case Opcode::alloca_ref: {
      const Token it = peek();
      const u64 v = integer();
      if (v >= f.stack_vars.size()) {
        throw error(it, "undeclared stack variable " +
                            std::to_string(v));
      }
      inst.stack_var = static_cast<u32>(v);
      inst.type = Type::i64;
      break;
    }
    case Opcode::call: {
      const Token ct = peek();
      if (ct.kind != Token::Kind::global) {
        throw error(ct, "expected callee" + found());
      }
      callee = next().text;
      callee_pos = pos_of(ct);
      expect_punct("(");
      if (!is_punct(")")) {
        while (true) {
          raw.push_back(operand());
          if (!is_punct(",")) {
            break;
          }
          next();
        }
      }
      expect_punct(")");
      break;
    }
    case Opcode::br:
      read_label();
      break;
    case Opcode::condbr:
      read_ops(1);
      expect_punct(",");
      read_label();
      expect_punct(",");
      read_label();
      break;
    case Opcode::ret:
      if (peek().kind == Token::Kind::local ||
          peek().kind == Token::Kind::integer || is_punct("(")) {
        raw.push_back(operand());
      }
      break;
    default:
      read_ops(2);
      inst.type = Type::i64;
      break;
    }

    if (inst.op != Opcode::call) {
      if (!name.empty() && inst.type == Type::void_) {
        throw error(start, "'" + opt.text + "' has no result");
      }
      if (name.empty() && inst.type != Type::void_) {
        throw error(opt, "result of '" + opt.text + "' must be named");
      }
    }

    inst.def = new_def(f, DefInfo::Kind::inst, b, idx, inst.type, name, opt);
    for (u32 i = 0; i < raw.size(); ++i) {
      inst.ops.push_back(raw[i].op);
      note_operand(b, false, idx, inst.def, i, raw[i]);
    }
    for (u32 i = 0; i < labels.size(); ++i) {
      pending_labels_.push_back(
          PendingRef{b, false, idx, i, labels[i].first, labels[i].second});
    }
    if (inst.op == Opcode::call) {
      state().calls.push_back(CallSite{inst.def, callee, callee_pos});
    }
    f.blocks[b].insts.push_back(std::move(inst));
  }

  void type_check(Module &m, u32 fi) {
    Function &f = m.functions[fi];
    const FuncState &st = states_[fi];

    const auto check = [&](Operand &op, Type want, u32 def, u32 slot) {
      const Pos p = st.operand_pos.at(SlotKey{def, slot});
      if (op.is_value()) {
        const Type have = f.defs[op.def].type;
        if (have != want) {
          throw error(p, "type mismatch: expected " + std::string(type_name(want)) +
                             ", found " + std::string(type_name(have)));
        }
        return;
      }
      if (want != Type::i128) {
        if (st.pair_const.contains(SlotKey{def, slot})) {
          throw error(p, "type mismatch: i128 constant used as " +
                             std::string(type_name(want)));
        }
        op.hi = 0;
      }
    };

    for (auto &blk : f.blocks) {
      for (auto &phi : blk.phis) {
        for (u32 i = 0; i < phi.incoming.size(); ++i) {
          check(phi.incoming[i].value, phi.type, phi.def, i);
        }
      }
      for (auto &inst : blk.insts) {
        const Pos at = st.def_pos.at(inst.def);
        const auto want = [&](u32 i, Type t) { check(inst.ops[i], t, inst.def, i); };
        switch (inst.op) {
        case Opcode::addr: {
          for (u32 i = 0; i < 4; ++i) {
            want(i, Type::i64);
          }
          if (!inst.ops[2].is_const() || !inst.ops[3].is_const()) {
            throw error(at, "addr scale and displacement must be constants");
          }
          const u64 scale = inst.ops[2].lo;
          if (scale != 1 && scale != 2 && scale != 4 && scale != 8) {
            throw error(at, "addr scale must be 1, 2, 4 or 8");
          }
          const auto disp = static_cast<i64>(inst.ops[3].lo);
          if (disp < INT32_MIN || disp > INT32_MAX) {
            throw error(at, "addr displacement must fit in 32 bits");
          }
          break;
        }
        case Opcode::load:
        case Opcode::zext128:
        case Opcode::condbr:
          want(0, Type::i64);
          break;
        case Opcode::store:
          want(0, Type::i64);
          want(1, Type::i64);
          break;
        case Opcode::trunc:
          want(0, Type::i128);
          break;
        case Opcode::add128:
          want(0, Type::i128);
          want(1, Type::i128);
          break;
        case Opcode::call: {
          const Function &callee = m.functions[inst.callee];
          if (callee.params.size() != inst.ops.size()) {
            throw error(at, "type mismatch: @" + callee.name + " expects " +
                                std::to_string(callee.params.size()) +
                                " arguments, got " +
                                std::to_string(inst.ops.size()));
          }
          for (u32 i = 0; i < inst.ops.size(); ++i) {
            want(i, callee.params[i].type);
          }
          if (st.named.at(inst.def) && inst.type == Type::void_) {
            throw error(at, "call to void function @" + callee.name +
                                " has no result");
          }
          break;
        }
        case Opcode::ret:
          if (f.ret == Type::void_ && !inst.ops.empty()) {
            throw error(at, "type mismatch: void function returns a value");
          }
          if (f.ret != Type::void_) {
            if (inst.ops.empty()) {
              throw error(at, "type mismatch: missing return value");
            }
            want(0, f.ret);
          }
          break;
        case Opcode::br:
        case Opcode::alloca_ref:
          break;
        default:
          want(0, Type::i64);
          want(1, Type::i64);
          break;
        }
      }
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::unordered_map<std::string, u32> names_;
  std::unordered_map<std::string, u32> labels_;
  std::vector<PendingRef> pending_;
  std::vector<PendingRef> pending_labels_;
  std::vector<FuncState> states_;
};

} // namespace detail

/// Parses a module in the textual `.tir` format. Throws ParseError.
inline Module parse_module(std::string_view text) {
  return detail::Parser(text).run();
}

} // namespace tpdemini::ir
