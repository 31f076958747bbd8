// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tpdemini/base.hpp"

/// The virtual ISA: 16 GP registers, two-address ALU, flags, 8-byte words.
namespace tpdemini::visa {

class EncodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Op : u8 {
  NOP = 0x00,
  ADD = 0x01,
  SUB = 0x02,
  MUL = 0x03,
  DIVMOD = 0x04,
  AND = 0x05,
  OR = 0x06,
  XOR = 0x07,
  SHL = 0x08,
  SHR = 0x09,
  ADC = 0x0A,
  MOV = 0x10,
  MOVI = 0x11,
  MOVIH = 0x12,
  ADDI = 0x18,
  CMPI = 0x19,
  LD = 0x20,
  ST = 0x21,
  CMP = 0x28,
  SETCC = 0x29,
  JMP = 0x30,
  BCC = 0x31,
  CALL = 0x38,
  RET = 0x39,
  PUSH = 0x40,
  POP = 0x41,
};

enum class Cond : u8 { eq, ne, ult, slt, uge, sge };

inline constexpr u32 kNumConds = 6;

inline Cond invert(Cond c) {
  switch (c) {
  case Cond::eq: return Cond::ne;
  case Cond::ne: return Cond::eq;
  case Cond::ult: return Cond::uge;
  case Cond::slt: return Cond::sge;
  case Cond::uge: return Cond::ult;
  case Cond::sge: return Cond::slt;
  }
  return Cond::eq;
}

inline std::string_view cond_name(Cond c) {
  static constexpr std::array<std::string_view, kNumConds> names = {
      "eq", "ne", "ult", "slt", "uge", "sge"};
  return names[static_cast<u8>(c)];
}

using Reg = u8;

inline constexpr Reg kFp = 14;
inline constexpr Reg kSp = 15;
inline constexpr u32 kNumRegs = 16;
inline constexpr u32 kNumAllocatable = 14;
inline constexpr u32 kNumArgRegs = 6;
inline constexpr Reg kFirstCalleeSaved = 8;
inline constexpr u32 kNumCalleeSaved = 6;
inline constexpr u32 kWordSize = 8;

inline constexpr bool is_callee_saved(Reg r) {
  return r >= kFirstCalleeSaved && r < kFirstCalleeSaved + kNumCalleeSaved;
}

inline std::string reg_name(Reg r) {
  if (r == kFp) {
    return "fp";
  }
  if (r == kSp) {
    return "sp";
  }
  return "r" + std::to_string(r);
}

inline bool fits_i32(i64 v) { return v >= INT32_MIN && v <= INT32_MAX; }

/// base + index*scale + disp.
struct Mem {
  Reg base = 0;
  std::optional<Reg> index;
  u8 scale = 1;
  i32 disp = 0;

  bool operator==(const Mem &) const = default;
};

/// One decoded instruction word. Field meaning depends on the opcode; use
/// the builders below rather than filling fields directly.
struct Inst {
  Op op = Op::NOP;
  u8 b1 = 0;
  u8 b2 = 0;
  u8 b3 = 0;
  i32 imm = 0;

  bool operator==(const Inst &) const = default;

  Mem mem() const {
    Mem m;
    m.base = b2;
    if (b3 & 0x80) {
      m.index = static_cast<Reg>(b3 & 0x0F);
      m.scale = static_cast<u8>(1u << ((b3 >> 5) & 3));
    }
    m.disp = imm;
    return m;
  }
};

using Word = std::array<u8, kWordSize>;

namespace detail {

inline void check_reg(Reg r) {
  if (r >= kNumRegs) {
    throw EncodeError("register out of range: " + std::to_string(r));
  }
}

inline u8 index_byte(const Mem &m) {
  if (!m.index) {
    return 0;
  }
  check_reg(*m.index);
  u8 log2 = 0;
  switch (m.scale) {
  case 1: log2 = 0; break;
  case 2: log2 = 1; break;
  case 4: log2 = 2; break;
  case 8: log2 = 3; break;
  default: throw EncodeError("scale must be 1, 2, 4 or 8");
  }
  return static_cast<u8>(0x80 | (log2 << 5) | *m.index);
}

} // namespace detail

namespace ops {

inline Inst alu(Op op, Reg d, Reg s) {
  detail::check_reg(d);
  detail::check_reg(s);
  return Inst{op, d, d, s, 0};
}
inline Inst add(Reg d, Reg s) { return alu(Op::ADD, d, s); }
inline Inst sub(Reg d, Reg s) { return alu(Op::SUB, d, s); }
inline Inst mul(Reg d, Reg s) { return alu(Op::MUL, d, s); }
inline Inst and_(Reg d, Reg s) { return alu(Op::AND, d, s); }
inline Inst or_(Reg d, Reg s) { return alu(Op::OR, d, s); }
inline Inst xor_(Reg d, Reg s) { return alu(Op::XOR, d, s); }
inline Inst shl(Reg d, Reg s) { return alu(Op::SHL, d, s); }
inline Inst shr(Reg d, Reg s) { return alu(Op::SHR, d, s); }
inline Inst adc(Reg d, Reg s) { return alu(Op::ADC, d, s); }
inline Inst divmod(Reg divisor) {
  detail::check_reg(divisor);
  return Inst{Op::DIVMOD, 0, 0, divisor, 0};
}
inline Inst mov(Reg d, Reg s) {
  detail::check_reg(d);
  detail::check_reg(s);
  return Inst{Op::MOV, d, s, 0, 0};
}
inline Inst movi(Reg d, i32 imm) {
  detail::check_reg(d);
  return Inst{Op::MOVI, d, 0, 0, imm};
}
inline Inst movih(Reg d, i32 imm) {
  detail::check_reg(d);
  return Inst{Op::MOVIH, d, 0, 0, imm};
}
inline Inst addi(Reg d, i32 imm) {
  detail::check_reg(d);
  return Inst{Op::ADDI, d, d, 0, imm};
}
inline Inst cmpi(Reg a, i32 imm) {
  detail::check_reg(a);
  return Inst{Op::CMPI, 0, a, 0, imm};
}
inline Inst cmp(Reg a, Reg b) {
  detail::check_reg(a);
  detail::check_reg(b);
  return Inst{Op::CMP, 0, a, b, 0};
}
inline Inst ld(Reg d, const Mem &m) {
  detail::check_reg(d);
  detail::check_reg(m.base);
  return Inst{Op::LD, d, m.base, detail::index_byte(m), m.disp};
}
inline Inst st(const Mem &m, Reg v) {
  detail::check_reg(v);
  detail::check_reg(m.base);
  return Inst{Op::ST, v, m.base, detail::index_byte(m), m.disp};
}
inline Inst setcc(Cond c, Reg d) {
  detail::check_reg(d);
  return Inst{Op::SETCC, d, static_cast<u8>(c), 0, 0};
}
inline Inst jmp(i32 off) { return Inst{Op::JMP, 0, 0, 0, off}; }
inline Inst bcc(Cond c, i32 off) {
  return Inst{Op::BCC, static_cast<u8>(c), 0, 0, off};
}
inline Inst call(i32 func) { return Inst{Op::CALL, 0, 0, 0, func}; }
inline Inst ret() { return Inst{Op::RET, 0, 0, 0, 0}; }
inline Inst push(Reg r) {
  detail::check_reg(r);
  return Inst{Op::PUSH, 0, r, 0, 0};
}
inline Inst pop(Reg r) {
  detail::check_reg(r);
  return Inst{Op::POP, r, 0, 0, 0};
}
inline Inst nop() { return Inst{}; }

} // namespace ops

inline bool is_alu(Op op) {
  switch (op) {
  case Op::ADD:
  case Op::SUB:
  case Op::MUL:
  case Op::AND:
  case Op::OR:
  case Op::XOR:
  case Op::SHL:
  case Op::SHR:
  case Op::ADC: return true;
  default: return false;
  }
}

inline bool is_branch(Op op) { return op == Op::JMP || op == Op::BCC; }

inline bool sets_flags(Op op) {
  return op == Op::ADD || op == Op::SUB || op == Op::CMP || op == Op::CMPI ||
         op == Op::ADC;
}

inline std::string_view op_mnemonic(Op op) {
  switch (op) {
  case Op::NOP: return "nop";
  case Op::ADD: return "add";
  case Op::SUB: return "sub";
  case Op::MUL: return "mul";
  case Op::DIVMOD: return "divmod";
  case Op::AND: return "and";
  case Op::OR: return "or";
  case Op::XOR: return "xor";
  case Op::SHL: return "shl";
  case Op::SHR: return "shr";
  case Op::ADC: return "adc";
  case Op::MOV: return "mov";
  case Op::MOVI: return "movi";
  case Op::MOVIH: return "movih";
  case Op::ADDI: return "addi";
  case Op::CMPI: return "cmpi";
  case Op::LD: return "ld";
  case Op::ST: return "st";
  case Op::CMP: return "cmp";
  case Op::SETCC: return "set";
  case Op::JMP: return "jmp";
  case Op::BCC: return "b";
  case Op::CALL: return "call";
  case Op::RET: return "ret";
  case Op::PUSH: return "push";
  case Op::POP: return "pop";
  }
  return "?";
}

inline std::optional<Op> op_from_byte(u8 b) {
  switch (b) {
  case 0x00: case 0x01: case 0x02: case 0x03: case 0x04: case 0x05:
  case 0x06: case 0x07: case 0x08: case 0x09: case 0x0A: case 0x10:
  case 0x11: case 0x12: case 0x18: case 0x19: case 0x20: case 0x21:
  case 0x28: case 0x29: case 0x30: case 0x31: case 0x38: case 0x39:
  case 0x40: case 0x41:
    return static_cast<Op>(b);
  default:
    return std::nullopt;
  }
}

inline Word encode(const Inst &i) {
  const u32 imm = static_cast<u32>(i.imm);
  return Word{static_cast<u8>(i.op), i.b1, i.b2, i.b3,
              static_cast<u8>(imm), static_cast<u8>(imm >> 8),
              static_cast<u8>(imm >> 16), static_cast<u8>(imm >> 24)};
}

/// Decodes one word. Rejects unknown opcodes, out-of-range fields and
/// nonzero bytes in fields the opcode does not use.
inline Inst decode(std::span<const u8> w) {
  if (w.size() < kWordSize) {
    throw EncodeError("truncated instruction word");
  }
  auto op = op_from_byte(w[0]);
  if (!op) {
    throw EncodeError("unknown opcode byte " + std::to_string(w[0]));
  }
  Inst i{*op, w[1], w[2], w[3],
         static_cast<i32>(static_cast<u32>(w[4]) | static_cast<u32>(w[5]) << 8 |
                          static_cast<u32>(w[6]) << 16 |
                          static_cast<u32>(w[7]) << 24)};
  const auto bad = [&] {
    throw EncodeError(std::string("malformed ") +
                      std::string(op_mnemonic(i.op)) + " word");
  };
  const auto reg = [&](u8 r) {
    if (r >= kNumRegs) {
      bad();
    }
  };
  const auto zero = [&](u32 v) {
    if (v != 0) {
      bad();
    }
  };
  switch (i.op) {
  case Op::NOP:
  case Op::RET:
    zero(i.b1 | i.b2 | i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::ADD: case Op::SUB: case Op::MUL: case Op::AND: case Op::OR:
  case Op::XOR: case Op::SHL: case Op::SHR: case Op::ADC:
    reg(i.b1);
    reg(i.b3);
    if (i.b2 != i.b1) {
      bad();
    }
    zero(static_cast<u32>(i.imm));
    break;
  case Op::DIVMOD:
    zero(i.b1 | i.b2);
    reg(i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::MOV:
    reg(i.b1);
    reg(i.b2);
    zero(i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::MOVI:
  case Op::MOVIH:
    reg(i.b1);
    zero(i.b2 | i.b3);
    break;
  case Op::ADDI:
    reg(i.b1);
    if (i.b2 != i.b1) {
      bad();
    }
    zero(i.b3);
    break;
  case Op::CMPI:
    zero(i.b1 | i.b3);
    reg(i.b2);
    break;
  case Op::CMP:
    zero(i.b1);
    reg(i.b2);
    reg(i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::LD:
  case Op::ST:
    reg(i.b1);
    reg(i.b2);
    if (!(i.b3 & 0x80)) {
      zero(i.b3);
    } else if (i.b3 & 0x10) {
      bad();
    }
    break;
  case Op::SETCC:
    reg(i.b1);
    if (i.b2 >= kNumConds) {
      bad();
    }
    zero(i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::JMP:
  case Op::CALL:
    zero(i.b1 | i.b2 | i.b3);
    break;
  case Op::BCC:
    if (i.b1 >= kNumConds) {
      bad();
    }
    zero(i.b2 | i.b3);
    break;
  case Op::PUSH:
    zero(i.b1 | i.b3);
    reg(i.b2);
    zero(static_cast<u32>(i.imm));
    break;
  case Op::POP:
    reg(i.b1);
    zero(i.b2 | i.b3);
    zero(static_cast<u32>(i.imm));
    break;
  }
  return i;
}

inline std::string format_mem(const Mem &m) {
  std::string s = "[" + reg_name(m.base);
  if (m.index) {
    s += " + " + reg_name(*m.index);
    if (m.scale != 1) {
      s += "*" + std::to_string(m.scale);
    }
  }
  if (m.disp > 0) {
    s += " + " + std::to_string(m.disp);
  } else if (m.disp < 0) {
    s += " - " + std::to_string(-static_cast<i64>(m.disp));
  }
  return s + "]";
}

/// Text form of one instruction, e.g. `add r2, r3` or `ld r1, [fp - 24]`.
inline std::string disassemble(const Inst &i) {
  const std::string mn(op_mnemonic(i.op));
  switch (i.op) {
  case Op::NOP:
  case Op::RET: return mn;
  case Op::ADD: case Op::SUB: case Op::MUL: case Op::AND: case Op::OR:
  case Op::XOR: case Op::SHL: case Op::SHR: case Op::ADC:
    return mn + " " + reg_name(i.b1) + ", " + reg_name(i.b3);
  case Op::DIVMOD: return mn + " " + reg_name(i.b3);
  case Op::MOV: return mn + " " + reg_name(i.b1) + ", " + reg_name(i.b2);
  case Op::MOVI:
  case Op::MOVIH:
  case Op::ADDI: return mn + " " + reg_name(i.b1) + ", " + std::to_string(i.imm);
  case Op::CMPI: return mn + " " + reg_name(i.b2) + ", " + std::to_string(i.imm);
  case Op::CMP: return mn + " " + reg_name(i.b2) + ", " + reg_name(i.b3);
  case Op::LD: return mn + " " + reg_name(i.b1) + ", " + format_mem(i.mem());
  case Op::ST: return mn + " " + format_mem(i.mem()) + ", " + reg_name(i.b1);
  case Op::SETCC:
    return mn + "." + std::string(cond_name(static_cast<Cond>(i.b2))) + " " +
           reg_name(i.b1);
  case Op::JMP:
  case Op::CALL: return mn + " " + std::to_string(i.imm);
  case Op::BCC:
    return mn + "." + std::string(cond_name(static_cast<Cond>(i.b1))) + " " +
           std::to_string(i.imm);
  case Op::PUSH: return mn + " " + reg_name(i.b2);
  case Op::POP: return mn + " " + reg_name(i.b1);
  }
  return mn;
}

/// `000: add r2, r3` lines for a code range; offsets are byte offsets.
inline std::string disassemble_code(std::span<const u8> code) {
  std::string out;
  char buf[16];
  for (std::size_t off = 0; off + kWordSize <= code.size(); off += kWordSize) {
    std::snprintf(buf, sizeof(buf), "%03zx: ", off);
    out += buf;
    out += disassemble(decode(code.subspan(off, kWordSize)));
    out += '\n';
  }
  return out;
}

namespace detail {

class AsmReader {
public:
  explicit AsmReader(std::string_view s) : s_(s) {}

  [[noreturn]] void fail(const std::string &what) const {
    throw EncodeError("cannot assemble '" + std::string(s_) + "': " + what);
  }

  void ws() {
    while (p_ < s_.size() && (s_[p_] == ' ' || s_[p_] == '\t')) {
      ++p_;
    }
  }

  bool done() {
    ws();
    return p_ >= s_.size() || s_[p_] == ';';
  }

  bool accept(char c) {
    ws();
    if (p_ < s_.size() && s_[p_] == c) {
      ++p_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      fail(std::string("expected '") + c + "'");
    }
  }

  std::string word() {
    ws();
    std::size_t b = p_;
    while (p_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[p_])) || s_[p_] == '_')) {
      ++p_;
    }
    return std::string(s_.substr(b, p_ - b));
  }

  std::optional<Reg> try_reg() {
    ws();
    const std::size_t save = p_;
    const std::string w = word();
    if (w == "fp") {
      return kFp;
    }
    if (w == "sp") {
      return kSp;
    }
    if (w.size() >= 2 && w[0] == 'r') {
      u32 v = 0;
      auto [ptr, ec] = std::from_chars(w.data() + 1, w.data() + w.size(), v);
      if (ec == std::errc() && ptr == w.data() + w.size() && v < kNumRegs) {
        return static_cast<Reg>(v);
      }
    }
    p_ = save;
    return std::nullopt;
  }

  Reg reg() {
    auto r = try_reg();
    if (!r) {
      fail("expected register");
    }
    return *r;
  }

  i64 integer() {
    ws();
    bool neg = false;
    if (p_ < s_.size() && (s_[p_] == '-' || s_[p_] == '+')) {
      neg = s_[p_] == '-';
      ++p_;
    }
    ws();
    i64 v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + p_, s_.data() + s_.size(), v);
    if (ec != std::errc()) {
      fail("expected integer");
    }
    p_ = static_cast<std::size_t>(ptr - s_.data());
    return neg ? -v : v;
  }

  i32 imm32() {
    const i64 v = integer();
    if (!fits_i32(v)) {
      fail("immediate out of range");
    }
    return static_cast<i32>(v);
  }

  Mem mem() {
    expect('[');
    Mem m;
    m.base = reg();
    while (true) {
      ws();
      if (accept(']')) {
        return m;
      }
      bool neg = false;
      if (accept('-')) {
        neg = true;
      } else {
        expect('+');
      }
      if (auto r = try_reg()) {
        if (neg || m.index) {
          fail("bad index");
        }
        m.index = *r;
        if (accept('*')) {
          const i64 sc = integer();
          if (sc != 1 && sc != 2 && sc != 4 && sc != 8) {
            fail("scale must be 1, 2, 4 or 8");
          }
          m.scale = static_cast<u8>(sc);
        }
      } else {
        const i64 d = integer();
        const i64 disp = neg ? -d : d;
        if (!fits_i32(disp)) {
          fail("displacement out of range");
        }
        m.disp = static_cast<i32>(disp);
      }
    }
  }

  std::optional<Cond> cond_suffix(const std::string &w, std::string_view prefix) {
    if (w.rfind(prefix, 0) != 0) {
      return std::nullopt;
    }
    const std::string_view rest = std::string_view(w).substr(prefix.size());
    for (u8 c = 0; c < kNumConds; ++c) {
      if (rest == cond_name(static_cast<Cond>(c))) {
        return static_cast<Cond>(c);
      }
    }
    return std::nullopt;
  }

  std::string mnemonic() {
    ws();
    std::size_t b = p_;
    while (p_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p_])) ||
                              s_[p_] == '.')) {
      ++p_;
    }
    return std::string(s_.substr(b, p_ - b));
  }

private:
  std::string_view s_;
  std::size_t p_ = 0;
};

} // namespace detail

/// Parses the disassembly syntax back into an instruction.
inline Inst assemble(std::string_view text) {
  detail::AsmReader r(text);
  const std::string mn = r.mnemonic();
  Inst out;
  const auto two = [&](auto fn) {
    const Reg d = r.reg();
    r.expect(',');
    const Reg s = r.reg();
    return fn(d, s);
  };
  const auto reg_imm = [&](auto fn) {
    const Reg d = r.reg();
    r.expect(',');
    return fn(d, r.imm32());
  };
  if (mn == "nop") {
    out = ops::nop();
  } else if (mn == "ret") {
    out = ops::ret();
  } else if (mn == "add") {
    out = two(ops::add);
  } else if (mn == "sub") {
    out = two(ops::sub);
  } else if (mn == "mul") {
    out = two(ops::mul);
  } else if (mn == "and") {
    out = two(ops::and_);
  } else if (mn == "or") {
    out = two(ops::or_);
  } else if (mn == "xor") {
    out = two(ops::xor_);
  } else if (mn == "shl") {
    out = two(ops::shl);
  } else if (mn == "shr") {
    out = two(ops::shr);
  } else if (mn == "adc") {
    out = two(ops::adc);
  } else if (mn == "mov") {
    out = two(ops::mov);
  } else if (mn == "cmp") {
    out = two(ops::cmp);
  } else if (mn == "divmod") {
    out = ops::divmod(r.reg());
  } else if (mn == "movi") {
    out = reg_imm(ops::movi);
  } else if (mn == "movih") {
    out = reg_imm(ops::movih);
  } else if (mn == "addi") {
    out = reg_imm(ops::addi);
  } else if (mn == "cmpi") {
    out = reg_imm(ops::cmpi);
  } else if (mn == "ld") {
    const Reg d = r.reg();
    r.expect(',');
    out = ops::ld(d, r.mem());
  } else if (mn == "st") {
    const Mem m = r.mem();
    r.expect(',');
    out = ops::st(m, r.reg());
  } else if (mn == "jmp") {
    out = ops::jmp(r.imm32());
  } else if (mn == "call") {
    out = ops::call(r.imm32());
  } else if (mn == "push") {
    out = ops::push(r.reg());
  } else if (mn == "pop") {
    out = ops::pop(r.reg());
  } else if (auto c = r.cond_suffix(mn, "set.")) {
    out = ops::setcc(*c, r.reg());
  } else if (auto c2 = r.cond_suffix(mn, "b.")) {
    out = ops::bcc(*c2, r.imm32());
  } else {
    r.fail("unknown mnemonic");
  }
  if (!r.done()) {
    r.fail("trailing characters");
  }
  return out;
}

/// Appends the shortest sequence loading `v` into `d`: MOVI alone when the
/// value is a sign-extended 32-bit immediate, otherwise MOVI + MOVIH.
template <typename Emit>
void materialize_const(Emit &&emit, Reg d, u64 v) {
  const auto sv = static_cast<i64>(v);
  emit(ops::movi(d, static_cast<i32>(static_cast<u32>(v))));
  if (!fits_i32(sv)) {
    emit(ops::movih(d, static_cast<i32>(static_cast<u32>(v >> 32))));
  }
}

} // namespace tpdemini::visa
