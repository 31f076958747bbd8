// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "tpdemini/visa/CodeBuffer.hpp"
#include "tpdemini/visa/Image.hpp"
#include "tpdemini/visa/Isa.hpp"
#include "tpdemini/vm/Vm.hpp"

using namespace tpdemini;
using namespace tpdemini::visa;

namespace {

Word bytes(std::initializer_list<int> b) {
  Word w{};
  std::size_t i = 0;
  for (int v : b) {
    w[i++] = static_cast<u8>(v);
  }
  return w;
}

ModuleImage single(const std::vector<Inst> &code, std::string name = "f") {
  FunctionImage f;
  f.name = std::move(name);
  for (const auto &i : code) {
    const Word w = encode(i);
    f.code.insert(f.code.end(), w.begin(), w.end());
  }
  ModuleImage img;
  img.functions.push_back(std::move(f));
  return img;
}

} // namespace

TEST(VisaEncode, SpecWords) {
  EXPECT_EQ(encode(ops::add(2, 3)), bytes({0x01, 0x02, 0x02, 0x03, 0, 0, 0, 0}));
  EXPECT_EQ(encode(ops::ld(1, Mem{2, 3, 8, -16})),
            bytes({0x20, 0x01, 0x02, 0xE3, 0xF0, 0xFF, 0xFF, 0xFF}));
  EXPECT_EQ(encode(ops::movi(0, -1)),
            bytes({0x11, 0x00, 0x00, 0x00, 0xFF, 0xFF, 0xFF, 0xFF}));
}

TEST(VisaEncode, RejectsBadOperands) {
  EXPECT_THROW(ops::ld(1, Mem{2, 3, 3, 0}), EncodeError);
  EXPECT_THROW(ops::add(16, 1), EncodeError);
  EXPECT_THROW(decode(bytes({0x77})), EncodeError);
  EXPECT_THROW(decode(bytes({0x01, 0x02, 0x03, 0x04})), EncodeError);
}

TEST(VisaEncode, Disassembly) {
  EXPECT_EQ(disassemble(ops::add(2, 3)), "add r2, r3");
  EXPECT_EQ(disassemble(ops::ld(1, Mem{2, 3, 8, -16})), "ld r1, [r2 + r3*8 - 16]");
  EXPECT_EQ(disassemble(ops::st(Mem{kFp, std::nullopt, 1, -24}, 4)),
            "st [fp - 24], r4");
  EXPECT_EQ(disassemble(ops::bcc(Cond::ult, -4)), "b.ult -4");
  EXPECT_EQ(disassemble(ops::setcc(Cond::sge, 7)), "set.sge r7");
  const Word w = encode(ops::add(2, 3));
  EXPECT_EQ(disassemble_code(w), "000: add r2, r3\n");
}

// encode . disassemble . encode over a generated operand sample.
TEST(VisaEncode, RoundTripSample) {
  std::vector<Inst> sample;
  const i32 imms[] = {0, 1, -1, 127, -128, INT32_MAX, INT32_MIN, 4096};
  for (Reg a = 0; a < kNumRegs; ++a) {
    for (Reg b = 0; b < kNumRegs; ++b) {
      for (Op op : {Op::ADD, Op::SUB, Op::MUL, Op::AND, Op::OR, Op::XOR, Op::SHL,
                    Op::SHR, Op::ADC}) {
        sample.push_back(ops::alu(op, a, b));
      }
      sample.push_back(ops::mov(a, b));
      sample.push_back(ops::cmp(a, b));
      for (u8 scale : {1, 2, 4, 8}) {
        for (i32 d : imms) {
          sample.push_back(ops::ld(a, Mem{b, static_cast<Reg>((a + b) % 16), scale, d}));
          sample.push_back(ops::st(Mem{b, std::nullopt, 1, d}, a));
        }
      }
    }
    sample.push_back(ops::divmod(a));
    sample.push_back(ops::push(a));
    sample.push_back(ops::pop(a));
    for (i32 v : imms) {
      sample.push_back(ops::movi(a, v));
      sample.push_back(ops::movih(a, v));
      sample.push_back(ops::addi(a, v));
      sample.push_back(ops::cmpi(a, v));
    }
    for (u8 c = 0; c < kNumConds; ++c) {
      sample.push_back(ops::setcc(static_cast<Cond>(c), a));
    }
  }
  for (i32 v : imms) {
    sample.push_back(ops::jmp(v));
    sample.push_back(ops::call(v));
    for (u8 c = 0; c < kNumConds; ++c) {
      sample.push_back(ops::bcc(static_cast<Cond>(c), v));
    }
  }
  sample.push_back(ops::nop());
  sample.push_back(ops::ret());
  for (const Inst &i : sample) {
    const Word w = encode(i);
    const Inst back = assemble(disassemble(decode(w)));
    ASSERT_EQ(encode(back), w) << disassemble(i);
  }
}

TEST(CodeBuffer, BranchOffsets) {
  CodeBuffer buf;
  Label back = buf.new_label("back");
  buf.bind(back);
  buf.emit(ops::nop());
  buf.emit(ops::nop());
  buf.emit(ops::nop());
  const u32 j = buf.emit_branch(ops::jmp(0), back);
  EXPECT_EQ(decode(std::span(buf.bytes()).subspan(j * 8, 8)).imm, -4);

  Label fwd = buf.new_label("fwd");
  const u32 k = buf.emit_branch(ops::jmp(0), fwd);
  buf.bind(fwd);
  EXPECT_EQ(decode(std::span(buf.bytes()).subspan(k * 8, 8)).imm, 0);
  EXPECT_EQ(buf.violations(), 0u);
}

TEST(CodeBuffer, UnboundLabelNamed) {
  CodeBuffer buf;
  Label l = buf.new_label("bb.exit");
  buf.emit_branch(ops::jmp(0), l);
  try {
    buf.check_resolved();
    FAIL();
  } catch (const UnresolvedLabel &e) {
    EXPECT_EQ(e.label, "bb.exit");
  }
}

TEST(CodeBuffer, WriteGuard) {
  CodeBuffer buf;
  buf.emit(ops::nop());
  buf.emit(ops::nop());
  const u32 pp = buf.add_patch_point(8, 8, PatchPurpose::save_slot);
  const Word w = encode(ops::ret());
  EXPECT_THROW(buf.write_at(0, w), InternalError);
  EXPECT_EQ(buf.violations(), 1u);
  buf.patch_word(pp, 1, ops::ret());
  EXPECT_THROW(buf.patch_word(pp, 1, ops::nop()), InternalError);
  EXPECT_EQ(buf.violations(), 2u);
}

TEST(Image, RoundTripAndErrors) {
  ModuleImage img = single({ops::ret()}, "id");
  img.functions[0].frame_size = 32;
  const auto bytes_out = write_image(img);
  ModuleImage back = read_image(bytes_out);
  ASSERT_EQ(back.functions.size(), 1u);
  EXPECT_EQ(back.functions[0].name, "id");
  EXPECT_EQ(back.functions[0].frame_size, 32u);
  EXPECT_EQ(back.functions[0].code, img.functions[0].code);

  auto truncated = bytes_out;
  truncated.pop_back();
  EXPECT_THROW(read_image(truncated), ImageError);
  auto bad_magic = bytes_out;
  bad_magic[0] = 'X';
  EXPECT_THROW(read_image(bad_magic), ImageError);
  EXPECT_THROW(read_image(write_image(single({ops::call(1), ops::ret()}))), ImageError);
}

TEST(Vm, IdentityAndTraps) {
  const u64 a42[] = {42};
  EXPECT_EQ(vm::run(single({ops::ret()}), "f", a42).lo, 42u);
  const u64 div[] = {7, 0};
  EXPECT_EQ(vm::run(single({ops::divmod(1), ops::ret()}), "f", div).trap,
            Trap::div_by_zero);
  EXPECT_EQ(vm::run(single({ops::jmp(-1)}), "f", {}).trap, Trap::step_limit);
  EXPECT_EQ(vm::run(single({ops::call(0), ops::ret()}), "f", {}).trap,
            Trap::call_depth);
  EXPECT_EQ(vm::run(single({ops::movi(1, -1), ops::ld(0, Mem{1, std::nullopt, 1, 0}), ops::ret()}), "f", {})
                .trap,
            Trap::out_of_bounds);
}

TEST(Vm, I128Carry) {
  // (2^64-1, 0) + (1, 0) in r0:r1 + r2:r3.
  const u64 args[] = {~u64{0}, 0, 1, 0};
  const auto r =
      vm::run(single({ops::add(0, 2), ops::adc(1, 3), ops::ret()}), "f", args);
  EXPECT_EQ(r.lo, 0u);
  EXPECT_EQ(r.hi, 1u);
}

TEST(Vm, FlagsMatchIntegerComparisons) {
  std::mt19937_64 rng(7);
  const std::vector<Inst> code = {ops::cmp(0, 1),
                                  ops::setcc(Cond::eq, 2),
                                  ops::setcc(Cond::ne, 3),
                                  ops::setcc(Cond::ult, 4),
                                  ops::setcc(Cond::slt, 5),
                                  ops::setcc(Cond::uge, 6),
                                  ops::setcc(Cond::sge, 7),
                                  ops::ret()};
  const ModuleImage img = single(code);
  u64 seen[6] = {};
  vm::VmOptions opts;
  opts.observer = [&](const vm::StepInfo &s) {
    if (s.inst.op == Op::RET) {
      for (int i = 0; i < 6; ++i) {
        seen[i] = s.regs[2 + i];
      }
    }
  };
  vm::Vm machine(img, opts);
  for (int n = 0; n < 10000; ++n) {
    u64 a = rng(), b = rng();
    if (n % 4 == 0) {
      b = a;
    } else if (n % 4 == 1) {
      b = a ^ (u64{1} << 63);
    }
    const u64 args[] = {a, b};
    machine.run(0, args);
    ASSERT_EQ(seen[0], a == b);
    ASSERT_EQ(seen[1], a != b);
    ASSERT_EQ(seen[2], a < b);
    ASSERT_EQ(seen[3], static_cast<i64>(a) < static_cast<i64>(b));
    ASSERT_EQ(seen[4], a >= b);
    ASSERT_EQ(seen[5], static_cast<i64>(a) >= static_cast<i64>(b));
  }
}

TEST(Vm, Materialize64BitConstants) {
  for (u64 v : {u64{0}, u64{5}, ~u64{0}, u64{0x8000'0000}, u64{0x1234'5678'9ABC'DEF0},
                u64{0xFFFF'FFFF'0000'0000}}) {
    std::vector<Inst> code;
    materialize_const([&](const Inst &i) { code.push_back(i); }, 0, v);
    code.push_back(ops::ret());
    EXPECT_EQ(vm::run(single(code), "f", {}).lo, v);
  }
}
