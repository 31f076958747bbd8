// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "tpdemini/ir/Interpreter.hpp"
#include "tpdemini/ir/Parser.hpp"
#include "tpdemini/ir/Printer.hpp"
#include "tpdemini/ir/Validator.hpp"

using namespace tpdemini;
using namespace tpdemini::ir;

namespace {

constexpr const char *kDiamond = R"(
func @pick(%c: i64, %a: i64, %b: i64) -> i64 {
entry:
  condbr %c, then, else
then:
  %x = add %a, 1
  br join
else:
  %y = sub %b, 1
  br join
join:
  %r = phi i64 [%x, then], [%y, else]
  ret %r
}
)";

std::string parse_error(const char *src) {
  try {
    parse_module(src);
  } catch (const ParseError &e) {
    return e.message;
  }
  return "";
}

std::vector<std::string> rules(const char *src) {
  std::vector<std::string> out;
  for (const auto &v : validate(parse_module(src))) {
    out.push_back(v.rule);
  }
  return out;
}

} // namespace

TEST(IrParse, MinimalFunction) {
  Module m = parse_module("func @id(%a: i64) -> i64 { entry: ret %a }");
  ASSERT_EQ(m.functions.size(), 1u);
  ASSERT_EQ(m.functions[0].blocks.size(), 1u);
  EXPECT_EQ(m.functions[0].blocks[0].insts.size(), 1u);
  EXPECT_TRUE(validate(m).empty());
}

TEST(IrParse, DiamondStructure) {
  Module m = parse_module(kDiamond);
  const Function &f = m.functions[0];
  ASSERT_EQ(f.blocks.size(), 4u);
  ASSERT_EQ(f.blocks[3].phis.size(), 1u);
  EXPECT_EQ(f.blocks[3].phis[0].incoming.size(), 2u);
  EXPECT_TRUE(validate(m).empty());
}

TEST(IrParse, PhiIncomplete) {
  EXPECT_EQ(parse_error(R"(
func @f(%c: i64) -> i64 {
entry:
  condbr %c, a, b
a:
  br j
b:
  br j
j:
  %p = phi i64 [1, a]
  ret %p
})"),
            "phi incomplete");
}

TEST(IrParse, PhiMultiEdgeConflict) {
  EXPECT_EQ(parse_error(R"(
func @f(%c: i64) -> i64 {
entry:
  condbr %c, j, j
j:
  %p = phi i64 [1, entry], [2, entry]
  ret %p
})"),
            "phi multi-edge conflict");
}

TEST(IrParse, ErrorsCarryPosition) {
  try {
    parse_module("func @f() -> i64 {\nentry:\n  %x = frob 1, 2\n  ret %x\n}");
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_EQ(e.column, 8u);
    EXPECT_NE(e.message.find("unknown opcode"), std::string::npos);
  }
  EXPECT_NE(parse_error("func @f(%a: i128) -> i64 { entry: %x = add %a, 1\n ret %x }")
                .find("type mismatch"),
            std::string::npos);
  EXPECT_NE(parse_error("func @f() -> i64 { entry: ret (1, 2) }").find("type mismatch"),
            std::string::npos);
}

TEST(IrParse, RoundTrip) {
  const char *src = R"(
func @g(%a: i128, %b: i64) -> i128 {
  stack 16 align 8
entry:
  %p = alloca_ref 0
  %q = addr %p, %b, 8, -8
  store %q, 0xff
  %l = load %q
  %z = zext128 %l
  %s = add128 %a, (1, 18446744073709551615)
  %t = add128 %s, -1
  ret %t
}

func @h() -> void {
entry:
  %r = call @g((5, 0), 1)
  ret
})";
  Module m1 = parse_module(src);
  const std::string printed = print_module(m1);
  Module m2 = parse_module(printed);
  EXPECT_EQ(m1.functions, m2.functions);
  EXPECT_EQ(print_module(m2), printed);
}

TEST(IrValidate, UseNotDominated) {
  auto r = rules(R"(
func @f(%c: i64) -> i64 {
entry:
  condbr %c, then, join
then:
  %x = add %c, 1
  br join
join:
  ret %x
})");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], "use not dominated");
}

TEST(IrValidate, LoopPhiUsingOwnResult) {
  EXPECT_TRUE(rules(R"(
func @f(%n: i64) -> i64 {
entry:
  br loop
loop:
  %i = phi i64 [0, entry], [%i2, loop]
  %i2 = add %i, 1
  %c = cmp.ult %i2, %n
  condbr %c, loop, exit
exit:
  ret %i2
})").empty());
}

TEST(IrValidate, SelfLoopOneIncomingPerPredecessor) {
  EXPECT_TRUE(rules(R"(
func @f() -> i64 {
entry:
  br b
b:
  %p = phi i64 [0, entry], [%p, b]
  %c = cmp.eq %p, 0
  condbr %c, done, b
done:
  ret %p
})").empty());
}

TEST(IrValidate, UnreachableBlock) {
  auto r = rules("func @f() -> i64 { entry: ret 0\n dead: ret 1 }");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], "unreachable block");
}

TEST(IrInterpret, Basics) {
  Module m = parse_module(R"(
func @add(%a: i64, %b: i64) -> i64 { entry: %r = add %a, %b
 ret %r }
func @div(%a: i64, %b: i64) -> i64 { entry: %r = udiv %a, %b
 ret %r }
func @sum(%n: i64) -> i64 {
entry:
  br loop
loop:
  %i = phi i64 [1, entry], [%i2, loop]
  %s = phi i64 [0, entry], [%s2, loop]
  %s2 = add %s, %i
  %i2 = add %i, 1
  %c = cmp.ult %n, %i2
  condbr %c, exit, loop
exit:
  ret %s2
}
func @rec(%n: i64) -> i64 { entry: %r = call @rec(%n)
 ret %r }
)");
  const u64 a[] = {2, 3};
  EXPECT_EQ(interpret(m, "add", a).lo, 5u);
  const u64 d[] = {1, 0};
  EXPECT_EQ(interpret(m, "div", d).trap, Trap::div_by_zero);
  const u64 n[] = {10};
  EXPECT_EQ(interpret(m, "sum", n).lo, 55u);
  EXPECT_EQ(interpret(m, "rec", n).trap, Trap::call_depth);
}

TEST(IrInterpret, Deterministic) {
  Module m = parse_module(kDiamond);
  const u64 args[] = {0, 7, 9};
  const auto r1 = interpret(m, "pick", args);
  const auto r2 = interpret(m, "pick", args);
  EXPECT_EQ(r1.lo, 8u);
  EXPECT_EQ(r1.lo, r2.lo);
  EXPECT_EQ(r1.steps, r2.steps);
}

TEST(IrInterpret, StackMemory) {
  Module m = parse_module(R"(
func @f(%i: i64) -> i64 {
  stack 32 align 8
entry:
  %p = alloca_ref 0
  %a = addr %p, %i, 8, 0
  store %a, 77
  %q = addr %p, 1, 8, 0
  %v = load %q
  ret %v
})");
  const u64 one[] = {1};
  EXPECT_EQ(interpret(m, "f", one).lo, 77u);
  const u64 two[] = {2};
  EXPECT_EQ(interpret(m, "f", two).lo, 0u);
  const u64 oob[] = {4};
  EXPECT_EQ(interpret(m, "f", oob).trap, Trap::out_of_bounds);
}
