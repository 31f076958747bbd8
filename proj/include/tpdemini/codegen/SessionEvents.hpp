// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "tpdemini/codegen/RegisterFile.hpp"

namespace tpdemini::codegen {

enum class EventKind : u8 {
  block,       // text = block name, arg = layout index
  hold,        // reg now holds value.part (value == kNoValue: scratch)
  drop,        // reg becomes free
  spill,       // value.part stored from reg to [fp + arg]
  reload,      // value.part loaded into reg from [fp + arg]
  evict,       // reg taken away from value.part for another use
  emit,        // text = disassembly, mask/writes = registers read/written, arg = word offset
  inst_end,    // arg = outstanding locks
  entry_check, // multi-predecessor entry; arg = values without a single home
};

struct SessionEvent {
  EventKind kind = EventKind::block;
  u8 reg = 0;
  u8 part = 0;
  u32 value = kNoValue;
  i64 arg = 0;
  RegMask mask = 0;
  RegMask writes = 0;
  std::string text;

  std::string to_string() const {
    const auto val = [&] {
      return "v" + std::to_string(value) + "." + std::to_string(part);
    };
    const std::string r = "r" + std::to_string(reg);
    switch (kind) {
    case EventKind::block:
      return "block " + text + " #" + std::to_string(arg);
    case EventKind::hold:
      return "  hold " + r + " " + (value == kNoValue ? std::string("scratch") : val()) +
             (text.empty() ? "" : " " + text);
    case EventKind::drop: return "  drop " + r;
    case EventKind::spill:
      return "  spill " + val() + " " + r + " -> [fp" + std::to_string(arg) + "]";
    case EventKind::reload:
      return "  reload " + val() + " [fp" + std::to_string(arg) + "] -> " + r;
    case EventKind::evict: return "  evict " + r + " " + val();
    case EventKind::emit: {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%03llx", static_cast<unsigned long long>(arg * 8));
      return "    " + std::string(buf) + ": " + text;
    }
    case EventKind::inst_end:
      return "  end v" + std::to_string(value) + " locks=" + std::to_string(arg);
    case EventKind::entry_check:
      return "  entry misplaced=" + std::to_string(arg);
    }
    return "?";
  }
};

/// Replays an event stream and reports broken session invariants: reads of
/// free registers (not written since they were freed), locks outliving an instruction and multi-predecessor
/// entries with values away from their single home.
template <u32 N>
std::vector<std::string> audit_events(const std::vector<SessionEvent> &events) {
  std::vector<std::string> problems;
  std::array<bool, N> busy{};
  // Edge copies and constant materialization use free registers as
  // temporaries; those reads are fine once the register has been written.
  std::array<bool, N> written{};
  std::string where;
  for (const auto &e : events) {
    switch (e.kind) {
    case EventKind::block:
      where = e.text;
      written.fill(false);
      break;
    case EventKind::hold:
      busy[e.reg] = true;
      written[e.reg] = false;
      break;
    case EventKind::drop:
      busy[e.reg] = false;
      written[e.reg] = false;
      break;
    case EventKind::emit:
      for (u32 r = 0; r < N; ++r) {
        if ((e.mask >> r & 1) && !busy[r] && !written[r]) {
          problems.push_back(where + ": '" + e.text + "' reads free r" +
                             std::to_string(r));
        }
      }
      for (u32 r = 0; r < N; ++r) {
        written[r] = written[r] || (e.writes >> r & 1);
      }
      break;
    case EventKind::inst_end:
      if (e.arg != 0) {
        problems.push_back(where + ": locks outlive v" + std::to_string(e.value));
      }
      break;
    case EventKind::entry_check:
      if (e.arg != 0) {
        problems.push_back(where + ": " + std::to_string(e.arg) +
                           " values without a single location at entry");
      }
      break;
    case EventKind::spill:
    case EventKind::reload:
    case EventKind::evict:
      break;
    }
  }
  return problems;
}

} // namespace tpdemini::codegen
