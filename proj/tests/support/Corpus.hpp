// SPDX-FileCopyrightText: 2026 tpde-mini contributors
//
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "tpdemini/base.hpp"

namespace tpdemini::corpus {

/// `; expect @f(1, 2) = 3`, `= (lo, hi)` or `= trap div-by-zero`.
struct Expectation {
  std::string func;
  std::vector<u64> args;
  ExecResult want;
};

struct Program {
  std::string name; // file stem
  std::string path;
  std::string text;
  std::vector<Expectation> expects;
};

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<u64> parse_words(const std::string &s) {
  std::vector<u64> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), ::isspace), tok.end());
    if (!tok.empty()) {
      out.push_back(std::stoull(tok, nullptr, 0));
    }
  }
  return out;
}

inline std::vector<Expectation> parse_expectations(const std::string &text) {
  static const std::regex re(R"(;\s*expect\s+@(\w+)\(([^)]*)\)\s*=\s*(.+?)\s*$)");
  std::vector<Expectation> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::smatch m;
    if (!std::regex_search(line, m, re)) {
      continue;
    }
    Expectation e;
    e.func = m[1];
    e.args = parse_words(m[2]);
    const std::string rhs = m[3];
    if (rhs.rfind("trap ", 0) == 0) {
      const std::string name = rhs.substr(5);
      for (Trap t : {Trap::div_by_zero, Trap::out_of_bounds, Trap::step_limit,
                     Trap::call_depth}) {
        if (name == trap_name(t)) {
          e.want.trap = t;
        }
      }
    } else if (rhs.front() == '(') {
      const auto w = parse_words(rhs.substr(1, rhs.size() - 2));
      e.want.lo = w.at(0);
      e.want.hi = w.at(1);
    } else {
      e.want.lo = std::stoull(rhs, nullptr, 0);
    }
    out.push_back(std::move(e));
  }
  return out;
}

/// Every `.tir` file of `dir`, sorted by name.
inline std::vector<Program> load_dir(const std::string &dir) {
  std::vector<Program> out;
  for (const auto &e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".tir") {
      continue;
    }
    Program p;
    p.name = e.path().stem().string();
    p.path = e.path().string();
    p.text = read_file(p.path);
    p.expects = parse_expectations(p.text);
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(),
            [](const Program &a, const Program &b) { return a.name < b.name; });
  return out;
}

/// First `; rule: NAME` line of a negative corpus file.
inline std::string expected_rule(const std::string &text) {
  static const std::regex re(R"(;\s*rule:\s*(.+?)\s*$)");
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::smatch m;
    if (std::regex_search(line, m, re)) {
      return m[1];
    }
  }
  return {};
}

} // namespace tpdemini::corpus
