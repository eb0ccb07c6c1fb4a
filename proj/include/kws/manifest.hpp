// Copyright 2026 The kws-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kws/common.hpp"

namespace kws {

/// One dataset clip. Spans are [start, end) in feature frames. A clip
/// may optionally carry per-subword alignment spans (used to derive
/// frame-level targets for posterior models).
struct ManifestEntry {
  std::string path;
  int label = 0;
  std::optional<std::pair<long, long>> span;
  std::vector<std::pair<long, long>> alignments;
  std::size_t line = 0;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = s.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, tab - start));
    start = tab + 1;
  }
}

inline long parse_long(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(cat("manifest line ", line, ": ", what, " '", s, "' is not an integer"));
  }
}

}  // namespace detail

/// Reads a tab-separated manifest. Each line is
///   path<TAB>label[<TAB>span_start<TAB>span_end[<TAB>a0_start<TAB>a0_end ...]]
/// Blank lines are skipped. Malformed lines raise an Error naming the
/// line number; duplicate paths are reported to `warnings` but kept.
inline std::vector<ManifestEntry> read_manifest(const std::string& path,
                                                std::ostream* warnings = nullptr) {
  std::ifstream is(path);
  if (!is) throw Error(cat("manifest: cannot open '", path, "'"));
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 2)
      throw Error(cat("manifest line ", line_no, ": expected at least path and label"));
    if (fields.size() == 3 || fields.size() % 2 == 1)
      throw Error(cat("manifest line ", line_no,
                      ": span and alignment fields must come in start/end pairs"));
    ManifestEntry e;
    e.line = line_no;
    e.path = fields[0];
    if (e.path.empty()) throw Error(cat("manifest line ", line_no, ": empty path"));
    const long label = detail::parse_long(fields[1], line_no, "label");
    if (label < 0) throw Error(cat("manifest line ", line_no, ": label must be >= 0"));
    e.label = static_cast<int>(label);
    if (fields.size() >= 4) {
      const long s = detail::parse_long(fields[2], line_no, "span start");
      const long t = detail::parse_long(fields[3], line_no, "span end");
      if (s < 0 || t <= s)
        throw Error(cat("manifest line ", line_no, ": invalid span [", s, ", ", t, ")"));
      e.span = {s, t};
    }
    for (std::size_t f = 4; f + 1 < fields.size(); f += 2) {
      const long s = detail::parse_long(fields[f], line_no, "alignment start");
      const long t = detail::parse_long(fields[f + 1], line_no, "alignment end");
      if (s < 0 || t <= s)
        throw Error(cat("manifest line ", line_no, ": invalid alignment [", s, ", ", t, ")"));
      e.alignments.emplace_back(s, t);
    }
    if (!seen.insert(e.path).second && warnings != nullptr)
      *warnings << "manifest line " << line_no << ": duplicate path '" << e.path << "'\n";
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw Error(cat("manifest: '", path, "' contains no entries"));
  return entries;
}

}  // namespace kws
