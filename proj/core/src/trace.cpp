#include "desync/trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace desync {

const char* to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Exec: return "exec";
    case SegmentKind::Wait: return "wait";
    case SegmentKind::Transfer: return "transfer";
  }
  return "?";
}

bool operator==(const Segment& a, const Segment& b) {
  return a.kind == b.kind && a.t_start == b.t_start && a.t_end == b.t_end &&
         a.iteration == b.iteration && a.detail == b.detail;
}

namespace {

std::string fmt_time(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

SegmentKind parse_kind(const std::string& s) {
  if (s == "exec") return SegmentKind::Exec;
  if (s == "wait") return SegmentKind::Wait;
  if (s == "transfer") return SegmentKind::Transfer;
  throw std::runtime_error("ParseError: unknown segment kind '" + s + "'");
}

}  // namespace

void Trace::write(std::ostream& os) const {
  char buf[128];
  os << "# desync-trace 1\n";
  std::snprintf(buf, sizeof buf, "# end_time %s\n", fmt_time(end_time).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "# seed %" PRIu64 "\n", seed);
  os << buf;
  std::snprintf(buf, sizeof buf, "# digest %" PRIu64 "\n", scenario_digest);
  os << buf;
  std::snprintf(buf, sizeof buf, "# n_ranks %d\n", (int)ranks.size());
  os << buf;
  for (int r = 0; r < (int)ranks.size(); ++r) {
    for (const auto& seg : ranks[r]) {
      os << r << ' ' << to_string(seg.kind) << ' ' << fmt_time(seg.t_start) << ' '
         << fmt_time(seg.t_end) << ' ' << seg.iteration << ' ' << seg.detail << '\n';
    }
  }
}

Trace Trace::read(std::istream& is) {
  Trace t;
  std::string line;
  int n_ranks = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "end_time") hs >> t.end_time;
      else if (key == "seed") hs >> t.seed;
      else if (key == "digest") hs >> t.scenario_digest;
      else if (key == "n_ranks") hs >> n_ranks;
      continue;
    }
    std::istringstream ls(line);
    int rank;
    std::string kind;
    Segment seg;
    if (!(ls >> rank >> kind >> seg.t_start >> seg.t_end >> seg.iteration >> seg.detail))
      throw std::runtime_error("ParseError: bad trace line: " + line);
    seg.kind = parse_kind(kind);
    if (rank < 0) throw std::runtime_error("ParseError: negative rank in trace");
    if (rank >= (int)t.ranks.size()) t.ranks.resize(rank + 1);
    t.ranks[rank].push_back(std::move(seg));
  }
  if (n_ranks > (int)t.ranks.size()) t.ranks.resize(n_ranks);
  return t;
}

void Trace::write_csv(std::ostream& os) const {
  os << "rank,kind,t_start,t_end,iteration,detail\n";
  for (int r = 0; r < (int)ranks.size(); ++r)
    for (const auto& seg : ranks[r])
      os << r << ',' << to_string(seg.kind) << ',' << fmt_time(seg.t_start) << ','
         << fmt_time(seg.t_end) << ',' << seg.iteration << ',' << seg.detail << '\n';
}

}  // namespace desync
