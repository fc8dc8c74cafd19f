#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace desync {

enum class SegmentKind { Exec, Wait, Transfer };

const char* to_string(SegmentKind k);

/// One contiguous slice of a rank's timeline.
/// Exec detail is the kernel name for the contended streaming part,
/// "<kernel>:s" for the scalable tail, and "inject:core"/"inject:mem"
/// for injected delays. Wait detail is "waitall", "barrier" or "idle"
/// (trailing idle after the rank's program finished). Transfer detail
/// is "net" (message data in flight while blocked in a wait).
struct Segment {
  SegmentKind kind = SegmentKind::Exec;
  double t_start = 0;
  double t_end = 0;
  int iteration = 0;
  std::string detail;

  double duration() const { return t_end - t_start; }
};

/// The simulator's sole output: per-rank segments covering [0, end_time]
/// without gaps or overlaps.
struct Trace {
  std::vector<std::vector<Segment>> ranks;
  double end_time = 0;
  std::uint64_t seed = 0;
  std::uint64_t scenario_digest = 0;

  int n_ranks() const { return (int)ranks.size(); }

  // Line-delimited format, one segment per line:
  //   rank kind t_start t_end iteration detail
  // preceded by "#"-prefixed header lines. Stable and byte-reproducible.
  void write(std::ostream& os) const;
  static Trace read(std::istream& is);

  void write_csv(std::ostream& os) const;
};

bool operator==(const Segment& a, const Segment& b);

}  // namespace desync
