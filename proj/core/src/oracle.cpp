#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "desync/engine.hpp"
#include "noise_util.hpp"

// Reference integrator: advances all remaining work explicitly in time
// steps bounded by dt, with per-domain rates recomputed on every pass.
// Deliberately written with simple linear scans instead of the event
// queue the production engine uses.

namespace desync {

namespace {

enum class OStage {
  Ready,
  InjectCore,
  InjectMem,
  Stream,
  Scalable,
  WaitBlocked,
  BarrierBlocked,
  Done
};

struct ORank {
  int iter = 0;
  std::size_t pc = 0;
  OStage stage = OStage::Ready;
  double remaining = 0;  // bytes (Stream/InjectMem) or seconds (others)
  double stage_start = 0;
  double noise_factor = 1;
  const KernelSpec* kernel = nullptr;
  std::deque<const InjectionSpec*> pending_inj;
  std::vector<std::pair<int, bool>> outstanding;  // (msg, is_send)
  std::vector<std::pair<int, bool>> waited;
  double block_start = 0;
  int barrier_gen = 0;
  double done_time = -1;
  std::uint64_t rng = 0;
  bool has_compute = false;
};

enum class MStage { Unpaired, AwaitPartner, Handshake, StreamBytes, Latency, Arrived };

struct OMsg {
  int src = -1, dst = -1;
  std::int64_t bytes = 0;
  bool eager = true;
  double t_send = -1, t_recv = -1;
  MStage mstage = MStage::Unpaired;
  double remaining = 0;  // seconds or bytes depending on mstage
  double wire_start = -1, arrival = -1;
  bool send_done = false, recv_done = false;
};

struct OBarrier {
  int count = 0;
  double latest_entry = 0;
  bool counting_down = false;
  double remaining = 0;  // seconds until release once full
};

class Oracle {
 public:
  Oracle(const ValidatedScenario& vs, std::uint64_t seed, double dt)
      : s_(vs.scenario()), digest_(vs.digest()), seed_(seed), dt_(dt) {}

  Trace integrate();

 private:
  const Scenario& s_;
  std::uint64_t digest_;
  std::uint64_t seed_;
  double dt_;

  std::vector<ORank> ranks_;
  std::vector<OMsg> msgs_;
  std::map<std::pair<int, int>, std::deque<int>> open_sends_, open_recvs_;
  std::vector<OBarrier> barriers_;
  std::vector<std::vector<Segment>> segs_;
  double now_ = 0;
  double cost_ = 0;

  void emit(int r, SegmentKind kind, double t0, double t1, int iter, std::string detail) {
    if (t1 > t0) segs_[r].push_back(Segment{kind, t0, t1, iter, std::move(detail)});
  }

  bool msg_uses_domain(const OMsg& m) const {
    return s_.system.network_domain_of(m.src) >= 0;
  }

  // Number of byte-draining entities per domain right now.
  void count_active(std::vector<int>& m) const {
    std::fill(m.begin(), m.end(), 0);
    for (int r = 0; r < (int)ranks_.size(); ++r)
      if (ranks_[r].stage == OStage::Stream || ranks_[r].stage == OStage::InjectMem)
        m[s_.system.memory_domain_of(r)]++;
    for (const auto& msg : msgs_)
      if (msg.mstage == MStage::StreamBytes && msg_uses_domain(msg))
        m[s_.system.network_domain_of(msg.src)]++;
  }

  double domain_rate(int d, const std::vector<int>& m) const {
    if (m[d] == 0) return 0;
    const auto& dom = s_.system.domains[d];
    return std::min(dom.b_single, dom.b_cap / m[d]);
  }

  double rank_rate(int r, const std::vector<int>& m) const {
    const ORank& rs = ranks_[r];
    switch (rs.stage) {
      case OStage::Stream:
      case OStage::InjectMem: return domain_rate(s_.system.memory_domain_of(r), m);
      case OStage::InjectCore:
      case OStage::Scalable: return 1.0;
      default: return 0.0;
    }
  }

  double msg_rate(const OMsg& msg, const std::vector<int>& m) const {
    switch (msg.mstage) {
      case MStage::Handshake:
      case MStage::Latency: return 1.0;
      case MStage::StreamBytes:
        if (msg_uses_domain(msg)) return domain_rate(s_.system.network_domain_of(msg.src), m);
        return s_.system.network.bandwidth;
      default: return 0.0;
    }
  }

  // --- protocol ------------------------------------------------------------

  void start_wire(OMsg& m) {
    m.wire_start = now_;
    if (m.bytes == 0) {
      m.mstage = MStage::Latency;
      m.remaining = s_.system.network.latency;
    } else {
      m.mstage = MStage::StreamBytes;
      m.remaining = (double)m.bytes;
      if (!msg_uses_domain(m))
        m.remaining = (double)m.bytes;  // drained at network.bandwidth
    }
  }

  void pair_ready(OMsg& m) {
    // Both sides posted (rendezvous) or send posted (eager).
    if (m.eager) {
      start_wire(m);
    } else {
      double hs = s_.system.network.rendezvous_handshake;
      if (hs > 0) {
        m.mstage = MStage::Handshake;
        m.remaining = hs;
      } else {
        start_wire(m);
      }
    }
  }

  void post_send(int r, const Isend& snd) {
    auto key = std::make_pair(r, snd.peer);
    int mid;
    auto& rq = open_recvs_[key];
    if (!rq.empty()) {
      mid = rq.front();
      rq.pop_front();
      msgs_[mid].bytes = snd.bytes;
    } else {
      msgs_.push_back(OMsg{});
      mid = (int)msgs_.size() - 1;
      msgs_[mid].src = r;
      msgs_[mid].dst = snd.peer;
      msgs_[mid].bytes = snd.bytes;
      open_sends_[key].push_back(mid);
    }
    OMsg& m = msgs_[mid];
    m.t_send = now_;
    m.eager = snd.bytes <= s_.system.eager_limit_bytes;
    ranks_[r].outstanding.emplace_back(mid, true);
    if (m.eager) {
      m.send_done = true;
      pair_ready(m);
    } else if (m.t_recv >= 0) {
      pair_ready(m);
    } else {
      m.mstage = MStage::AwaitPartner;
    }
  }

  void post_recv(int r, const Irecv& rcv) {
    auto key = std::make_pair(rcv.peer, r);
    int mid;
    auto& sq = open_sends_[key];
    if (!sq.empty()) {
      mid = sq.front();
      sq.pop_front();
    } else {
      msgs_.push_back(OMsg{});
      mid = (int)msgs_.size() - 1;
      msgs_[mid].src = rcv.peer;
      msgs_[mid].dst = r;
      msgs_[mid].bytes = rcv.bytes;
      open_recvs_[key].push_back(mid);
    }
    OMsg& m = msgs_[mid];
    m.t_recv = now_;
    ranks_[r].outstanding.emplace_back(mid, false);
    if (m.t_send >= 0) {
      if (m.eager) {
        if (m.mstage == MStage::Arrived) m.recv_done = true;
      } else if (m.mstage == MStage::AwaitPartner) {
        pair_ready(m);
      }
    }
  }

  void msg_transition(OMsg& m) {
    switch (m.mstage) {
      case MStage::Handshake: start_wire(m); break;
      case MStage::StreamBytes:
        m.mstage = MStage::Latency;
        m.remaining = s_.system.network.latency;
        if (m.remaining <= 0) msg_transition(m);
        break;
      case MStage::Latency:
        m.mstage = MStage::Arrived;
        m.arrival = now_;
        if (m.eager) {
          if (m.t_recv >= 0) m.recv_done = true;
        } else {
          m.send_done = true;
          m.recv_done = true;
        }
        break;
      default: break;
    }
  }

  // --- compute -------------------------------------------------------------

  void start_compute(int r) {
    ORank& rs = ranks_[r];
    if (!rs.pending_inj.empty()) {
      start_injection(r);
      return;
    }
    const KernelSpec& k = *rs.kernel;
    rs.noise_factor = detail::draw_noise_factor(rs.rng, s_.noise);
    rs.stage_start = now_;
    if (k.traffic_bytes > 0) {
      rs.stage = OStage::Stream;
      rs.remaining = k.traffic_bytes * rs.noise_factor;
    } else {
      rs.stage = OStage::Scalable;
      rs.remaining = k.scalable_seconds * rs.noise_factor;
    }
  }

  void start_injection(int r) {
    ORank& rs = ranks_[r];
    const InjectionSpec& inj = *rs.pending_inj.front();
    rs.stage_start = now_;
    if (inj.kind == InjectionKind::CoreBound) {
      rs.stage = OStage::InjectCore;
      rs.remaining = inj.extra_seconds;
    } else {
      rs.stage = OStage::InjectMem;
      int d = s_.system.memory_domain_of(r);
      rs.remaining = inj.extra_seconds * s_.system.domains[d].b_single;
    }
  }

  void rank_transition(int r) {
    ORank& rs = ranks_[r];
    switch (rs.stage) {
      case OStage::InjectCore:
      case OStage::InjectMem:
        emit(r, SegmentKind::Exec, rs.stage_start, now_, rs.iter,
             rs.stage == OStage::InjectCore ? "inject:core" : "inject:mem");
        rs.pending_inj.pop_front();
        rs.stage = OStage::Ready;
        if (rs.has_compute)
          start_compute(r);
        else
          step_program(r);
        break;
      case OStage::Stream:
        emit(r, SegmentKind::Exec, rs.stage_start, now_, rs.iter, rs.kernel->name);
        if (rs.kernel->scalable_seconds > 0) {
          rs.stage = OStage::Scalable;
          rs.stage_start = now_;
          rs.remaining = rs.kernel->scalable_seconds * rs.noise_factor;
        } else {
          rs.stage = OStage::Ready;
          ++rs.pc;
          step_program(r);
        }
        break;
      case OStage::Scalable:
        emit(r, SegmentKind::Exec, rs.stage_start, now_, rs.iter, rs.kernel->name + ":s");
        rs.stage = OStage::Ready;
        ++rs.pc;
        step_program(r);
        break;
      default: break;
    }
  }

  void emit_wait_segments(int r, double t0, double t1) {
    ORank& rs = ranks_[r];
    std::vector<std::pair<double, double>> wire;
    for (const auto& [mid, is_send] : rs.waited) {
      const OMsg& m = msgs_[mid];
      if (m.wire_start < 0) continue;
      double lo = std::max(m.wire_start, t0);
      double hi = std::min(m.arrival >= 0 ? m.arrival : t1, t1);
      if (hi > lo) wire.emplace_back(lo, hi);
    }
    std::sort(wire.begin(), wire.end());
    double cursor = t0;
    for (auto [lo, hi] : wire) {
      if (hi <= cursor) continue;
      lo = std::max(lo, cursor);
      if (lo > cursor) emit(r, SegmentKind::Wait, cursor, lo, rs.iter, "waitall");
      emit(r, SegmentKind::Transfer, lo, hi, rs.iter, "net");
      cursor = hi;
    }
    if (cursor < t1) emit(r, SegmentKind::Wait, cursor, t1, rs.iter, "waitall");
  }

  bool waitall_complete(const ORank& rs) const {
    for (const auto& [mid, is_send] : rs.waited)
      if (!(is_send ? msgs_[mid].send_done : msgs_[mid].recv_done)) return false;
    return true;
  }

  // Advances a rank through zero-time phases until it blocks or finishes.
  void step_program(int r) {
    ORank& rs = ranks_[r];
    const auto& prog = s_.programs[r];
    while (true) {
      if (rs.pc == prog.size()) {
        rs.pc = 0;
        ++rs.iter;
        if (rs.iter == s_.n_iters) {
          rs.stage = OStage::Done;
          rs.done_time = now_;
          return;
        }
        load_injections(r);
        if (!rs.has_compute && !rs.pending_inj.empty()) {
          start_injection(r);
          return;
        }
      }
      const Phase& p = prog[rs.pc];
      if (auto* c = std::get_if<Compute>(&p)) {
        rs.kernel = &c->kernel;
        start_compute(r);
        return;
      } else if (auto* snd = std::get_if<Isend>(&p)) {
        post_send(r, *snd);
        ++rs.pc;
      } else if (auto* rcv = std::get_if<Irecv>(&p)) {
        post_recv(r, *rcv);
        ++rs.pc;
      } else if (std::holds_alternative<WaitAll>(p)) {
        rs.waited = rs.outstanding;
        if (waitall_complete(rs)) {
          rs.waited.clear();
          rs.outstanding.clear();
          ++rs.pc;
        } else {
          rs.stage = OStage::WaitBlocked;
          rs.block_start = now_;
          return;
        }
      } else {  // Barrier
        int gen = rs.barrier_gen++;
        if ((int)barriers_.size() <= gen) barriers_.resize(gen + 1);
        OBarrier& b = barriers_[gen];
        b.count++;
        b.latest_entry = std::max(b.latest_entry, now_);
        rs.stage = OStage::BarrierBlocked;
        rs.block_start = now_;
        if (b.count == s_.system.n_ranks) {
          b.counting_down = true;
          b.remaining = cost_;
        }
        return;
      }
    }
  }

  void load_injections(int r) {
    ORank& rs = ranks_[r];
    rs.pending_inj.clear();
    for (const auto& inj : s_.injections)
      if (inj.rank == r && inj.iteration == rs.iter) rs.pending_inj.push_back(&inj);
  }
};

Trace Oracle::integrate() {
  if (!(dt_ > 0)) throw ValidationError("NonPositiveInput: oracle dt must be > 0");
  const int n = s_.system.n_ranks;
  cost_ = barrier_cost(s_.system.network, n);
  ranks_.resize(n);
  segs_.resize(n);
  for (int r = 0; r < n; ++r) {
    ranks_[r].rng = detail::noise_rng_init(seed_, s_.noise, r);
    for (const auto& p : s_.programs[r])
      if (std::holds_alternative<Compute>(p)) ranks_[r].has_compute = true;
    load_injections(r);
  }
  for (int r = 0; r < n; ++r) {
    if (!ranks_[r].has_compute && !ranks_[r].pending_inj.empty())
      start_injection(r);
    else
      step_program(r);
  }

  std::vector<int> active(s_.system.domains.size(), 0);
  double step_end = dt_;
  const double inf = std::numeric_limits<double>::infinity();

  while (true) {
    bool all_done = true;
    for (const auto& rs : ranks_)
      if (rs.stage != OStage::Done) {
        all_done = false;
        break;
      }
    if (all_done) break;

    count_active(active);

    // Earliest depletion across every running countdown at frozen rates.
    double tau = inf;
    for (int r = 0; r < n; ++r) {
      double rate = rank_rate(r, active);
      if (rate > 0) tau = std::min(tau, ranks_[r].remaining / rate);
    }
    for (const auto& m : msgs_) {
      double rate = msg_rate(m, active);
      if (rate > 0) tau = std::min(tau, m.remaining / rate);
    }
    for (const auto& b : barriers_)
      if (b.counting_down) tau = std::min(tau, b.remaining);

    if (tau == inf) {
      std::ostringstream os;
      os << "Deadlock: oracle has no runnable rank at t=" << now_;
      throw DeadlockError(os.str());
    }

    double t_next = std::min(now_ + tau, step_end);
    double elapsed = t_next - now_;
    // Countdowns whose depletion set the step length are zeroed exactly
    // so fp residue cannot stall progress. The absolute term covers
    // residues below the ulp of the current time, where now_ + tau
    // would not advance the clock at all.
    const double slack = std::max(elapsed * (1 + 1e-9), now_ * 1e-12);

    for (int r = 0; r < n; ++r) {
      double rate = rank_rate(r, active);
      if (rate <= 0) continue;
      if (ranks_[r].remaining / rate <= slack)
        ranks_[r].remaining = 0;
      else
        ranks_[r].remaining -= rate * elapsed;
    }
    for (auto& m : msgs_) {
      double rate = msg_rate(m, active);
      if (rate <= 0) continue;
      if (m.remaining / rate <= slack)
        m.remaining = 0;
      else
        m.remaining -= rate * elapsed;
    }
    for (auto& b : barriers_) {
      if (!b.counting_down) continue;
      if (b.remaining <= slack)
        b.remaining = 0;
      else
        b.remaining -= elapsed;
    }
    now_ = t_next;
    while (now_ >= step_end) step_end += dt_;

    // Depleted countdowns fire in the engine's tie-break order:
    // completions, then message arrivals, then barrier releases.
    for (int r = 0; r < n; ++r) {
      ORank& rs = ranks_[r];
      if ((rs.stage == OStage::Stream || rs.stage == OStage::Scalable ||
           rs.stage == OStage::InjectCore || rs.stage == OStage::InjectMem) &&
          rs.remaining <= 0)
        rank_transition(r);
    }
    for (auto& m : msgs_) {
      while ((m.mstage == MStage::Handshake || m.mstage == MStage::StreamBytes ||
              m.mstage == MStage::Latency) &&
             m.remaining <= 0)
        msg_transition(m);
    }
    for (auto& b : barriers_) {
      if (b.counting_down && b.remaining <= 0) {
        b.counting_down = false;
        b.count = -1;  // consumed
      }
    }

    // Unblock ranks whose condition is now satisfied; cascades may
    // complete further ranks at the same instant.
    bool changed = true;
    while (changed) {
      changed = false;
      for (int r = 0; r < n; ++r) {
        ORank& rs = ranks_[r];
        if (rs.stage == OStage::WaitBlocked && waitall_complete(rs)) {
          emit_wait_segments(r, rs.block_start, now_);
          rs.waited.clear();
          rs.outstanding.clear();
          rs.stage = OStage::Ready;
          ++rs.pc;
          step_program(r);
          changed = true;
        } else if (rs.stage == OStage::BarrierBlocked) {
          int gen = rs.barrier_gen - 1;
          if (gen >= 0 && gen < (int)barriers_.size() && barriers_[gen].count == -1) {
            emit(r, SegmentKind::Wait, rs.block_start, now_, rs.iter, "barrier");
            rs.stage = OStage::Ready;
            ++rs.pc;
            step_program(r);
            changed = true;
          }
        }
      }
    }
  }

  Trace t;
  t.seed = seed_;
  t.scenario_digest = digest_;
  for (int r = 0; r < n; ++r) t.end_time = std::max(t.end_time, ranks_[r].done_time);
  for (int r = 0; r < n; ++r) {
    double last = segs_[r].empty() ? 0.0 : segs_[r].back().t_end;
    if (last < t.end_time)
      segs_[r].push_back(Segment{SegmentKind::Wait, last, t.end_time, s_.n_iters - 1, "idle"});
  }
  t.ranks = std::move(segs_);
  return t;
}

}  // namespace

Trace oracle_run(const ValidatedScenario& s, std::uint64_t seed, double dt) {
  return Oracle(s, seed, dt).integrate();
}

}  // namespace desync
