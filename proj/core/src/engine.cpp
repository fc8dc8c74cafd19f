#include "desync/engine.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <map>
#include <queue>
#include <sstream>
#include <vector>

#include "noise_util.hpp"

namespace desync {

namespace {

enum class EvKind { ItemDone, Timer, WireStart, MsgArrive, Unblock };

// Tie-break at equal time: work completions before message arrivals
// before unblocks, then ascending key, then insertion order.
int ev_prio(EvKind k) {
  switch (k) {
    case EvKind::ItemDone:
    case EvKind::Timer:
    case EvKind::WireStart: return 0;
    case EvKind::MsgArrive: return 1;
    case EvKind::Unblock: return 2;
  }
  return 3;
}

struct Event {
  double t;
  int prio;
  std::int64_t key;
  std::uint64_t seq;
  EvKind kind;
  int idx;                // item / rank / msg, depending on kind
  std::uint64_t version;  // stale-event filter
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.prio != b.prio) return a.prio > b.prio;
    if (a.key != b.key) return a.key > b.key;
    return a.seq > b.seq;
  }
};

// A chunk of bytes draining from a shared resource.
struct WorkItem {
  double remaining = 0;
  std::uint64_t version = 0;
  bool active = false;
  bool is_message = false;
  int owner = -1;  // rank or msg id
};

struct Resource {
  double b_single = 0, b_cap = 0;
  double rate = 0;       // per-item rate, shared by all active items
  double last_time = 0;  // time of last settlement
  std::vector<int> active;
};

struct Msg {
  int src = -1, dst = -1;
  std::int64_t bytes = 0;
  bool eager = true;
  double t_send = -1, t_recv = -1;
  double wire_start = -1, arrival = -1;
  bool send_done = false, recv_done = false;
  int item = -1;
};

struct ReqRef {
  int msg;
  bool is_send;
};

enum class RStage {
  Advancing,
  InjectCore,
  InjectMem,
  Stream,
  Scalable,
  WaitBlocked,
  BarrierBlocked,
  Done
};

const char* stage_name(RStage s) {
  switch (s) {
    case RStage::Advancing: return "advancing";
    case RStage::InjectCore: return "inject-core";
    case RStage::InjectMem: return "inject-mem";
    case RStage::Stream: return "compute-stream";
    case RStage::Scalable: return "compute-scalable";
    case RStage::WaitBlocked: return "blocked-in-wait";
    case RStage::BarrierBlocked: return "blocked-in-barrier";
    case RStage::Done: return "done";
  }
  return "?";
}

struct RankState {
  int iter = 0;
  std::size_t pc = 0;
  RStage stage = RStage::Advancing;
  double stage_start = 0;
  double noise_factor = 1.0;
  const KernelSpec* kernel = nullptr;
  std::deque<const InjectionSpec*> pending_inj;
  std::vector<ReqRef> outstanding;
  std::vector<ReqRef> waited;
  double block_start = 0;
  bool unblock_scheduled = false;
  std::uint64_t timer_version = 0;
  int barrier_gen = 0;
  double done_time = -1;
  std::uint64_t rng = 0;
  bool has_compute = false;
};

struct BarrierRecord {
  std::vector<std::pair<int, double>> entries;  // (rank, entry time)
  bool released = false;
};

class Simulator {
 public:
  Simulator(const ValidatedScenario& vs, std::uint64_t seed)
      : s_(vs.scenario()), digest_(vs.digest()), seed_(seed) {}

  Trace simulate();

 private:
  const Scenario& s_;
  std::uint64_t digest_;
  std::uint64_t seed_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t seq_ = 0;

  std::vector<Resource> resources_;  // parallel to s_.system.domains
  std::vector<WorkItem> items_;
  std::vector<int> rank_item_;  // per-rank compute work item id
  std::vector<Msg> msgs_;
  std::map<std::pair<int, int>, std::deque<int>> unmatched_sends_, unmatched_recvs_;
  std::vector<RankState> ranks_;
  std::vector<BarrierRecord> barriers_;
  std::vector<std::vector<Segment>> segs_;
  double barrier_cost_ = 0;

  void push(double t, EvKind kind, int idx, std::uint64_t version) {
    queue_.push(Event{t, ev_prio(kind), idx, seq_++, kind, idx, version});
  }

  void emit(int r, SegmentKind kind, double t0, double t1, int iter, std::string detail) {
    if (t1 > t0) segs_[r].push_back(Segment{kind, t0, t1, iter, std::move(detail)});
  }

  // --- shared-resource machinery -----------------------------------------

  void settle(int res, double t) {
    Resource& R = resources_[res];
    for (int id : R.active)
      items_[id].remaining = std::max(0.0, items_[id].remaining - R.rate * (t - R.last_time));
    R.last_time = t;
  }

  void reschedule(int res, double t) {
    Resource& R = resources_[res];
    int m = (int)R.active.size();
    if (m == 0) {
      R.rate = 0;
      return;
    }
    R.rate = std::min(R.b_single, R.b_cap / m);
    for (int id : R.active) {
      WorkItem& it = items_[id];
      ++it.version;
      push(t + it.remaining / R.rate, EvKind::ItemDone, id, it.version);
    }
  }

  void join_resource(int item, int res, double t) {
    settle(res, t);
    resources_[res].active.push_back(item);
    items_[item].active = true;
    reschedule(res, t);
  }

  void leave_resource(int item, int res, double t) {
    settle(res, t);
    auto& a = resources_[res].active;
    a.erase(std::find(a.begin(), a.end(), item));
    items_[item].active = false;
    ++items_[item].version;
    reschedule(res, t);
  }

  int new_msg_item(int msg_id, double bytes) {
    items_.push_back(WorkItem{bytes, 0, false, true, msg_id});
    return (int)items_.size() - 1;
  }

  // --- message protocol ---------------------------------------------------

  void start_wire(int mid, double t) {
    Msg& m = msgs_[mid];
    m.wire_start = t;
    const auto& net = s_.system.network;
    if (m.bytes == 0) {
      push(t + net.latency, EvKind::MsgArrive, mid, 0);
      return;
    }
    int nd = s_.system.network_domain_of(m.src);
    if (nd >= 0) {
      m.item = new_msg_item(mid, (double)m.bytes);
      items_[m.item].version = 0;
      join_resource(m.item, nd, t);
    } else {
      push(t + (double)m.bytes / net.bandwidth + net.latency, EvKind::MsgArrive, mid, 0);
    }
  }

  void rendezvous_ready(int mid, double t) {
    double hs = s_.system.network.rendezvous_handshake;
    if (hs > 0)
      push(t + hs, EvKind::WireStart, mid, 0);
    else
      start_wire(mid, t);
  }

  void complete_req(int rank, double t) {
    RankState& rs = ranks_[rank];
    if (rs.stage != RStage::WaitBlocked || rs.unblock_scheduled) return;
    for (const auto& rq : rs.waited) {
      const Msg& m = msgs_[rq.msg];
      if (!(rq.is_send ? m.send_done : m.recv_done)) return;
    }
    rs.unblock_scheduled = true;
    push(t, EvKind::Unblock, rank, 0);
  }

  void post_send(int r, const Isend& snd, double t) {
    auto key = std::make_pair(r, snd.peer);
    int mid;
    auto& rq = unmatched_recvs_[key];
    if (!rq.empty()) {
      mid = rq.front();
      rq.pop_front();
      msgs_[mid].bytes = snd.bytes;
    } else {
      msgs_.push_back(Msg{});
      mid = (int)msgs_.size() - 1;
      msgs_[mid].src = r;
      msgs_[mid].dst = snd.peer;
      msgs_[mid].bytes = snd.bytes;
      unmatched_sends_[key].push_back(mid);
    }
    Msg& m = msgs_[mid];
    m.t_send = t;
    m.eager = snd.bytes <= s_.system.eager_limit_bytes;
    ranks_[r].outstanding.push_back(ReqRef{mid, true});
    if (m.eager) {
      m.send_done = true;  // buffer handed off immediately
      start_wire(mid, t);
    } else if (m.t_recv >= 0) {
      rendezvous_ready(mid, t);
    }
  }

  void post_recv(int r, const Irecv& rcv, double t) {
    auto key = std::make_pair(rcv.peer, r);
    int mid;
    auto& sq = unmatched_sends_[key];
    if (!sq.empty()) {
      mid = sq.front();
      sq.pop_front();
    } else {
      msgs_.push_back(Msg{});
      mid = (int)msgs_.size() - 1;
      msgs_[mid].src = rcv.peer;
      msgs_[mid].dst = r;
      msgs_[mid].bytes = rcv.bytes;
      unmatched_recvs_[key].push_back(mid);
    }
    Msg& m = msgs_[mid];
    m.t_recv = t;
    ranks_[r].outstanding.push_back(ReqRef{mid, false});
    if (m.t_send >= 0) {
      if (m.eager) {
        if (m.arrival >= 0) {
          m.recv_done = true;
          complete_req(r, t);
        }
      } else {
        rendezvous_ready(mid, t);
      }
    }
  }

  void on_msg_arrive(int mid, double t) {
    Msg& m = msgs_[mid];
    m.arrival = t;
    if (m.eager) {
      if (m.t_recv >= 0) {
        m.recv_done = true;
        complete_req(m.dst, t);
      }
    } else {
      m.send_done = true;
      m.recv_done = true;
      complete_req(m.src, t);
      complete_req(m.dst, t);
    }
  }

  // --- compute phases ------------------------------------------------------

  void start_compute(int r, double t) {
    RankState& rs = ranks_[r];
    if (!rs.pending_inj.empty()) {
      start_injection(r, t);
      return;
    }
    const KernelSpec& k = *rs.kernel;
    rs.noise_factor = detail::draw_noise_factor(rs.rng, s_.noise);
    rs.stage_start = t;
    if (k.traffic_bytes > 0) {
      rs.stage = RStage::Stream;
      int id = rank_item_[r];
      items_[id].remaining = k.traffic_bytes * rs.noise_factor;
      join_resource(id, s_.system.memory_domain_of(r), t);
    } else {
      rs.stage = RStage::Scalable;
      push(t + k.scalable_seconds * rs.noise_factor, EvKind::Timer, r, ++rs.timer_version);
    }
  }

  void start_injection(int r, double t) {
    RankState& rs = ranks_[r];
    const InjectionSpec& inj = *rs.pending_inj.front();
    rs.stage_start = t;
    if (inj.kind == InjectionKind::CoreBound) {
      rs.stage = RStage::InjectCore;
      push(t + inj.extra_seconds, EvKind::Timer, r, ++rs.timer_version);
    } else {
      rs.stage = RStage::InjectMem;
      int dom = s_.system.memory_domain_of(r);
      int id = rank_item_[r];
      items_[id].remaining = inj.extra_seconds * s_.system.domains[dom].b_single;
      join_resource(id, dom, t);
    }
  }

  void finish_stage(int r, double t) {
    RankState& rs = ranks_[r];
    switch (rs.stage) {
      case RStage::InjectCore:
        emit(r, SegmentKind::Exec, rs.stage_start, t, rs.iter, "inject:core");
        rs.pending_inj.pop_front();
        rs.stage = RStage::Advancing;
        if (rs.has_compute)
          start_compute(r, t);  // retry the compute phase (or next injection)
        else
          advance(r, t);
        return;
      case RStage::InjectMem:
        leave_resource(rank_item_[r], s_.system.memory_domain_of(r), t);
        emit(r, SegmentKind::Exec, rs.stage_start, t, rs.iter, "inject:mem");
        rs.pending_inj.pop_front();
        rs.stage = RStage::Advancing;
        if (rs.has_compute)
          start_compute(r, t);
        else
          advance(r, t);
        return;
      case RStage::Stream: {
        leave_resource(rank_item_[r], s_.system.memory_domain_of(r), t);
        emit(r, SegmentKind::Exec, rs.stage_start, t, rs.iter, rs.kernel->name);
        if (rs.kernel->scalable_seconds > 0) {
          rs.stage = RStage::Scalable;
          rs.stage_start = t;
          push(t + rs.kernel->scalable_seconds * rs.noise_factor, EvKind::Timer, r,
               ++rs.timer_version);
        } else {
          rs.stage = RStage::Advancing;
          ++rs.pc;
          advance(r, t);
        }
        return;
      }
      case RStage::Scalable:
        emit(r, SegmentKind::Exec, rs.stage_start, t, rs.iter, rs.kernel->name + ":s");
        rs.stage = RStage::Advancing;
        ++rs.pc;
        advance(r, t);
        return;
      default: assert(false);
    }
  }

  // --- wait / barrier ------------------------------------------------------

  void emit_wait_segments(int r, double t0, double t1, const char* wait_detail) {
    RankState& rs = ranks_[r];
    std::vector<std::pair<double, double>> wire;
    for (const auto& rq : rs.waited) {
      const Msg& m = msgs_[rq.msg];
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
      if (lo > cursor) emit(r, SegmentKind::Wait, cursor, lo, rs.iter, wait_detail);
      emit(r, SegmentKind::Transfer, lo, hi, rs.iter, "net");
      cursor = hi;
    }
    if (cursor < t1) emit(r, SegmentKind::Wait, cursor, t1, rs.iter, wait_detail);
  }

  void on_unblock(int r, double t) {
    RankState& rs = ranks_[r];
    if (rs.stage == RStage::WaitBlocked) {
      emit_wait_segments(r, rs.block_start, t, "waitall");
      rs.waited.clear();
      rs.outstanding.clear();
      rs.unblock_scheduled = false;
      rs.stage = RStage::Advancing;
      ++rs.pc;
      advance(r, t);
    } else if (rs.stage == RStage::BarrierBlocked) {
      emit(r, SegmentKind::Wait, rs.block_start, t, rs.iter, "barrier");
      rs.stage = RStage::Advancing;
      ++rs.pc;
      advance(r, t);
    }
  }

  void arrive_barrier(int r, double t) {
    RankState& rs = ranks_[r];
    int gen = rs.barrier_gen++;
    if ((int)barriers_.size() <= gen) barriers_.resize(gen + 1);
    BarrierRecord& rec = barriers_[gen];
    rec.entries.emplace_back(r, t);
    rs.stage = RStage::BarrierBlocked;
    rs.block_start = t;
    if ((int)rec.entries.size() == s_.system.n_ranks) {
      double latest = 0;
      for (const auto& [rank, entry] : rec.entries) latest = std::max(latest, entry);
      double release = latest + barrier_cost_;
      rec.released = true;
      std::sort(rec.entries.begin(), rec.entries.end());
      for (const auto& [rank, entry] : rec.entries) push(release, EvKind::Unblock, rank, 0);
    }
  }

  // --- program advancement -------------------------------------------------

  void advance(int r, double t) {
    RankState& rs = ranks_[r];
    const auto& prog = s_.programs[r];
    while (true) {
      if (rs.pc == prog.size()) {
        rs.pc = 0;
        ++rs.iter;
        if (rs.iter == s_.n_iters) {
          rs.stage = RStage::Done;
          rs.done_time = t;
          return;
        }
        load_injections(r);
        if (!rs.has_compute && !rs.pending_inj.empty()) {
          start_injection(r, t);
          return;
        }
      }
      const Phase& p = prog[rs.pc];
      if (auto* c = std::get_if<Compute>(&p)) {
        rs.kernel = &c->kernel;
        start_compute(r, t);
        return;
      } else if (auto* snd = std::get_if<Isend>(&p)) {
        post_send(r, *snd, t);
        ++rs.pc;
      } else if (auto* rcv = std::get_if<Irecv>(&p)) {
        post_recv(r, *rcv, t);
        ++rs.pc;
      } else if (std::holds_alternative<WaitAll>(p)) {
        bool all_done = true;
        for (const auto& rq : rs.outstanding) {
          const Msg& m = msgs_[rq.msg];
          if (!(rq.is_send ? m.send_done : m.recv_done)) {
            all_done = false;
            break;
          }
        }
        if (all_done) {
          rs.outstanding.clear();
          ++rs.pc;
        } else {
          rs.stage = RStage::WaitBlocked;
          rs.block_start = t;
          rs.waited = rs.outstanding;
          rs.unblock_scheduled = false;
          return;
        }
      } else {  // Barrier
        arrive_barrier(r, t);
        return;
      }
    }
  }

  void load_injections(int r) {
    RankState& rs = ranks_[r];
    rs.pending_inj.clear();
    for (const auto& inj : s_.injections)
      if (inj.rank == r && inj.iteration == rs.iter) rs.pending_inj.push_back(&inj);
  }

  [[noreturn]] void report_deadlock(double t) {
    std::ostringstream os;
    os << "Deadlock: no runnable rank at t=" << t << "; blocked state:";
    for (int r = 0; r < s_.system.n_ranks; ++r) {
      const RankState& rs = ranks_[r];
      if (rs.stage == RStage::Done) continue;
      os << " rank" << r << "=" << stage_name(rs.stage) << "(iter=" << rs.iter
         << ",pc=" << rs.pc << ")";
    }
    throw DeadlockError(os.str());
  }
};

Trace Simulator::simulate() {
  const int n = s_.system.n_ranks;
  barrier_cost_ = barrier_cost(s_.system.network, n);
  resources_.resize(s_.system.domains.size());
  for (std::size_t i = 0; i < s_.system.domains.size(); ++i) {
    resources_[i].b_single = s_.system.domains[i].b_single;
    resources_[i].b_cap = s_.system.domains[i].b_cap;
  }
  ranks_.resize(n);
  segs_.resize(n);
  rank_item_.resize(n);
  for (int r = 0; r < n; ++r) {
    items_.push_back(WorkItem{0, 0, false, false, r});
    rank_item_[r] = (int)items_.size() - 1;
    ranks_[r].rng = detail::noise_rng_init(seed_, s_.noise, r);
    for (const auto& p : s_.programs[r])
      if (std::holds_alternative<Compute>(p)) ranks_[r].has_compute = true;
    load_injections(r);
  }
  for (int r = 0; r < n; ++r) {
    RankState& rs = ranks_[r];
    if (!rs.has_compute && !rs.pending_inj.empty())
      start_injection(r, 0.0);
    else
      advance(r, 0.0);
  }

  double now = 0;
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now = ev.t;
    switch (ev.kind) {
      case EvKind::ItemDone: {
        WorkItem& it = items_[ev.idx];
        if (!it.active || it.version != ev.version) break;  // stale
        if (it.is_message) {
          int mid = it.owner;
          int nd = s_.system.network_domain_of(msgs_[mid].src);
          leave_resource(ev.idx, nd, now);
          push(now + s_.system.network.latency, EvKind::MsgArrive, mid, 0);
        } else {
          finish_stage(it.owner, now);
        }
        break;
      }
      case EvKind::Timer: {
        RankState& rs = ranks_[ev.idx];
        if (ev.version != rs.timer_version) break;
        finish_stage(ev.idx, now);
        break;
      }
      case EvKind::WireStart: start_wire(ev.idx, now); break;
      case EvKind::MsgArrive: on_msg_arrive(ev.idx, now); break;
      case EvKind::Unblock: on_unblock(ev.idx, now); break;
    }
  }

  for (int r = 0; r < n; ++r)
    if (ranks_[r].stage != RStage::Done) report_deadlock(now);

  Trace t;
  t.seed = seed_;
  t.scenario_digest = digest_;
  for (int r = 0; r < n; ++r) t.end_time = std::max(t.end_time, ranks_[r].done_time);
  for (int r = 0; r < n; ++r) {
    double last = segs_[r].empty() ? 0.0 : segs_[r].back().t_end;
    if (last < t.end_time)
      segs_[r].push_back(
          Segment{SegmentKind::Wait, last, t.end_time, s_.n_iters - 1, "idle"});
  }
  t.ranks = std::move(segs_);
  return t;
}

}  // namespace

Trace run(const ValidatedScenario& s, std::uint64_t seed) {
  return Simulator(s, seed).simulate();
}

}  // namespace desync
