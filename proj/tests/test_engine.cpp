#include <doctest.h>

#include <cmath>
#include <sstream>

#include "desync/engine.hpp"
#include "desync/model.hpp"

using namespace desync;

namespace {

// n identical ranks in one memory domain, each streaming `bytes` once.
Scenario uniform_compute(int n, double bytes, double b_single = 10e9, double b_cap = 50e9) {
  Scenario s;
  s.system.n_ranks = n;
  s.system.domains.push_back({0, n, b_single, b_cap, DomainKind::Memory});
  KernelSpec k{"stream", bytes, bytes / 10.0, 0, 0};
  s.programs.assign(n, {Compute{k}});
  return s;
}

Scenario pair_exchange(std::int64_t msg_bytes, int n_iters) {
  Scenario s;
  s.system.n_ranks = 2;
  s.system.domains.push_back({0, 2, 10e9, 50e9, DomainKind::Memory});
  s.n_iters = n_iters;
  KernelSpec k{"stream", 1e9, 1e8, 0, 0};
  s.programs = {
      {Compute{k}, Isend{1, msg_bytes}, Irecv{1, msg_bytes}, WaitAll{}},
      {Compute{k}, Isend{0, msg_bytes}, Irecv{0, msg_bytes}, WaitAll{}},
  };
  return s;
}

std::string to_text(const Trace& t) {
  std::ostringstream os;
  t.write(os);
  return os.str();
}

// End of the last non-idle segment (traces pad with trailing idle).
double last_busy_end(const Trace& t, int rank) {
  for (auto it = t.ranks[rank].rbegin(); it != t.ranks[rank].rend(); ++it)
    if (!(it->kind == SegmentKind::Wait && it->detail == "idle")) return it->t_end;
  return 0.0;
}

void check_coverage(const Trace& t) {
  for (const auto& segs : t.ranks) {
    REQUIRE(!segs.empty());
    CHECK(segs.front().t_start == doctest::Approx(0.0));
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      CHECK(segs[i].t_end == doctest::Approx(segs[i + 1].t_start).epsilon(1e-12));
      CHECK(segs[i].t_end >= segs[i].t_start);
    }
    CHECK(segs.back().t_end == doctest::Approx(t.end_time).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("single rank: t = bytes / b_single") {
  Trace t = run(validate_scenario(uniform_compute(1, 1e9)), 0);
  CHECK(t.end_time == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("at exact saturation all ranks finish together") {
  // n_s = 5; per-rank rate b_cap/5 = b_single.
  Trace t = run(validate_scenario(uniform_compute(5, 1e9)), 0);
  CHECK(t.end_time == doctest::Approx(0.1).epsilon(1e-9));
  for (const auto& segs : t.ranks) CHECK(segs.back().t_end == doctest::Approx(0.1));
}

TEST_CASE("over-saturated domain scales with aggregate cap") {
  // 10 ranks demanding 2x the cap take exactly 2x as long.
  Trace t5 = run(validate_scenario(uniform_compute(5, 1e9)), 0);
  Trace t10 = run(validate_scenario(uniform_compute(10, 1e9)), 0);
  CHECK(t5.end_time == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(t10.end_time == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("below saturation ranks do not interfere") {
  Trace t = run(validate_scenario(uniform_compute(4, 1e9)), 0);
  CHECK(t.end_time == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("contended bytes are conserved under staggered membership") {
  // One rank gets extra scalable lead-in so domain membership changes
  // mid-flight; total streamed bytes must still match the rate integral.
  Scenario s = uniform_compute(8, 1e9);
  KernelSpec lead{"lead", 0, 0, 0, 0.03};
  s.programs[0].insert(s.programs[0].begin(), Compute{lead});
  Trace t = run(validate_scenario(s), 0);

  // Collect streaming exec intervals (scalable tails carry a ":s" suffix).
  std::vector<std::pair<double, double>> iv;
  std::vector<double> edges;
  for (const auto& segs : t.ranks)
    for (const auto& seg : segs) {
      if (seg.kind != SegmentKind::Exec) continue;
      if (seg.detail.find(":s") != std::string::npos) continue;
      if (seg.detail.rfind("inject", 0) == 0) continue;
      iv.push_back({seg.t_start, seg.t_end});
      edges.push_back(seg.t_start);
      edges.push_back(seg.t_end);
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const ContentionDomain& dom = s.system.domains[0];
  double bytes = 0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    double mid = 0.5 * (edges[i] + edges[i + 1]);
    int m = 0;
    for (auto [a, b] : iv)
      if (a < mid && mid < b) ++m;
    if (m == 0) continue;
    double rate = std::min(dom.b_single, dom.b_cap / m);
    bytes += m * rate * (edges[i + 1] - edges[i]);
  }
  CHECK(bytes == doctest::Approx(8e9).epsilon(1e-9));
  check_coverage(t);
}

TEST_CASE("eager message: latency plus bytes over bandwidth") {
  // 1e6 B > eager limit by default, so shrink the message instead: 16000 B
  // eager, per iteration cost = compute + latency + bytes/bandwidth.
  Scenario s = pair_exchange(16000, 3);
  Trace t = run(validate_scenario(s), 0);
  double per_iter = 0.1 + 1e-6 + 16000 / 12.5e9;
  CHECK(t.end_time == doctest::Approx(3 * per_iter).epsilon(1e-9));
}

TEST_CASE("rendezvous message costs the same once both sides are posted") {
  Scenario s = pair_exchange(1000000, 3);  // above the 16384 B eager limit
  Trace t = run(validate_scenario(s), 0);
  double per_iter = 0.1 + 1e-6 + 1000000 / 12.5e9;
  CHECK(t.end_time == doctest::Approx(3 * per_iter).epsilon(1e-9));
}

TEST_CASE("rendezvous waits for the receiver, eager does not") {
  // Rank 1 computes twice as long before posting its receive.
  auto make = [](std::int64_t bytes) {
    Scenario s;
    s.system.n_ranks = 2;
    s.system.domains.push_back({0, 2, 10e9, 50e9, DomainKind::Memory});
    KernelSpec kshort{"a", 1e8, 1e7, 0, 0};
    KernelSpec klong{"b", 2e9, 2e8, 0, 0};
    s.programs = {
        {Compute{kshort}, Isend{1, bytes}, WaitAll{}},
        {Compute{klong}, Irecv{0, bytes}, WaitAll{}},
    };
    return s;
  };
  // Eager: sender finishes right after its own compute plus the transfer.
  Trace te = run(validate_scenario(make(16000)), 0);
  CHECK(last_busy_end(te, 0) < 0.05);
  // Rendezvous: sender blocks until the receiver posts at t = 0.2.
  Trace tr = run(validate_scenario(make(1000000)), 0);
  double transfer = 1e-6 + 1000000 / 12.5e9;
  CHECK(tr.ranks[0].back().t_end == doctest::Approx(0.2 + transfer).epsilon(1e-6));
}

TEST_CASE("rendezvous cycle deadlocks") {
  Scenario s;
  s.system.n_ranks = 2;
  s.system.domains.push_back({0, 2, 10e9, 50e9, DomainKind::Memory});
  std::int64_t big = 1000000;
  // Both ranks wait on their send before posting the matching receive.
  s.programs = {
      {Isend{1, big}, WaitAll{}, Irecv{1, big}, WaitAll{}},
      {Isend{0, big}, WaitAll{}, Irecv{0, big}, WaitAll{}},
  };
  CHECK_THROWS_AS(run(validate_scenario(s), 0), DeadlockError);
}

TEST_CASE("barrier releases all ranks at the last arrival plus cost") {
  Scenario s;
  s.system.n_ranks = 4;
  s.system.domains.push_back({0, 4, 10e9, 50e9, DomainKind::Memory});
  KernelSpec k{"k", 0, 0, 0, 0.01};
  s.programs.assign(4, {Compute{k}, Barrier{}});
  s.programs[2] = {Compute{KernelSpec{"k", 0, 0, 0, 0.04}}, Barrier{}};
  Trace t = run(validate_scenario(s), 0);
  CHECK(t.end_time == doctest::Approx(0.04 + 2e-6).epsilon(1e-9));
}

TEST_CASE("injections delay and never speed up") {
  Scenario s = pair_exchange(16000, 5);
  Trace base = run(validate_scenario(s), 0);
  s.injections.push_back({0, 2, 0.05, InjectionKind::CoreBound});
  Trace inj = run(validate_scenario(s), 0);
  CHECK(inj.end_time >= base.end_time);
  CHECK(inj.end_time == doctest::Approx(base.end_time + 0.05).epsilon(1e-6));
}

TEST_CASE("memory-bound injection contends, core-bound does not") {
  // At exact saturation a core spin on rank 0 keeps the others at
  // b_single; they still finish at 0.1.
  Scenario s = uniform_compute(5, 1e9);
  s.injections.push_back({0, 0, 0.05, InjectionKind::CoreBound});
  Trace core = run(validate_scenario(s), 0);
  CHECK(last_busy_end(core, 4) == doctest::Approx(0.1).epsilon(1e-6));

  // Over-saturated domain with a light kernel on rank 0: the injected
  // traffic keeps the domain crowded longer and delays everyone else.
  Scenario o = uniform_compute(6, 1e9);
  std::get<Compute>(o.programs[0][0]).kernel.traffic_bytes = 1e8;
  std::get<Compute>(o.programs[0][0]).kernel.flops = 1e7;
  Trace base = run(validate_scenario(o), 0);
  o.injections.push_back({0, 0, 0.05, InjectionKind::MemoryBound});
  Trace mem = run(validate_scenario(o), 0);
  CHECK(last_busy_end(mem, 4) > last_busy_end(base, 4) + 1e-3);
}

TEST_CASE("identical runs are byte-identical; seeds matter with noise") {
  Scenario s = pair_exchange(16000, 10);
  s.noise = {NoiseKind::Uniform, 0.1, 0};
  ValidatedScenario v = validate_scenario(s);
  Trace a = run(v, 7);
  Trace b = run(v, 7);
  CHECK(to_text(a) == to_text(b));
  Trace c = run(v, 8);
  CHECK(to_text(a) != to_text(c));
  CHECK(c.end_time > 10 * (0.1 + 1e-6 + 16000 / 12.5e9));  // noise only adds
}

TEST_CASE("trace round-trips through its text format") {
  Scenario s = pair_exchange(1000000, 2);
  Trace a = run(validate_scenario(s), 3);
  std::ostringstream os;
  a.write(os);
  std::istringstream is(os.str());
  Trace b = Trace::read(is);
  CHECK(b.end_time == a.end_time);
  CHECK(b.seed == a.seed);
  CHECK(b.scenario_digest == a.scenario_digest);
  REQUIRE(b.n_ranks() == a.n_ranks());
  for (int r = 0; r < a.n_ranks(); ++r) {
    REQUIRE(b.ranks[r].size() == a.ranks[r].size());
    for (std::size_t i = 0; i < a.ranks[r].size(); ++i) CHECK(b.ranks[r][i] == a.ranks[r][i]);
  }
}

TEST_CASE("segment coverage has no gaps or overlaps") {
  Scenario s = pair_exchange(1000000, 4);
  s.injections.push_back({1, 1, 0.02, InjectionKind::MemoryBound});
  Trace t = run(validate_scenario(s), 0);
  check_coverage(t);
}
