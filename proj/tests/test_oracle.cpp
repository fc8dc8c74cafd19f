#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "desync/engine.hpp"
#include "desync/model.hpp"

using namespace desync;

namespace {

constexpr double kDt = 1e-6;

SystemSpec one_domain(int n, double b_single = 10e9, double b_cap = 50e9) {
  SystemSpec sys;
  sys.n_ranks = n;
  sys.domains.push_back({0, n, b_single, b_cap, DomainKind::Memory});
  return sys;
}

Scenario compute_only(int n, double bytes) {
  Scenario s;
  s.system = one_domain(n);
  s.programs.assign(n, {Compute{KernelSpec{"stream", bytes, bytes / 10, 0, 0}}});
  return s;
}

Scenario ring(int n, std::int64_t msg, int iters, double bytes, Boundary bc) {
  Scenario s;
  s.system = one_domain(n);
  s.boundary = bc;
  s.n_iters = iters;
  s.programs.resize(n);
  for (int r = 0; r < n; ++r)
    s.programs[r] = {Compute{KernelSpec{"stream", bytes, bytes / 10, 0, 0}},
                     Isend{r + 1, msg}, Isend{r - 1, msg}, Irecv{r + 1, msg},
                     Irecv{r - 1, msg}, WaitAll{}};
  return s;
}

// The golden suite: small mixed scenarios covering contention regimes,
// both protocols, barriers, injections, noise and a network-port domain.
std::vector<std::pair<std::string, Scenario>> golden_suite() {
  std::vector<std::pair<std::string, Scenario>> suite;

  suite.push_back({"single_rank", compute_only(1, 1e9)});
  suite.push_back({"saturated_5", compute_only(5, 1e9)});
  suite.push_back({"oversaturated_10", compute_only(10, 1e9)});

  {
    Scenario s = compute_only(4, 8e8);
    for (auto& prog : s.programs)
      std::get<Compute>(prog[0]).kernel.scalable_seconds = 0.005;
    s.programs[2] = {Compute{KernelSpec{"lead", 0, 0, 0, 0.02}},
                     Compute{KernelSpec{"stream", 8e8, 8e7, 0, 0.005}}};
    suite.push_back({"staggered_scalable", s});
  }

  suite.push_back({"ring_eager", ring(8, 8000, 5, 2e8, Boundary::Periodic)});
  suite.push_back({"ring_rendezvous", ring(6, 500000, 4, 2e8, Boundary::Open)});

  {
    Scenario s;
    s.system = one_domain(2);
    s.programs = {
        {Compute{KernelSpec{"a", 1e8, 1e7, 0, 0}}, Isend{1, 800000}, WaitAll{}},
        {Compute{KernelSpec{"b", 2e9, 2e8, 0, 0}}, Irecv{0, 800000}, WaitAll{}},
    };
    suite.push_back({"late_receiver", s});
  }

  {
    Scenario s = ring(6, 4000, 3, 2e8, Boundary::Periodic);
    for (auto& prog : s.programs) prog.push_back(Barrier{});
    std::get<Compute>(s.programs[3][0]).kernel.traffic_bytes = 5e8;
    suite.push_back({"barrier_staggered", s});
  }

  {
    Scenario s = ring(5, 8000, 6, 2e8, Boundary::Periodic);
    s.injections.push_back({2, 2, 0.01, InjectionKind::CoreBound});
    suite.push_back({"core_injection", s});
  }

  {
    Scenario s = compute_only(5, 1e9);
    s.injections.push_back({0, 0, 0.02, InjectionKind::MemoryBound});
    suite.push_back({"memory_injection", s});
  }

  {
    Scenario s = ring(4, 8000, 5, 2e8, Boundary::Periodic);
    s.noise = {NoiseKind::Uniform, 0.1, 0};
    suite.push_back({"uniform_noise", s});
  }

  {
    Scenario s = ring(4, 8000, 5, 2e8, Boundary::Periodic);
    s.noise = {NoiseKind::Exponential, 0.05, 0};
    suite.push_back({"exponential_noise", s});
  }

  {
    // Slow shared injection ports, two per four ranks.
    Scenario s = ring(4, 8000, 4, 2e8, Boundary::Periodic);
    s.system.domains.push_back({0, 2, 4e6, 8e6, DomainKind::NetworkInjection});
    s.system.domains.push_back({2, 4, 4e6, 8e6, DomainKind::NetworkInjection});
    suite.push_back({"injection_ports", s});
  }

  return suite;
}

}  // namespace

TEST_CASE("golden suite: event engine matches the fixed-step oracle") {
  auto suite = golden_suite();
  REQUIRE(suite.size() >= 10);
  for (const auto& [name, scenario] : suite) {
    CAPTURE(name);
    ValidatedScenario v = validate_scenario(scenario);
    Trace fast = run(v, 11);
    Trace slow = oracle_run(v, 11, kDt);

    REQUIRE(fast.end_time > 0);
    CHECK(std::abs(fast.end_time - slow.end_time) / fast.end_time < 0.01);

    REQUIRE(fast.n_ranks() == slow.n_ranks());
    for (int r = 0; r < fast.n_ranks(); ++r) {
      CAPTURE(r);
      REQUIRE(fast.ranks[r].size() == slow.ranks[r].size());
      for (std::size_t i = 0; i < fast.ranks[r].size(); ++i) {
        const Segment& a = fast.ranks[r][i];
        const Segment& b = slow.ranks[r][i];
        CHECK(a.kind == b.kind);
        CHECK(a.detail == b.detail);
        CHECK(std::abs(a.t_start - b.t_start) < 10 * kDt);
        CHECK(std::abs(a.t_end - b.t_end) < 10 * kDt);
      }
    }
  }
}

TEST_CASE("oracle converges as dt shrinks") {
  ValidatedScenario v = validate_scenario(compute_only(7, 5e8));
  Trace exact = run(v, 0);
  double prev = 1e9;
  for (double dt : {1e-4, 1e-5, 1e-6}) {
    Trace t = oracle_run(v, 0, dt);
    double err = std::abs(t.end_time - exact.end_time);
    CHECK(err <= prev + dt);  // no divergence as dt shrinks
    CHECK(err < 20 * dt);
    prev = err;
  }
}
