#include <doctest.h>

#include <set>

#include "desync/model.hpp"

using namespace desync;

namespace {

SystemSpec two_domain_system(int n_ranks = 40, int per_domain = 20) {
  SystemSpec sys;
  sys.n_ranks = n_ranks;
  for (int r = 0; r < n_ranks; r += per_domain)
    sys.domains.push_back({r, r + per_domain, 8e9, 40e9, DomainKind::Memory});
  return sys;
}

Scenario ring_scenario(int n_ranks, std::int64_t msg = 1024) {
  Scenario s;
  s.system = two_domain_system(n_ranks, n_ranks);
  s.boundary = Boundary::Periodic;
  s.programs.resize(n_ranks);
  KernelSpec k{"k", 1e6, 1e5, 0, 0};
  for (int r = 0; r < n_ranks; ++r) {
    s.programs[r] = {Compute{k}, Isend{r + 1, msg}, Irecv{r - 1, msg}, WaitAll{}};
  }
  return s;
}

}  // namespace

TEST_CASE("saturation point is ceil(b_cap / b_single)") {
  CHECK(saturation_point({0, 20, 10e9, 50e9}) == 5);
  CHECK(saturation_point({0, 20, 8e9, 40e9}) == 5);
  CHECK(saturation_point({0, 20, 12e9, 50e9}) == 5);  // 4.17 rounds up
  CHECK(saturation_point({0, 4, 10e9, 10e9}) == 1);
}

TEST_CASE("roofline limit") {
  CHECK(roofline_limit(40e9, 12.0) == doctest::Approx(40e9 / 12.0));
  CHECK_THROWS_WITH_AS(roofline_limit(0, 1), doctest::Contains("NonPositiveInput"),
                       ValidationError);
  CHECK_THROWS_AS(roofline_limit(1e9, 0), ValidationError);
}

TEST_CASE("barrier cost is latency times ceil(log2 n)") {
  NetworkSpec net;
  net.latency = 1e-6;
  CHECK(barrier_cost(net, 40) == doctest::Approx(6e-6));
  CHECK(barrier_cost(net, 2) == doctest::Approx(1e-6));
  CHECK(barrier_cost(net, 1) == doctest::Approx(0.0));
  CHECK(barrier_cost(net, 1024) == doctest::Approx(10e-6));
  CHECK(barrier_cost(net, 1025) == doctest::Approx(11e-6));
}

TEST_CASE("domain lookup") {
  SystemSpec sys = two_domain_system();
  CHECK(sys.memory_domain_of(0) == 0);
  CHECK(sys.memory_domain_of(19) == 0);
  CHECK(sys.memory_domain_of(20) == 1);
  CHECK(sys.network_domain_of(5) == -1);
  sys.domains.push_back({0, 40, 1e9, 2e9, DomainKind::NetworkInjection});
  CHECK(sys.network_domain_of(5) == 2);
  CHECK(sys.memory_domain_of(5) == 0);
}

TEST_CASE("validation rejects broken systems") {
  SystemSpec sys = two_domain_system();
  sys.domains[1].last_rank = 45;  // past n_ranks
  CHECK_THROWS_WITH_AS(sys.validate(), doctest::Contains("RankOutOfRange"), ValidationError);

  sys = two_domain_system();
  sys.domains[0].b_single = 0;
  CHECK_THROWS_AS(sys.validate(), ValidationError);

  sys = two_domain_system();
  sys.domains[0].b_cap = 1e9;  // below b_single
  CHECK_THROWS_AS(sys.validate(), ValidationError);

  sys = two_domain_system();
  sys.domains.pop_back();  // ranks 20..39 uncovered
  CHECK_THROWS_WITH_AS(sys.validate(), doctest::Contains("RankOutOfRange"), ValidationError);
}

TEST_CASE("periodic boundary wraps peers, open drops them") {
  Scenario s = ring_scenario(4);
  ValidatedScenario v = validate_scenario(s);
  // Rank 3 sends to 4, which wraps to 0.
  const auto& prog = v.scenario().programs[3];
  const auto* snd = std::get_if<Isend>(&prog[1]);
  REQUIRE(snd != nullptr);
  CHECK(snd->peer == 0);

  Scenario o = ring_scenario(4);
  o.boundary = Boundary::Open;
  ValidatedScenario vo = validate_scenario(o);
  // Rank 3's send to 4 disappears; rank 0's recv from -1 disappears.
  int sends3 = 0, recvs0 = 0;
  for (const auto& p : vo.scenario().programs[3])
    if (std::holds_alternative<Isend>(p)) ++sends3;
  for (const auto& p : vo.scenario().programs[0])
    if (std::holds_alternative<Irecv>(p)) ++recvs0;
  CHECK(sends3 == 0);
  CHECK(recvs0 == 0);
}

TEST_CASE("unmatched messages are rejected") {
  Scenario s = ring_scenario(4);
  s.programs[2] = {Compute{KernelSpec{"k", 1e6, 1e5, 0, 0}}, Isend{3, 1024}, WaitAll{}};
  // Rank 2 no longer receives from rank 1.
  CHECK_THROWS_WITH_AS(validate_scenario(s), doctest::Contains("UnmatchedMessage"),
                       ValidationError);
}

TEST_CASE("mismatched barrier counts are rejected") {
  Scenario s = ring_scenario(4);
  s.programs[1].push_back(Barrier{});
  CHECK_THROWS_WITH_AS(validate_scenario(s), doctest::Contains("UnmatchedMessage"),
                       ValidationError);
}

TEST_CASE("self-send and empty program are rejected") {
  Scenario s = ring_scenario(4);
  std::get<Isend>(s.programs[1][1]).peer = 1;
  CHECK_THROWS_AS(validate_scenario(s), ValidationError);

  s = ring_scenario(4);
  s.programs[2].clear();
  CHECK_THROWS_WITH_AS(validate_scenario(s), doctest::Contains("EmptyProgram"), ValidationError);
}

TEST_CASE("injection bounds are checked") {
  Scenario s = ring_scenario(4);
  s.injections.push_back({7, 0, 0.1, InjectionKind::CoreBound});
  CHECK_THROWS_WITH_AS(validate_scenario(s), doctest::Contains("RankOutOfRange"),
                       ValidationError);
  s.injections = {{1, 5, 0.1, InjectionKind::CoreBound}};  // iteration past n_iters
  CHECK_THROWS_AS(validate_scenario(s), ValidationError);
  s.injections = {{1, 0, -0.1, InjectionKind::CoreBound}};
  CHECK_THROWS_AS(validate_scenario(s), ValidationError);
}

TEST_CASE("scenario digest is stable and input-sensitive") {
  Scenario a = ring_scenario(4);
  Scenario b = ring_scenario(4);
  CHECK(scenario_digest(a) == scenario_digest(b));
  std::get<Isend>(b.programs[0][1]).bytes += 1;
  CHECK(scenario_digest(a) != scenario_digest(b));
  Scenario c = ring_scenario(4);
  c.noise.intensity = 0.1;
  c.noise.kind = NoiseKind::Uniform;
  CHECK(scenario_digest(a) != scenario_digest(c));
}

TEST_CASE("seed mixing separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream = 0; stream < 8; ++stream)
    for (std::uint64_t lane = 0; lane < 8; ++lane) seen.insert(mix_seed(42, stream, lane));
  CHECK(seen.size() == 64);
  CHECK(mix_seed(42, 1, 0) == mix_seed(42, 1, 0));
  CHECK(mix_seed(42, 1, 0) != mix_seed(43, 1, 0));
}

TEST_CASE("splitmix64 reference values") {
  // Known-answer values for the standard splitmix64 sequence from seed 0.
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
  CHECK(splitmix64(s) == 0x06c45d188009454fULL);
}
