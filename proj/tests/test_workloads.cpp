#include <doctest.h>

#include <algorithm>
#include <map>

#include "desync/matrixio.hpp"
#include "desync/model.hpp"
#include "desync/workloads.hpp"

using namespace desync;

namespace {

SystemSpec triad_system(int n_ranks = 40, int per_domain = 20) {
  SystemSpec sys;
  sys.n_ranks = n_ranks;
  for (int r = 0; r < n_ranks; r += per_domain)
    sys.domains.push_back({r, r + per_domain, 8e9, 40e9, DomainKind::Memory});
  return sys;
}

std::map<int, std::int64_t> message_partners(const Scenario& s, int rank) {
  std::map<int, std::int64_t> out;
  for (const auto& p : s.programs[rank])
    if (const auto* snd = std::get_if<Isend>(&p)) out[snd->peer] += snd->bytes;
  return out;
}

double total_msg_volume(const Scenario& s) {
  double v = 0;
  for (const auto& prog : s.programs)
    for (const auto& p : prog)
      if (const auto* snd = std::get_if<Isend>(&p)) v += (double)snd->bytes;
  return v;
}

double total_compute_traffic(const Scenario& s) {
  double v = 0;
  for (const auto& prog : s.programs)
    for (const auto& p : prog)
      if (const auto* c = std::get_if<Compute>(&p)) v += c->kernel.traffic_bytes;
  return v;
}

}  // namespace

TEST_CASE("triad traffic and topology") {
  TriadConfig c;
  c.n_ranks = 40;
  c.distances = {1, -1};
  c.total_bytes = 2.4e9;
  c.n_iters = 3;
  Scenario s = make_triad_scenario(c, triad_system());
  CHECK(triad_traffic_per_rank(c) == doctest::Approx(1.5 * 2.4e9 / 40));
  ValidatedScenario v = validate_scenario(s);
  // Open boundary: rank 0 only talks to 1, rank 39 only to 38.
  auto p0 = message_partners(v.scenario(), 0);
  auto p39 = message_partners(v.scenario(), 39);
  CHECK(p0.size() == 1);
  CHECK(p0.count(1) == 1);
  CHECK(p0[1] == 16384);
  CHECK(p39.size() == 1);
  CHECK(p39.count(38) == 1);
  auto p5 = message_partners(v.scenario(), 5);
  CHECK(p5.size() == 2);
}

TEST_CASE("triad periodic boundary wraps") {
  TriadConfig c;
  c.n_ranks = 8;
  c.distances = {1, -1, 2, -2};
  c.boundary = Boundary::Periodic;
  SystemSpec sys = triad_system(8, 8);
  Scenario s = make_triad_scenario(c, sys);
  auto p0 = message_partners(validate_scenario(s).scenario(), 0);
  CHECK(p0.size() == 4);
  CHECK(p0.count(7) == 1);
  CHECK(p0.count(6) == 1);
}

TEST_CASE("spmvm kernel pair carries the split penalty") {
  auto [local, remote] = spmvm_kernels(1000, 200, SpmvmMode::NonSplit, 12.0);
  CHECK(local.flops == doctest::Approx(2000));
  CHECK(remote.flops == doctest::Approx(400));
  CHECK(local.traffic_bytes == doctest::Approx(6.0 * 2000));
  CHECK(remote.traffic_bytes == doctest::Approx(6.0 * 400));

  auto [l2, r2] = spmvm_kernels(1000, 200, SpmvmMode::SplitWait, 12.0);
  CHECK(l2.traffic_bytes == doctest::Approx(local.traffic_bytes));
  // Remote kernel pays the doubly-updated result vector: +16/n_nzr B/F.
  CHECK(r2.traffic_bytes == doctest::Approx((6.0 + 16.0 / 12.0) * 400));
}

TEST_CASE("spmvm scenarios: diagonal matrix means no messages") {
  SparseMatrix m;
  m.n_rows = m.n_cols = 40;
  m.row_ptr.resize(41);
  for (int i = 0; i <= 40; ++i) m.row_ptr[i] = i;
  m.col_idx.resize(40);
  for (int i = 0; i < 40; ++i) m.col_idx[i] = i;
  SystemSpec sys = triad_system(8, 8);
  sys.n_ranks = 8;
  Scenario ns = make_spmvm_scenario(m, SpmvmMode::NonSplit, false, 2, 8, sys);
  Scenario sw = make_spmvm_scenario(m, SpmvmMode::SplitWait, false, 2, 8, sys);
  CHECK(total_msg_volume(ns) == 0);
  CHECK(total_msg_volume(sw) == 0);
  CHECK(total_compute_traffic(ns) == doctest::Approx(total_compute_traffic(sw)));
}

TEST_CASE("spmvm modes: equal messages, split pays more traffic") {
  SparseMatrix m = gen_banded(400, 20, 9, 3);
  SystemSpec sys = triad_system(8, 8);
  Scenario ns = make_spmvm_scenario(m, SpmvmMode::NonSplit, false, 1, 8, sys);
  Scenario sw = make_spmvm_scenario(m, SpmvmMode::SplitWait, false, 1, 8, sys);
  CHECK(total_msg_volume(ns) == doctest::Approx(total_msg_volume(sw)));
  CHECK(total_msg_volume(ns) > 0);
  CHECK(total_compute_traffic(sw) > total_compute_traffic(ns));
  validate_scenario(ns);
  validate_scenario(sw);
}

TEST_CASE("banded matrix over few ranks talks to next neighbors only") {
  SparseMatrix m = gen_banded(100, 5, 5, 1);
  SystemSpec sys = triad_system(4, 4);
  Scenario s = make_spmvm_scenario(m, SpmvmMode::NonSplit, false, 1, 8, sys);
  for (int r = 0; r < 4; ++r)
    for (auto& [peer, bytes] : message_partners(s, r)) CHECK(std::abs(peer - r) == 1);
}

TEST_CASE("chebfd code balance formulas") {
  CHECK(chebfd_code_balance(32, ValueKind::ComplexDouble) ==
        doctest::Approx((260.0 / 32 + 80) / 146).epsilon(1e-12));
  CHECK(chebfd_code_balance(32, ValueKind::ComplexDouble) == doctest::Approx(0.6036).epsilon(1e-3));
  CHECK(chebfd_code_balance(2, ValueKind::RealDouble) ==
        doctest::Approx((48.0 / 2 + 40) / 19).epsilon(1e-12));
  CHECK(chebfd_code_balance(2, ValueKind::RealDouble) == doctest::Approx(3.368).epsilon(1e-3));
}

TEST_CASE("chebfd pipeline reorders but conserves message volume") {
  SparseMatrix m = gen_banded(200, 12, 7, 9);
  auto part = partition_rows(m, 8);
  CommMatrix comm = build_comm_matrix(m, part, 16);
  SystemSpec sys = triad_system(8, 8);

  ChebfdConfig c;
  c.comm = comm;
  c.n_b = 8;
  c.n_p = 3;
  c.n_search = 8;
  c.n_sub = 4;
  c.rank_flops = 1e8;

  c.mode = ChebMode::NonSplit;
  Scenario ns = make_chebfd_scenario(c, sys);
  c.mode = ChebMode::Pipeline;
  Scenario pl = make_chebfd_scenario(c, sys);
  CHECK(total_msg_volume(ns) == doctest::Approx(total_msg_volume(pl)));
  validate_scenario(ns);
  validate_scenario(pl);

  c.n_sub = 3;  // does not divide n_b
  CHECK_THROWS_WITH_AS(make_chebfd_scenario(c, sys), doctest::Contains("InvalidBlocking"),
                       ValidationError);
}

TEST_CASE("decomposition presets carry the reference tables") {
  auto names = decomposition_preset_names();
  CHECK(names.size() == 9);
  CommProfile m3 = decomposition_preset("M3");
  REQUIRE(m3.summary.size() == 2);
  std::map<int, std::int64_t> m3sum(m3.summary.begin(), m3.summary.end());
  CHECK(m3sum.at(1) == 1050000);
  CHECK(m3sum.at(-1) == 1050000);

  CommProfile m2 = decomposition_preset("M2");
  std::map<int, std::int64_t> m2sum(m2.summary.begin(), m2.summary.end());
  REQUIRE(m2sum.size() == 6);
  CHECK(m2sum.at(1) == 1050000);
  CHECK(m2sum.at(-1) == 1050000);
  CHECK(m2sum.at(20) == 48000);
  CHECK(m2sum.at(-20) == 48000);
  CHECK(m2sum.at(19) == 8000);
  CHECK(m2sum.at(-19) == 8000);

  CHECK_THROWS_AS(decomposition_preset("M99"), ValidationError);
}

TEST_CASE("decompose agrees with the M3 preset") {
  // M3: 64 nodes in a chain, 20 ranks per node.
  DecompSpec d;
  d.mx = 64;
  d.my = 1;
  d.mz = 1;
  CommProfile gen = decompose(d);
  CommProfile preset = decomposition_preset("M3");
  CHECK(gen.n_ranks == preset.n_ranks);
  // Same distance set.
  std::map<int, std::int64_t> g(gen.summary.begin(), gen.summary.end());
  std::map<int, std::int64_t> p(preset.summary.begin(), preset.summary.end());
  REQUIRE(g.size() == p.size());
  for (auto& [off, bytes] : p) {
    REQUIRE(g.count(off) == 1);
    // Message sizes within 1% of the reference figures.
    CHECK(std::abs((double)g[off] - (double)bytes) / (double)bytes < 0.01);
  }
}

TEST_CASE("decompose distance reach: chain vs plane") {
  DecompSpec chain;
  chain.mx = 64;
  DecompSpec plane;
  plane.mx = 1;
  plane.my = 8;
  plane.mz = 8;
  auto reach = [](const CommProfile& p) {
    int m = 0;
    for (auto& [off, bytes] : p.summary) m = std::max(m, std::abs(off));
    return m;
  };
  CHECK(reach(decompose(chain)) < reach(decompose(plane)));
}

TEST_CASE("comm matrix from profile is symmetric and scaled") {
  CommProfile p = decomposition_preset("M3");
  CommMatrix c = comm_matrix_from_profile(p, 8);
  c.validate();
  CHECK(c.n_ranks == 1280);
  for (int i = 0; i < c.n_ranks; i += 97)
    for (int j = 0; j < c.n_ranks; j += 101) CHECK(c.volume(i, j) == c.volume(j, i));
}
