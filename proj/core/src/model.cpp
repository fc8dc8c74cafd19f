#include "desync/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

namespace desync {

void ContentionDomain::validate() const {
  if (first_rank < 0 || last_rank <= first_rank)
    throw ValidationError("RankOutOfRange: domain rank range [" + std::to_string(first_rank) +
                          "," + std::to_string(last_rank) + ") is empty or negative");
  if (!(b_single > 0)) throw ValidationError("NonPositiveInput: domain b_single must be > 0");
  if (b_cap < b_single) throw ValidationError("NonPositiveInput: domain b_cap must be >= b_single");
}

void NetworkSpec::validate() const {
  if (latency < 0) throw ValidationError("NonPositiveInput: network latency must be >= 0");
  if (!(bandwidth > 0)) throw ValidationError("NonPositiveInput: network bandwidth must be > 0");
  if (rendezvous_handshake < 0)
    throw ValidationError("NonPositiveInput: rendezvous_handshake must be >= 0");
}

int SystemSpec::memory_domain_of(int rank) const {
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (domains[i].kind == DomainKind::Memory && domains[i].contains(rank)) return (int)i;
  throw ValidationError("RankOutOfRange: rank " + std::to_string(rank) +
                        " not covered by any memory domain");
}

int SystemSpec::network_domain_of(int rank) const {
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (domains[i].kind == DomainKind::NetworkInjection && domains[i].contains(rank))
      return (int)i;
  return -1;
}

void SystemSpec::validate() const {
  if (n_ranks <= 0) throw ValidationError("NonPositiveInput: n_ranks must be > 0");
  if (eager_limit_bytes < 0)
    throw ValidationError("NonPositiveInput: eager_limit_bytes must be >= 0");
  network.validate();
  for (const auto& d : domains) d.validate();
  // Memory domains must partition [0, n_ranks).
  std::vector<char> covered(n_ranks, 0);
  for (const auto& d : domains) {
    if (d.kind != DomainKind::Memory) continue;
    if (d.last_rank > n_ranks)
      throw ValidationError("RankOutOfRange: memory domain exceeds n_ranks");
    for (int r = d.first_rank; r < d.last_rank; ++r) {
      if (covered[r])
        throw ValidationError("RankOutOfRange: rank " + std::to_string(r) +
                              " belongs to more than one memory domain");
      covered[r] = 1;
    }
  }
  for (int r = 0; r < n_ranks; ++r)
    if (!covered[r])
      throw ValidationError("RankOutOfRange: rank " + std::to_string(r) +
                            " not covered by any memory domain");
  // Network-injection domains must not overlap each other.
  std::vector<char> net_covered(n_ranks, 0);
  for (const auto& d : domains) {
    if (d.kind != DomainKind::NetworkInjection) continue;
    if (d.last_rank > n_ranks)
      throw ValidationError("RankOutOfRange: network domain exceeds n_ranks");
    for (int r = d.first_rank; r < d.last_rank; ++r) {
      if (net_covered[r])
        throw ValidationError("RankOutOfRange: rank " + std::to_string(r) +
                              " belongs to more than one network domain");
      net_covered[r] = 1;
    }
  }
}

void KernelSpec::validate() const {
  if (traffic_bytes < 0 || flops < 0 || code_balance < 0 || scalable_seconds < 0)
    throw ValidationError("NonPositiveInput: kernel quantities must be >= 0");
  if (!(traffic_bytes > 0 || scalable_seconds > 0))
    throw ValidationError("NonPositiveInput: kernel '" + name +
                          "' needs traffic_bytes or scalable_seconds > 0");
  if (flops > 0 && code_balance > 0 && traffic_bytes > 0) {
    double expect = flops * code_balance;
    if (std::abs(expect - traffic_bytes) > 1e-6 * std::max(expect, traffic_bytes))
      throw ValidationError("NonPositiveInput: kernel '" + name +
                            "' traffic_bytes inconsistent with flops * code_balance");
  }
}

void NoiseSpec::validate() const {
  if (intensity < 0) throw ValidationError("NonPositiveInput: noise intensity must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t lane) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ stream;
  a = splitmix64(s);
  s = a ^ lane;
  return splitmix64(s);
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

void hash_phase(Fnv1a& h, const Phase& p) {
  h.u64(p.index());
  if (auto* c = std::get_if<Compute>(&p)) {
    h.str(c->kernel.name);
    h.f64(c->kernel.traffic_bytes);
    h.f64(c->kernel.flops);
    h.f64(c->kernel.code_balance);
    h.f64(c->kernel.scalable_seconds);
  } else if (auto* s = std::get_if<Isend>(&p)) {
    h.i64(s->peer);
    h.i64(s->bytes);
  } else if (auto* r = std::get_if<Irecv>(&p)) {
    h.i64(r->peer);
    h.i64(r->bytes);
  }
}

}  // namespace

std::uint64_t scenario_digest(const Scenario& s) {
  Fnv1a h;
  h.i64(s.system.n_ranks);
  h.i64(s.system.eager_limit_bytes);
  h.f64(s.system.network.latency);
  h.f64(s.system.network.bandwidth);
  h.f64(s.system.network.rendezvous_handshake);
  for (const auto& d : s.system.domains) {
    h.i64(d.first_rank);
    h.i64(d.last_rank);
    h.f64(d.b_single);
    h.f64(d.b_cap);
    h.u64((std::uint64_t)d.kind);
  }
  h.i64(s.n_iters);
  h.u64((std::uint64_t)s.boundary);
  h.u64((std::uint64_t)s.noise.kind);
  h.f64(s.noise.intensity);
  h.u64(s.noise.seed);
  for (const auto& inj : s.injections) {
    h.i64(inj.rank);
    h.i64(inj.iteration);
    h.f64(inj.extra_seconds);
    h.u64((std::uint64_t)inj.kind);
  }
  for (const auto& prog : s.programs) {
    h.u64(prog.size());
    for (const auto& p : prog) hash_phase(h, p);
  }
  return h.h;
}

ValidatedScenario validate_scenario(const Scenario& in) {
  Scenario s = in;
  s.system.validate();
  s.noise.validate();
  if (s.n_iters <= 0) throw ValidationError("NonPositiveInput: n_iters must be > 0");
  const int n = s.system.n_ranks;
  if ((int)s.programs.size() != n)
    throw ValidationError("EmptyProgram: expected " + std::to_string(n) +
                          " per-rank programs, got " + std::to_string(s.programs.size()));

  // Resolve boundary conditions into explicit partners.
  for (int r = 0; r < n; ++r) {
    std::vector<Phase> resolved;
    resolved.reserve(s.programs[r].size());
    for (auto& p : s.programs[r]) {
      auto fix_peer = [&](int peer, bool& keep) -> int {
        keep = true;
        if (peer >= 0 && peer < n) return peer;
        if (s.boundary == Boundary::Periodic) return ((peer % n) + n) % n;
        keep = false;  // open boundary: partner does not exist
        return peer;
      };
      bool keep = true;
      if (auto* snd = std::get_if<Isend>(&p)) {
        int peer = fix_peer(snd->peer, keep);
        if (keep) resolved.push_back(Isend{peer, snd->bytes});
      } else if (auto* rcv = std::get_if<Irecv>(&p)) {
        int peer = fix_peer(rcv->peer, keep);
        if (keep) resolved.push_back(Irecv{peer, rcv->bytes});
      } else {
        resolved.push_back(p);
      }
    }
    s.programs[r] = std::move(resolved);
  }

  for (int r = 0; r < n; ++r) {
    if (s.programs[r].empty())
      throw ValidationError("EmptyProgram: rank " + std::to_string(r) + " has no phases");
    for (const auto& p : s.programs[r]) {
      if (auto* c = std::get_if<Compute>(&p)) c->kernel.validate();
      if (auto* snd = std::get_if<Isend>(&p)) {
        if (snd->bytes < 0) throw ValidationError("NonPositiveInput: negative message size");
        if (snd->peer == r)
          throw ValidationError("RankOutOfRange: rank " + std::to_string(r) + " sends to itself");
      }
      if (auto* rcv = std::get_if<Irecv>(&p)) {
        if (rcv->bytes < 0) throw ValidationError("NonPositiveInput: negative message size");
        if (rcv->peer == r)
          throw ValidationError("RankOutOfRange: rank " + std::to_string(r) +
                                " receives from itself");
      }
    }
  }

  // Static message matching per iteration: the multiset of (src, dst, bytes)
  // sends must equal the multiset of receives.
  std::map<std::tuple<int, int, std::int64_t>, std::int64_t> balance;
  for (int r = 0; r < n; ++r) {
    for (const auto& p : s.programs[r]) {
      if (auto* snd = std::get_if<Isend>(&p)) balance[{r, snd->peer, snd->bytes}]++;
      if (auto* rcv = std::get_if<Irecv>(&p)) balance[{rcv->peer, r, rcv->bytes}]--;
    }
  }
  for (const auto& [key, count] : balance) {
    if (count != 0) {
      auto [src, dst, bytes] = key;
      throw ValidationError("UnmatchedMessage: rank " + std::to_string(src) + " -> rank " +
                            std::to_string(dst) + " (" + std::to_string(bytes) + " B), " +
                            (count > 0 ? "send without receive" : "receive without send"));
    }
  }

  // Barrier counts must agree across ranks, or the run deadlocks trivially.
  std::int64_t barriers0 = -1;
  for (int r = 0; r < n; ++r) {
    std::int64_t b = 0;
    for (const auto& p : s.programs[r])
      if (std::holds_alternative<Barrier>(p)) ++b;
    if (r == 0)
      barriers0 = b;
    else if (b != barriers0)
      throw ValidationError("UnmatchedMessage: barrier count differs between rank 0 and rank " +
                            std::to_string(r));
  }

  for (const auto& inj : s.injections) {
    if (inj.rank < 0 || inj.rank >= n)
      throw ValidationError("RankOutOfRange: injection rank " + std::to_string(inj.rank));
    if (inj.iteration < 0 || inj.iteration >= s.n_iters)
      throw ValidationError("RankOutOfRange: injection iteration " +
                            std::to_string(inj.iteration));
    if (!(inj.extra_seconds > 0))
      throw ValidationError("NonPositiveInput: injection extra_seconds must be > 0");
  }

  ValidatedScenario v;
  v.s_ = std::move(s);
  v.digest_ = scenario_digest(v.s_);
  return v;
}

double roofline_limit(double b_cap, double code_balance) {
  if (!(b_cap > 0) || !(code_balance > 0))
    throw ValidationError("NonPositiveInput: roofline_limit needs b_cap > 0 and code_balance > 0");
  return b_cap / code_balance;
}

int saturation_point(const ContentionDomain& d) {
  d.validate();
  return (int)std::ceil(d.b_cap / d.b_single - 1e-12);
}

double barrier_cost(const NetworkSpec& net, int n_ranks) {
  if (n_ranks <= 1) return 0.0;
  int rounds = 0;
  int span = 1;
  while (span < n_ranks) {
    span *= 2;
    ++rounds;
  }
  return net.latency * rounds;
}

}  // namespace desync
