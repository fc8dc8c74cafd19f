#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace desync {

// All quantities use a fixed unit system: seconds, bytes, flops.
// Rates are bytes/s or flops/s.

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DomainKind { Memory, NetworkInjection };

/// A set of ranks sharing one bandwidth-limited resource.
/// b_single is the rate one process achieves alone, b_cap the aggregate
/// ceiling of the whole domain.
struct ContentionDomain {
  int first_rank = 0;   // inclusive
  int last_rank = 0;    // exclusive
  double b_single = 0;  // bytes/s
  double b_cap = 0;     // bytes/s
  DomainKind kind = DomainKind::Memory;

  int size() const { return last_rank - first_rank; }
  bool contains(int rank) const { return rank >= first_rank && rank < last_rank; }
  void validate() const;
};

struct NetworkSpec {
  double latency = 1e-6;              // s
  double bandwidth = 12.5e9;          // bytes/s
  double rendezvous_handshake = 0.0;  // s
  void validate() const;
};

struct SystemSpec {
  int n_ranks = 0;
  std::vector<ContentionDomain> domains;
  NetworkSpec network;
  std::int64_t eager_limit_bytes = 16384;

  // Index into domains of the memory domain owning `rank`.
  int memory_domain_of(int rank) const;
  // Index of the network-injection domain owning `rank`, or -1.
  int network_domain_of(int rank) const;
  void validate() const;
};

/// Cost model of one kernel execution: contended memory traffic plus a
/// fixed scalable (non-contended) time component.
struct KernelSpec {
  std::string name;
  double traffic_bytes = 0;     // contended bytes per execution
  double flops = 0;             // flop count per execution
  double code_balance = 0;      // bytes/flop; 0 = unspecified
  double scalable_seconds = 0;  // non-contended time per execution
  void validate() const;
};

struct Compute {
  KernelSpec kernel;
};
// Peers may lie outside [0, n_ranks) before validation; the scenario's
// boundary condition resolves them (open: dropped, periodic: wrapped).
struct Isend {
  int peer = 0;
  std::int64_t bytes = 0;
};
struct Irecv {
  int peer = 0;
  std::int64_t bytes = 0;
};
struct WaitAll {};
struct Barrier {};

using Phase = std::variant<Compute, Isend, Irecv, WaitAll, Barrier>;

enum class NoiseKind { None, Uniform, Exponential };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double intensity = 0;  // mean fractional slowdown per compute phase
  std::uint64_t seed = 0;
  void validate() const;
};

enum class InjectionKind { CoreBound, MemoryBound };

/// One-off extra delay on a single rank, inserted before the compute
/// phase of the given iteration. Memory-bound injections add contended
/// traffic of extra_seconds * b_single; core-bound ones do not contend.
struct InjectionSpec {
  int rank = 0;
  int iteration = 0;
  double extra_seconds = 0;
  InjectionKind kind = InjectionKind::CoreBound;
};

enum class Boundary { Open, Periodic };

struct Scenario {
  SystemSpec system;
  int n_iters = 1;
  // One iteration's phase program per rank; repeated n_iters times.
  std::vector<std::vector<Phase>> programs;
  NoiseSpec noise;
  std::vector<InjectionSpec> injections;
  Boundary boundary = Boundary::Open;
};

/// A scenario whose boundary conditions have been resolved to explicit
/// partner ranks and whose invariants have all been checked. Immutable.
class ValidatedScenario {
 public:
  const Scenario& scenario() const { return s_; }
  std::uint64_t digest() const { return digest_; }

 private:
  friend ValidatedScenario validate_scenario(const Scenario& s);
  Scenario s_;
  std::uint64_t digest_ = 0;
};

// Resolves boundaries, checks all invariants. Throws ValidationError
// whose message names the first violated invariant (UnmatchedMessage,
// RankOutOfRange, EmptyProgram, ...).
ValidatedScenario validate_scenario(const Scenario& s);
// Idempotent overload.
inline const ValidatedScenario& validate_scenario(const ValidatedScenario& s) { return s; }

// Bandwidth-bound performance ceiling b_cap / code_balance.
// Throws ValidationError("NonPositiveInput...") on bad input.
double roofline_limit(double b_cap, double code_balance);

// Minimum process count whose aggregate demand reaches the cap:
// ceil(b_cap / b_single).
int saturation_point(const ContentionDomain& d);

// Dissemination-style barrier model: latency * ceil(log2(n_ranks)).
double barrier_cost(const NetworkSpec& net, int n_ranks);

// Stable 64-bit checksum of a scenario (used to tie traces to inputs).
std::uint64_t scenario_digest(const Scenario& s);

// Deterministic seed/stream mixing used for all randomness.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t lane);

}  // namespace desync
