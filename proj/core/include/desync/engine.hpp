#pragma once

#include <cstdint>
#include <stdexcept>

#include "desync/model.hpp"
#include "desync/trace.hpp"

namespace desync {

struct DeadlockError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic discrete-event simulation of a validated scenario.
///
/// Contended compute traffic drains at min(b_single, b_cap/m) where m is
/// the number of ranks in the domain currently executing contended work;
/// rates are piecewise constant and remaining work is carried forward
/// exactly on every domain-membership change. Messages at or below the
/// eager limit transfer immediately after the send; larger ones use a
/// rendezvous handshake and cannot start before both sides have posted.
///
/// Identical (scenario, seed) pairs produce bit-identical traces.
/// Throws DeadlockError with a blocked-state snapshot if no rank can run.
Trace run(const ValidatedScenario& s, std::uint64_t seed);

/// Fixed-timestep reference integrator with the same semantics: rates are
/// recomputed every dt and remaining work advanced explicitly. Converges
/// to run() as dt -> 0. Test-only correctness oracle.
Trace oracle_run(const ValidatedScenario& s, std::uint64_t seed, double dt);

}  // namespace desync
