#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "desync/matrixio.hpp"
#include "desync/model.hpp"

namespace desync {

/// Stream-triad style microbenchmark: one memory-bound sweep per iteration
/// followed by fixed-size messages to every rank offset in `distances`.
struct TriadConfig {
  int n_ranks = 0;
  int ranks_per_domain = 0;  // 0 = don't check against the system spec
  std::vector<int> distances;  // signed offsets, e.g. {1,-1}
  Boundary boundary = Boundary::Open;
  double total_bytes = 2.4e9;     // working set, split evenly across ranks
  std::int64_t msg_bytes = 16384;
  int n_iters = 1;
};

// Three streamed arrays per sweep: per-rank contended traffic is
// 1.5 * total_bytes / n_ranks per iteration at a code balance of 12 B/F.
Scenario make_triad_scenario(const TriadConfig& c, const SystemSpec& sys);

double triad_traffic_per_rank(const TriadConfig& c);

enum class SpmvmMode { NonSplit, SplitWait };

struct SpmvmConfig {
  CommMatrix comm;
  SpmvmMode mode = SpmvmMode::NonSplit;
  bool barrier = false;
  int n_iters = 1;
  KernelSpec kernel_local;
  KernelSpec kernel_remote;  // zero-work kernel means "no remote part"
};

// non-split:   sends, recvs, waitall, local kernel, remote kernel
// split-wait:  sends, recvs, local kernel, waitall, remote kernel
Scenario make_spmvm_scenario(const SpmvmConfig& c, const SystemSpec& sys);

// Kernel pair for a rank holding local_nnz + remote_nnz nonzeros, 2 flops
// per nonzero at 6 B/F; split mode adds the 16/n_nzr B/F penalty of the
// doubly-updated result vector to the remote kernel.
std::pair<KernelSpec, KernelSpec> spmvm_kernels(std::int64_t local_nnz, std::int64_t remote_nnz,
                                                SpmvmMode mode, double n_nzr);

// Full pipeline: partition the matrix over the system's ranks, derive the
// communication matrix and per-rank kernels from the row ranges.
Scenario make_spmvm_scenario(const SparseMatrix& m, SpmvmMode mode, bool barrier, int n_iters,
                             int element_bytes, const SystemSpec& sys);

enum class ChebMode { NonSplit, SplitWait, Pipeline };
enum class ValueKind { ComplexDouble, RealDouble };

// (260/n_b + 80)/146 B/F for complex data, (48/n_b + 40)/19 B/F for real.
double chebfd_code_balance(int n_b, ValueKind kind);

/// Polynomial-filter loop: per polynomial degree one block SpMMV with the
/// chosen communication scheme; pipeline mode posts the next sub-block's
/// messages before computing the current one.
struct ChebfdConfig {
  CommMatrix comm;  // per-vector volumes; scaled by the block size
  ChebMode mode = ChebMode::NonSplit;
  int n_b = 32;       // block vector count
  int n_p = 500;      // polynomial degree
  int n_search = 32;  // sought vectors, multiple of n_b
  int n_sub = 32;     // pipeline sub-block size, divides n_b
  bool barrier_each_p = false;
  ValueKind value_kind = ValueKind::ComplexDouble;
  double rank_flops = 0;     // flops per rank per degree for the full block
  double remote_frac = 0.1;  // remote share of the kernel in split mode
};

Scenario make_chebfd_scenario(const ChebfdConfig& c, const SystemSpec& sys);

/// Cartesian node grid with a 1D intra-node split along the outermost
/// decomposed dimension; 4 unknowns per mesh point, halo depth 2,
/// complex-double elements.
struct DecompSpec {
  int mx = 1, my = 1, mz = 1;          // node grid
  std::int64_t nx = 128, ny = 128, nz = 64;  // per-node mesh
  int ranks_per_node = 20;
  bool periodic_x = false, periodic_y = false;
};

struct CommProfile {
  int n_ranks = 0;
  // Per rank: (partner rank offset, bytes) pairs, offset-sorted.
  std::vector<std::vector<std::pair<int, std::int64_t>>> partners;
  // Distinct (offset, bytes) pairs over all ranks.
  std::vector<std::pair<int, std::int64_t>> summary;
};

CommProfile decompose(const DecompSpec& spec);

// Literal distance/size tables for the 64-node, 20 ranks/node presets
// M1..M9. Offsets are applied with open boundaries.
CommProfile decomposition_preset(const std::string& name);
std::vector<std::string> decomposition_preset_names();

CommMatrix comm_matrix_from_profile(const CommProfile& p, int element_bytes);

}  // namespace desync
