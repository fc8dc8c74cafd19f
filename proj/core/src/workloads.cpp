#include "desync/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace desync {

double triad_traffic_per_rank(const TriadConfig& c) {
  // Three streamed arrays, one store with streaming stores: 1.5x the
  // per-rank slice of the working set per sweep.
  return 1.5 * c.total_bytes / c.n_ranks;
}

Scenario make_triad_scenario(const TriadConfig& c, const SystemSpec& sys) {
  if (c.n_ranks != sys.n_ranks)
    throw ValidationError("RankOutOfRange: triad n_ranks disagrees with system spec");
  if (c.distances.empty())
    throw ValidationError("EmptyProgram: triad distance set must be non-empty");
  if (c.ranks_per_domain > 0)
    for (const auto& d : sys.domains)
      if (d.kind == DomainKind::Memory && d.size() != c.ranks_per_domain)
        throw ValidationError("RankOutOfRange: domain size disagrees with ranks_per_domain");

  KernelSpec k;
  k.name = "triad";
  k.code_balance = 12.0;
  k.traffic_bytes = triad_traffic_per_rank(c);
  k.flops = k.traffic_bytes / k.code_balance;

  Scenario s;
  s.system = sys;
  s.n_iters = c.n_iters;
  s.boundary = c.boundary;
  s.programs.resize(c.n_ranks);
  for (int r = 0; r < c.n_ranks; ++r) {
    auto& prog = s.programs[r];
    prog.push_back(Compute{k});
    for (int o : c.distances) prog.push_back(Isend{r + o, c.msg_bytes});
    for (int o : c.distances) prog.push_back(Irecv{r + o, c.msg_bytes});
    prog.push_back(WaitAll{});
  }
  return s;
}

std::pair<KernelSpec, KernelSpec> spmvm_kernels(std::int64_t local_nnz, std::int64_t remote_nnz,
                                                SpmvmMode mode, double n_nzr) {
  const double base_balance = 6.0;  // 8 B value + 4 B index per 2 flops
  KernelSpec local, remote;
  local.name = "spmvm_local";
  local.flops = 2.0 * local_nnz;
  local.code_balance = base_balance;
  local.traffic_bytes = local.flops * local.code_balance;
  remote.name = "spmvm_remote";
  remote.flops = 2.0 * remote_nnz;
  remote.code_balance = base_balance;
  if (mode == SpmvmMode::SplitWait && n_nzr > 0)
    remote.code_balance += 16.0 / n_nzr;  // result vector updated twice
  remote.traffic_bytes = remote.flops * remote.code_balance;
  return {local, remote};
}

namespace {

void append_comm(std::vector<Phase>& prog, const CommMatrix& cm, int rank, double scale) {
  for (int j = 0; j < cm.n_ranks; ++j)
    if (j != rank && cm.volume(j, rank) > 0)
      prog.push_back(Isend{j, (std::int64_t)std::llround(cm.volume(j, rank) * scale)});
  for (int j = 0; j < cm.n_ranks; ++j)
    if (j != rank && cm.volume(rank, j) > 0)
      prog.push_back(Irecv{j, (std::int64_t)std::llround(cm.volume(rank, j) * scale)});
}

bool has_work(const KernelSpec& k) { return k.traffic_bytes > 0 || k.scalable_seconds > 0; }

}  // namespace

Scenario make_spmvm_scenario(const SpmvmConfig& c, const SystemSpec& sys) {
  c.comm.validate();
  if (c.comm.n_ranks != sys.n_ranks)
    throw ValidationError("InconsistentCommMatrix: comm matrix rank count disagrees with system");

  Scenario s;
  s.system = sys;
  s.n_iters = c.n_iters;
  s.boundary = Boundary::Open;
  s.programs.resize(sys.n_ranks);
  for (int r = 0; r < sys.n_ranks; ++r) {
    auto& prog = s.programs[r];
    append_comm(prog, c.comm, r, 1.0);
    if (c.mode == SpmvmMode::NonSplit) {
      prog.push_back(WaitAll{});
      prog.push_back(Compute{c.kernel_local});
      if (has_work(c.kernel_remote)) prog.push_back(Compute{c.kernel_remote});
    } else {
      prog.push_back(Compute{c.kernel_local});
      prog.push_back(WaitAll{});
      if (has_work(c.kernel_remote)) prog.push_back(Compute{c.kernel_remote});
    }
    if (c.barrier) prog.push_back(Barrier{});
  }
  return s;
}

Scenario make_spmvm_scenario(const SparseMatrix& m, SpmvmMode mode, bool barrier, int n_iters,
                             int element_bytes, const SystemSpec& sys) {
  auto part = partition_rows(m, sys.n_ranks);
  CommMatrix cm = build_comm_matrix(m, part, element_bytes);
  const double n_nzr = m.n_rows > 0 ? (double)m.n_nz() / m.n_rows : 0;

  Scenario s;
  s.system = sys;
  s.n_iters = n_iters;
  s.boundary = Boundary::Open;
  s.programs.resize(sys.n_ranks);
  for (int r = 0; r < sys.n_ranks; ++r) {
    std::int64_t local = 0, remote = 0;
    auto [lo, hi] = part[r];
    for (std::int64_t row = lo; row < hi; ++row)
      for (std::int64_t k = m.row_ptr[row]; k < m.row_ptr[row + 1]; ++k)
        (m.col_idx[k] >= lo && m.col_idx[k] < hi ? local : remote)++;
    auto [kl, kr] = spmvm_kernels(local, remote, mode, n_nzr);
    auto& prog = s.programs[r];
    append_comm(prog, cm, r, 1.0);
    if (mode == SpmvmMode::NonSplit) {
      prog.push_back(WaitAll{});
      if (has_work(kl)) prog.push_back(Compute{kl});
      if (has_work(kr)) prog.push_back(Compute{kr});
    } else {
      if (has_work(kl)) prog.push_back(Compute{kl});
      prog.push_back(WaitAll{});
      if (has_work(kr)) prog.push_back(Compute{kr});
    }
    if (barrier) prog.push_back(Barrier{});
  }
  return s;
}

double chebfd_code_balance(int n_b, ValueKind kind) {
  if (n_b <= 0) throw ValidationError("InvalidBlocking: n_b must be > 0");
  if (kind == ValueKind::ComplexDouble) return (260.0 / n_b + 80.0) / 146.0;
  return (48.0 / n_b + 40.0) / 19.0;
}

Scenario make_chebfd_scenario(const ChebfdConfig& c, const SystemSpec& sys) {
  c.comm.validate();
  if (c.comm.n_ranks != sys.n_ranks)
    throw ValidationError("InconsistentCommMatrix: comm matrix rank count disagrees with system");
  if (c.n_b <= 0 || c.n_p <= 0 || c.n_search <= 0)
    throw ValidationError("InvalidBlocking: n_b, n_p, n_search must be > 0");
  if (c.n_search % c.n_b != 0)
    throw ValidationError("InvalidBlocking: n_search must be a multiple of n_b");
  if (c.mode == ChebMode::Pipeline && (c.n_sub <= 0 || c.n_b % c.n_sub != 0))
    throw ValidationError("InvalidBlocking: n_sub must divide n_b");
  if (!(c.rank_flops > 0))
    throw ValidationError("NonPositiveInput: chebfd rank_flops must be > 0");
  if (c.remote_frac < 0 || c.remote_frac > 1)
    throw ValidationError("NonPositiveInput: remote_frac must be in [0, 1]");

  const double bc = chebfd_code_balance(c.n_b, c.value_kind);
  // Extra traffic per flop of writing the result block twice in split mode.
  const double split_penalty_bc =
      c.value_kind == ValueKind::ComplexDouble ? 32.0 / 146.0 : 16.0 / 19.0;
  const int n_blocks = c.n_search / c.n_b;

  Scenario s;
  s.system = sys;
  s.n_iters = c.n_p * n_blocks;
  s.boundary = Boundary::Open;
  s.programs.resize(sys.n_ranks);

  for (int r = 0; r < sys.n_ranks; ++r) {
    auto& prog = s.programs[r];
    switch (c.mode) {
      case ChebMode::NonSplit: {
        KernelSpec k;
        k.name = "chebfd";
        k.flops = c.rank_flops;
        k.code_balance = bc;
        k.traffic_bytes = k.flops * k.code_balance;
        append_comm(prog, c.comm, r, (double)c.n_b);
        prog.push_back(WaitAll{});
        prog.push_back(Compute{k});
        break;
      }
      case ChebMode::SplitWait: {
        KernelSpec local, remote;
        local.name = "chebfd_local";
        local.flops = c.rank_flops * (1.0 - c.remote_frac);
        local.code_balance = bc;
        local.traffic_bytes = local.flops * local.code_balance;
        remote.name = "chebfd_remote";
        remote.flops = c.rank_flops * c.remote_frac;
        remote.code_balance = bc + split_penalty_bc;
        remote.traffic_bytes = remote.flops * remote.code_balance;
        append_comm(prog, c.comm, r, (double)c.n_b);
        if (has_work(local)) prog.push_back(Compute{local});
        prog.push_back(WaitAll{});
        if (has_work(remote)) prog.push_back(Compute{remote});
        break;
      }
      case ChebMode::Pipeline: {
        const int n_sub_blocks = c.n_b / c.n_sub;
        KernelSpec k;
        k.name = "chebfd_sub";
        k.flops = c.rank_flops / n_sub_blocks;
        k.code_balance = bc;
        k.traffic_bytes = k.flops * k.code_balance;
        append_comm(prog, c.comm, r, (double)c.n_sub);  // fill: sub-block 1
        prog.push_back(WaitAll{});
        for (int sb = 1; sb < n_sub_blocks; ++sb) {
          append_comm(prog, c.comm, r, (double)c.n_sub);  // sub-block sb+1
          prog.push_back(Compute{k});                     // overlaps it
          prog.push_back(WaitAll{});
        }
        prog.push_back(Compute{k});
        break;
      }
    }
    if (c.barrier_each_p) prog.push_back(Barrier{});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Domain decomposition

namespace {

constexpr int kDofs = 4;
constexpr int kHaloDepth = 2;  // axis stencil reaches +/-2 mesh layers
constexpr int kElemBytes = 16;

struct Box {
  int node[3];       // node coordinates
  std::int64_t lo, hi;  // slab range in the split dimension (node-local)
};

}  // namespace

CommProfile decompose(const DecompSpec& spec) {
  const int m[3] = {spec.mx, spec.my, spec.mz};
  const std::int64_t n[3] = {spec.nx, spec.ny, spec.nz};
  const bool periodic[3] = {spec.periodic_x, spec.periodic_y, false};
  if (m[0] <= 0 || m[1] <= 0 || m[2] <= 0 || n[0] <= 0 || n[1] <= 0 || n[2] <= 0 ||
      spec.ranks_per_node <= 0)
    throw ValidationError("IndivisibleGrid: all grid extents must be positive");

  // Intra-node ranks split 1D along the outermost decomposed dimension.
  int split_dim = 0;
  for (int d = 0; d < 3; ++d)
    if (m[d] > 1) {
      split_dim = d;
      break;
    }
  const int rpn = spec.ranks_per_node;
  if (n[split_dim] < rpn * kHaloDepth)
    throw ValidationError("IndivisibleGrid: per-node extent " + std::to_string(n[split_dim]) +
                          " too small for " + std::to_string(rpn) + " ranks with halo depth " +
                          std::to_string(kHaloDepth));
  std::vector<std::int64_t> slab(rpn + 1, 0);
  for (int i = 0; i < rpn; ++i)
    slab[i + 1] = slab[i] + n[split_dim] / rpn + (i < n[split_dim] % rpn ? 1 : 0);

  const int n_nodes = m[0] * m[1] * m[2];
  const int n_ranks = n_nodes * rpn;
  // Node linearization keeps the split dimension fastest so that the
  // intra-node chain continues seamlessly across node boundaries.
  int order[3] = {split_dim, -1, -1};
  int idx = 1;
  for (int d = 0; d < 3; ++d)
    if (d != split_dim) order[idx++] = d;
  auto node_index = [&](const int c[3]) {
    return (c[order[2]] * m[order[1]] + c[order[1]]) * m[order[0]] + c[order[0]];
  };

  CommProfile prof;
  prof.n_ranks = n_ranks;
  prof.partners.resize(n_ranks);
  std::set<std::pair<int, std::int64_t>> summary;

  for (int nid = 0; nid < n_nodes; ++nid) {
    int c[3];
    int rem = nid;
    c[order[0]] = rem % m[order[0]];
    rem /= m[order[0]];
    c[order[1]] = rem % m[order[1]];
    c[order[2]] = rem / m[order[1]];
    for (int lr = 0; lr < rpn; ++lr) {
      const int rank = nid * rpn + lr;
      const std::int64_t width = slab[lr + 1] - slab[lr];
      auto add = [&](int partner, std::int64_t bytes) {
        if (partner < 0 || partner >= n_ranks || partner == rank) return;
        prof.partners[rank].emplace_back(partner - rank, bytes);
        summary.insert({partner - rank, bytes});
      };
      // Faces along the split dimension: area is the full node cross
      // section, neighbors are adjacent slabs (possibly in the next node).
      std::int64_t cross = kHaloDepth * kDofs * kElemBytes;
      for (int d = 0; d < 3; ++d)
        if (d != split_dim) cross *= n[d];
      for (int dir : {-1, +1}) {
        int p_node = nid, p_lr = lr + dir;
        if (p_lr < 0 || p_lr >= rpn) {
          int nc[3] = {c[0], c[1], c[2]};
          nc[split_dim] += dir;
          if (nc[split_dim] < 0 || nc[split_dim] >= m[split_dim]) {
            if (!periodic[split_dim]) continue;
            nc[split_dim] = (nc[split_dim] + m[split_dim]) % m[split_dim];
          }
          p_node = node_index(nc);
          p_lr = dir > 0 ? 0 : rpn - 1;
        }
        add(p_node * rpn + p_lr, cross);
      }
      // Faces along the other decomposed dimensions: partner is the same
      // slab in the neighboring node.
      for (int d = 0; d < 3; ++d) {
        if (d == split_dim || m[d] == 1) continue;
        std::int64_t area = kHaloDepth * kDofs * kElemBytes * width;
        for (int e = 0; e < 3; ++e)
          if (e != split_dim && e != d) area *= n[e];
        for (int dir : {-1, +1}) {
          int nc[3] = {c[0], c[1], c[2]};
          nc[d] += dir;
          if (nc[d] < 0 || nc[d] >= m[d]) {
            if (!periodic[d]) continue;
            nc[d] = (nc[d] + m[d]) % m[d];
          }
          add(node_index(nc) * rpn + lr, area);
        }
      }
      std::sort(prof.partners[rank].begin(), prof.partners[rank].end());
    }
  }
  prof.summary.assign(summary.begin(), summary.end());
  return prof;
}

namespace {

struct PresetRow {
  const char* name;
  // (offset list, bytes) in table order; "+-" offsets expanded by caller.
  std::vector<std::pair<std::vector<int>, std::int64_t>> entries;
};

const std::vector<PresetRow>& preset_table() {
  auto pm = [](int o) { return std::vector<int>{o, -o}; };
  auto just = [](int o) { return std::vector<int>{o}; };
  static const std::vector<PresetRow> rows = {
      {"M1", {{pm(1), 1050000}, {just(-20), 105000}, {just(-19), 128}}},
      {"M2", {{pm(1), 1050000}, {pm(20), 48000}, {pm(19), 8000}}},
      {"M3", {{pm(1), 1050000}}},
      {"M4",
       {{pm(1), 1050000},
        {just(-20), 105000},
        {pm(160), 48000},
        {pm(159), 8000},
        {just(-19), 128}}},
      {"M5", {{pm(1), 1050000}, {just(-20), 105000}, {just(-19), 128}}},
      {"M6",
       {{pm(1), 1050000},
        {just(-20), 48000},
        {just(-140), 48000},
        {just(-19), 8000},
        {just(-141), 8000}}},
      {"M7",
       {{pm(1), 1050000},
        {just(-20), 105000},
        {just(-480), 48000},
        {just(-160), 48000},
        {just(-481), 8000},
        {just(-159), 8000},
        {just(-19), 128}}},
      {"M8",
       {{pm(1), 1050000},
        {just(-20), 105000},
        {just(-560), 48000},
        {just(-80), 48000},
        {just(-561), 8000},
        {just(-79), 8000},
        {just(-19), 128}}},
      {"M9",
       {{pm(1), 1050000},
        {just(-20), 105000},
        {just(-80), 96000},
        {just(-79), 8000},
        {just(-81), 8000},
        {just(-19), 128}}},
  };
  return rows;
}

constexpr int kPresetNodes = 64;
constexpr int kPresetRanksPerNode = 20;

}  // namespace

std::vector<std::string> decomposition_preset_names() {
  std::vector<std::string> names;
  for (const auto& row : preset_table()) names.push_back(row.name);
  return names;
}

CommProfile decomposition_preset(const std::string& name) {
  for (const auto& row : preset_table()) {
    if (name != row.name) continue;
    CommProfile prof;
    prof.n_ranks = kPresetNodes * kPresetRanksPerNode;
    prof.partners.resize(prof.n_ranks);
    std::set<std::pair<int, std::int64_t>> summary;
    for (int r = 0; r < prof.n_ranks; ++r) {
      for (const auto& [offsets, bytes] : row.entries)
        for (int o : offsets) {
          int p = r + o;
          if (p < 0 || p >= prof.n_ranks) continue;
          prof.partners[r].emplace_back(o, bytes);
          summary.insert({o, bytes});
        }
      std::sort(prof.partners[r].begin(), prof.partners[r].end());
    }
    prof.summary.assign(summary.begin(), summary.end());
    return prof;
  }
  throw ValidationError("IndivisibleGrid: unknown decomposition preset '" + name + "'");
}

CommMatrix comm_matrix_from_profile(const CommProfile& p, int element_bytes) {
  CommMatrix cm;
  cm.n_ranks = p.n_ranks;
  cm.element_bytes = element_bytes;
  cm.volumes.assign((std::size_t)p.n_ranks * p.n_ranks, 0);
  // Profile entries are halo exchanges: symmetrize so that each listed
  // partner both sends and receives the stated volume.
  for (int r = 0; r < p.n_ranks; ++r)
    for (const auto& [off, bytes] : p.partners[r]) {
      int q = r + off;
      if (q < 0 || q >= p.n_ranks) continue;
      cm.volume(r, q) = std::max(cm.volume(r, q), bytes);
      cm.volume(q, r) = std::max(cm.volume(q, r), bytes);
    }
  cm.validate();
  return cm;
}

}  // namespace desync
