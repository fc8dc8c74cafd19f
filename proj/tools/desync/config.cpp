#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "desync/matrixio.hpp"
#include "desync/workloads.hpp"

namespace desync::cli {

namespace {

using nlohmann::json;

// Seed sub-stream ids (design: one manifest seed, named sub-streams).
constexpr std::uint64_t kStreamNoise = 1;
constexpr std::uint64_t kStreamMatrix = 2;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("ConfigError: " + ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("ConfigError: unknown key '" + it.key() + "' in " + ctx);
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("ConfigError: bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError("ConfigError: missing key '" + key + "' in " + ctx);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("ConfigError: bad value for '" + key + "': " + e.what());
  }
}

SystemSpec parse_system(const json& j) {
  check_keys(j, {"n_ranks", "domains", "ranks_per_domain", "b_single", "b_cap", "network",
                 "eager_limit", "network_injection"},
             "system");
  SystemSpec sys;
  sys.n_ranks = require<int>(j, "n_ranks", "system");
  if (j.contains("domains")) {
    for (const auto& d : j.at("domains")) {
      check_keys(d, {"first", "last", "b_single", "b_cap", "kind"}, "system.domains[]");
      ContentionDomain cd;
      cd.first_rank = require<int>(d, "first", "domain");
      cd.last_rank = require<int>(d, "last", "domain");
      cd.b_single = require<double>(d, "b_single", "domain");
      cd.b_cap = require<double>(d, "b_cap", "domain");
      std::string kind = get_or<std::string>(d, "kind", "memory");
      if (kind == "memory")
        cd.kind = DomainKind::Memory;
      else if (kind == "network")
        cd.kind = DomainKind::NetworkInjection;
      else
        throw ConfigError("ConfigError: domain kind must be 'memory' or 'network'");
      sys.domains.push_back(cd);
    }
  } else {
    // Shorthand: equal memory domains of ranks_per_domain each.
    int per = require<int>(j, "ranks_per_domain", "system");
    double bs = require<double>(j, "b_single", "system");
    double bc = require<double>(j, "b_cap", "system");
    if (per <= 0 || sys.n_ranks % per != 0)
      throw ConfigError("ConfigError: ranks_per_domain must divide n_ranks");
    for (int f = 0; f < sys.n_ranks; f += per)
      sys.domains.push_back({f, f + per, bs, bc, DomainKind::Memory});
  }
  if (j.contains("network_injection")) {
    const auto& ni = j.at("network_injection");
    check_keys(ni, {"ranks_per_domain", "b_single", "b_cap"}, "system.network_injection");
    int per = require<int>(ni, "ranks_per_domain", "network_injection");
    double bs = require<double>(ni, "b_single", "network_injection");
    double bc = require<double>(ni, "b_cap", "network_injection");
    if (per <= 0 || sys.n_ranks % per != 0)
      throw ConfigError("ConfigError: network_injection ranks_per_domain must divide n_ranks");
    for (int f = 0; f < sys.n_ranks; f += per)
      sys.domains.push_back({f, f + per, bs, bc, DomainKind::NetworkInjection});
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    check_keys(n, {"latency", "bandwidth", "rendezvous_handshake"}, "system.network");
    sys.network.latency = get_or<double>(n, "latency", sys.network.latency);
    sys.network.bandwidth = get_or<double>(n, "bandwidth", sys.network.bandwidth);
    sys.network.rendezvous_handshake =
        get_or<double>(n, "rendezvous_handshake", sys.network.rendezvous_handshake);
  }
  sys.eager_limit_bytes = get_or<std::int64_t>(j, "eager_limit", sys.eager_limit_bytes);
  return sys;
}

SparseMatrix parse_matrix(const json& j, std::uint64_t manifest_seed) {
  std::string source = require<std::string>(j, "source", "matrix");
  std::uint64_t seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>()
                                          : mix_seed(manifest_seed, kStreamMatrix, 0);
  if (source == "file") {
    check_keys(j, {"source", "path"}, "matrix");
    return load_matrix_market(require<std::string>(j, "path", "matrix"));
  }
  if (source == "banded") {
    check_keys(j, {"source", "n", "half_bandwidth", "nzr", "seed"}, "matrix");
    return gen_banded(require<std::int64_t>(j, "n", "matrix"),
                      require<std::int64_t>(j, "half_bandwidth", "matrix"),
                      require<int>(j, "nzr", "matrix"), seed);
  }
  if (source == "scattered") {
    check_keys(j, {"source", "n", "nzr", "spread", "seed"}, "matrix");
    return gen_scattered(require<std::int64_t>(j, "n", "matrix"),
                         require<int>(j, "nzr", "matrix"),
                         require<std::int64_t>(j, "spread", "matrix"), seed);
  }
  throw ConfigError("ConfigError: matrix source must be file, banded or scattered");
}

Boundary parse_boundary(const json& j) {
  std::string b = get_or<std::string>(j, "boundary", "open");
  if (b == "open") return Boundary::Open;
  if (b == "periodic") return Boundary::Periodic;
  throw ConfigError("ConfigError: boundary must be 'open' or 'periodic'");
}

Scenario parse_workload(const json& top, const SystemSpec& sys, std::uint64_t manifest_seed) {
  const json& j = top.at("workload");
  std::string kind = require<std::string>(j, "kind", "workload");
  int n_iters = get_or<int>(top, "n_iters", 1);

  if (kind == "triad") {
    check_keys(j, {"kind", "distances", "total_bytes", "msg_bytes"}, "workload");
    TriadConfig c;
    c.n_ranks = sys.n_ranks;
    c.distances = require<std::vector<int>>(j, "distances", "triad");
    c.total_bytes = get_or<double>(j, "total_bytes", c.total_bytes);
    c.msg_bytes = get_or<std::int64_t>(j, "msg_bytes", c.msg_bytes);
    c.boundary = parse_boundary(top);
    c.n_iters = n_iters;
    return make_triad_scenario(c, sys);
  }
  if (kind == "spmvm") {
    check_keys(j, {"kind", "matrix", "mode", "barrier", "element_bytes"}, "workload");
    std::string mode = get_or<std::string>(j, "mode", "non-split");
    if (mode != "non-split" && mode != "split-wait")
      throw ConfigError("ConfigError: spmvm mode must be non-split or split-wait");
    if (!j.contains("matrix")) throw ConfigError("ConfigError: missing key 'matrix' in workload");
    SparseMatrix m = parse_matrix(j.at("matrix"), manifest_seed);
    return make_spmvm_scenario(m, mode == "non-split" ? SpmvmMode::NonSplit : SpmvmMode::SplitWait,
                               get_or<bool>(j, "barrier", false), n_iters,
                               get_or<int>(j, "element_bytes", 8), sys);
  }
  if (kind == "chebfd") {
    check_keys(j,
               {"kind", "preset", "matrix", "element_bytes", "mode", "n_b", "n_p", "n_search",
                "n_sub", "barrier", "value_kind", "rank_flops", "remote_frac"},
               "workload");
    ChebfdConfig c;
    int eb = get_or<int>(j, "element_bytes", 8);
    if (j.contains("preset"))
      c.comm = comm_matrix_from_profile(
          decomposition_preset(require<std::string>(j, "preset", "chebfd")), eb);
    else if (j.contains("matrix")) {
      SparseMatrix m = parse_matrix(j.at("matrix"), manifest_seed);
      c.comm = build_comm_matrix(m, partition_rows(m, sys.n_ranks), eb);
    } else {
      throw ConfigError("ConfigError: chebfd needs 'preset' or 'matrix'");
    }
    std::string mode = get_or<std::string>(j, "mode", "non-split");
    if (mode == "non-split")
      c.mode = ChebMode::NonSplit;
    else if (mode == "split-wait")
      c.mode = ChebMode::SplitWait;
    else if (mode == "pipeline")
      c.mode = ChebMode::Pipeline;
    else
      throw ConfigError("ConfigError: chebfd mode must be non-split, split-wait or pipeline");
    c.n_b = get_or<int>(j, "n_b", c.n_b);
    c.n_p = get_or<int>(j, "n_p", c.n_p);
    c.n_search = get_or<int>(j, "n_search", c.n_b);
    c.n_sub = get_or<int>(j, "n_sub", c.n_b);
    c.barrier_each_p = get_or<bool>(j, "barrier", false);
    std::string vk = get_or<std::string>(j, "value_kind", "complex");
    if (vk == "complex")
      c.value_kind = ValueKind::ComplexDouble;
    else if (vk == "real")
      c.value_kind = ValueKind::RealDouble;
    else
      throw ConfigError("ConfigError: value_kind must be complex or real");
    c.rank_flops = require<double>(j, "rank_flops", "chebfd");
    c.remote_frac = get_or<double>(j, "remote_frac", c.remote_frac);
    Scenario s = make_chebfd_scenario(c, sys);
    if (top.contains("n_iters")) s.n_iters = n_iters;  // manifest override
    return s;
  }
  if (kind == "custom") {
    check_keys(j, {"kind", "kernel", "distances", "msg_bytes", "barrier"}, "workload");
    KernelSpec k;
    if (j.contains("kernel")) {
      const auto& kj = j.at("kernel");
      check_keys(kj, {"name", "traffic_bytes", "flops", "code_balance", "scalable_seconds"},
                 "workload.kernel");
      k.name = get_or<std::string>(kj, "name", "kernel");
      k.traffic_bytes = get_or<double>(kj, "traffic_bytes", 0.0);
      k.flops = get_or<double>(kj, "flops", 0.0);
      k.code_balance = get_or<double>(kj, "code_balance", 0.0);
      k.scalable_seconds = get_or<double>(kj, "scalable_seconds", 0.0);
    }
    Scenario s;
    s.system = sys;
    s.n_iters = n_iters;
    s.boundary = parse_boundary(top);
    auto dist = get_or<std::vector<int>>(j, "distances", {});
    std::int64_t mb = get_or<std::int64_t>(j, "msg_bytes", 16384);
    s.programs.resize(sys.n_ranks);
    for (int r = 0; r < sys.n_ranks; ++r) {
      auto& prog = s.programs[r];
      if (k.traffic_bytes > 0 || k.scalable_seconds > 0) prog.push_back(Compute{k});
      for (int o : dist) prog.push_back(Isend{r + o, mb});
      for (int o : dist) prog.push_back(Irecv{r + o, mb});
      if (!dist.empty()) prog.push_back(WaitAll{});
      if (get_or<bool>(j, "barrier", false)) prog.push_back(Barrier{});
    }
    return s;
  }
  throw ConfigError("ConfigError: workload kind must be triad, spmvm, chebfd or custom");
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("IoError: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("ConfigError: " + path + ": " + e.what());
  }
}

std::uint64_t document_seed(const nlohmann::json& j, std::uint64_t fallback) {
  return j.is_object() && j.contains("seed") ? j.at("seed").get<std::uint64_t>() : fallback;
}

Scenario scenario_from_json(const nlohmann::json& j, std::uint64_t manifest_seed) {
  check_keys(j,
             {"schema", "seed", "n_iters", "system", "workload", "noise", "injections",
              "boundary"},
             "scenario");
  if (require<std::string>(j, "schema", "scenario") != "scenario/1")
    throw ConfigError("ConfigError: unsupported schema, expected scenario/1");
  if (!j.contains("system")) throw ConfigError("ConfigError: missing key 'system' in scenario");
  if (!j.contains("workload")) throw ConfigError("ConfigError: missing key 'workload' in scenario");

  SystemSpec sys = parse_system(j.at("system"));
  Scenario s = parse_workload(j, sys, manifest_seed);

  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, {"kind", "intensity", "seed"}, "noise");
    std::string kind = get_or<std::string>(n, "kind", "none");
    if (kind == "none")
      s.noise.kind = NoiseKind::None;
    else if (kind == "uniform")
      s.noise.kind = NoiseKind::Uniform;
    else if (kind == "exponential")
      s.noise.kind = NoiseKind::Exponential;
    else
      throw ConfigError("ConfigError: noise kind must be none, uniform or exponential");
    s.noise.intensity = get_or<double>(n, "intensity", 0.0);
    s.noise.seed = n.contains("seed") ? n.at("seed").get<std::uint64_t>()
                                      : mix_seed(manifest_seed, kStreamNoise, 0);
  }
  if (j.contains("injections")) {
    for (const auto& i : j.at("injections")) {
      check_keys(i, {"rank", "iteration", "seconds", "kind"}, "injections[]");
      InjectionSpec inj;
      inj.rank = require<int>(i, "rank", "injection");
      inj.iteration = require<int>(i, "iteration", "injection");
      inj.extra_seconds = require<double>(i, "seconds", "injection");
      std::string kind = get_or<std::string>(i, "kind", "core");
      if (kind == "core")
        inj.kind = InjectionKind::CoreBound;
      else if (kind == "memory")
        inj.kind = InjectionKind::MemoryBound;
      else
        throw ConfigError("ConfigError: injection kind must be core or memory");
      s.injections.push_back(inj);
    }
  }
  return s;
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("IoError: cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("IoError: write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("IoError: rename to " + path + " failed: " + ec.message());
}

}  // namespace desync::cli
