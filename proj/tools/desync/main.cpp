#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "desync/analysis.hpp"
#include "desync/engine.hpp"
#include "desync/workloads.hpp"

// Exit codes (stable): 0 success, 1 validation/config error, 2 deadlock,
// 3 I/O error.

namespace {

using namespace desync;
using desync::cli::ConfigError;
using desync::cli::IoError;
using nlohmann::json;

struct Manifest {
  std::string scenario_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "out";
  double t0 = -1, t1 = -1;  // analysis window; negative = auto
};

void auto_window(const Trace& t, double& t0, double& t1) {
  if (t0 < 0) t0 = 0.25 * t.end_time;
  if (t1 < 0) t1 = t.end_time;
}

std::string render_trace(const Trace& t) {
  std::ostringstream os;
  t.write(os);
  return os.str();
}

std::string render_metrics(const MetricsReport& rep) {
  std::ostringstream os;
  rep.write(os);
  return os.str();
}

struct LoadedRun {
  Scenario scenario;
  std::uint64_t seed = 0;
};

LoadedRun load(const Manifest& m) {
  json doc = cli::load_json_file(m.scenario_path);
  LoadedRun lr;
  lr.seed = m.seed_set ? m.seed : cli::document_seed(doc, 0);
  lr.scenario = cli::scenario_from_json(doc, lr.seed);
  return lr;
}

int cmd_run(const Manifest& m) {
  LoadedRun lr = load(m);
  auto vs = validate_scenario(lr.scenario);
  Trace t = run(vs, lr.seed);
  double t0 = m.t0, t1 = m.t1;
  auto_window(t, t0, t1);
  MetricsReport rep = build_report(t, lr.scenario.system, t0, t1, total_flops(lr.scenario));
  cli::atomic_write(m.out_dir + "/trace.txt", render_trace(t));
  cli::atomic_write(m.out_dir + "/metrics.txt", render_metrics(rep));
  std::cout << "wrote " << m.out_dir << "/trace.txt and " << m.out_dir << "/metrics.txt\n";
  return 0;
}

int cmd_sweep(const Manifest& m, const std::string& pointer, const std::string& values_csv) {
  json doc = cli::load_json_file(m.scenario_path);
  std::vector<json> values;
  std::stringstream ss(values_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      values.push_back(json::parse(item));
    } catch (const json::parse_error&) {
      values.push_back(json(item));  // bare string value
    }
  }
  if (values.empty()) throw ConfigError("ConfigError: sweep needs a non-empty value list");

  std::ostringstream csv;
  csv << "point,value,end_time,perf,cer_median,wavefront_amplitude,wavefront_slope\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    json point = doc;
    point[json::json_pointer(pointer)] = values[i];
    std::uint64_t seed = m.seed_set ? m.seed : cli::document_seed(point, 0);
    Scenario s = cli::scenario_from_json(point, seed);
    Trace t = run(validate_scenario(s), seed);
    double t0 = m.t0, t1 = m.t1;
    auto_window(t, t0, t1);
    MetricsReport rep = build_report(t, s.system, t0, t1, total_flops(s));
    std::string dir = m.out_dir + "/point_" + std::to_string(i);
    cli::atomic_write(dir + "/trace.txt", render_trace(t));
    cli::atomic_write(dir + "/metrics.txt", render_metrics(rep));
    csv << i << "," << values[i].dump() << "," << t.end_time << "," << rep.perf << ","
        << rep.cer.cer_median << "," << rep.wavefront_amplitude << ","
        << (rep.lockstep ? std::string("lockstep") : std::to_string(rep.wavefront_slope)) << "\n";
  }
  cli::atomic_write(m.out_dir + "/sweep.csv", csv.str());
  std::cout << "wrote " << values.size() << " sweep points and " << m.out_dir << "/sweep.csv\n";
  return 0;
}

// Strips every Barrier phase; used for the barrier-free variant.
Scenario without_barriers(const Scenario& s) {
  Scenario out = s;
  for (auto& prog : out.programs) {
    std::vector<Phase> kept;
    for (auto& p : prog)
      if (!std::holds_alternative<Barrier>(p)) kept.push_back(p);
    prog = std::move(kept);
  }
  return out;
}

Scenario with_barriers(const Scenario& s) {
  Scenario out = without_barriers(s);
  for (auto& prog : out.programs) prog.push_back(Barrier{});
  return out;
}

Scenario barrier_only(const Scenario& s) {
  Scenario out = s;
  out.injections.clear();
  out.noise = NoiseSpec{};
  for (auto& prog : out.programs) prog = {Barrier{}};
  return out;
}

int cmd_pd(const Manifest& m) {
  LoadedRun lr = load(m);
  const double flops = total_flops(lr.scenario);
  Trace t_free = run(validate_scenario(without_barriers(lr.scenario)), lr.seed);
  Trace t_bar = run(validate_scenario(with_barriers(lr.scenario)), lr.seed);
  Trace t_only = run(validate_scenario(barrier_only(lr.scenario)), lr.seed);
  const double correction = t_only.end_time;
  const double adj_runtime = t_bar.end_time - correction;
  if (adj_runtime <= 0) throw ConfigError("ConfigError: barrier correction exceeds runtime");
  const double perf_free = scenario_performance(t_free, flops);
  const double perf_adj = flops / adj_runtime;
  const double pd = compute_pd(perf_free, perf_adj);

  std::ostringstream os;
  os << "runtime_barrier_free " << t_free.end_time << "\n"
     << "runtime_barrier " << t_bar.end_time << "\n"
     << "runtime_barrier_only " << correction << "\n"
     << "barrier_correction " << correction << "\n"
     << "perf_barrier_free " << perf_free << "\n"
     << "perf_barrier_adjusted " << perf_adj << "\n"
     << "p_d " << pd << "\n";
  std::cout << os.str();
  if (!m.out_dir.empty()) cli::atomic_write(m.out_dir + "/pd.txt", os.str());
  return 0;
}

int cmd_inject(const Manifest& m, int rank, int iteration, double seconds,
               const std::string& kind) {
  LoadedRun lr = load(m);
  InjectionSpec inj;
  inj.rank = rank;
  inj.iteration = iteration;
  inj.extra_seconds = seconds;
  if (kind == "core")
    inj.kind = InjectionKind::CoreBound;
  else if (kind == "memory")
    inj.kind = InjectionKind::MemoryBound;
  else
    throw ConfigError("ConfigError: injection kind must be core or memory");

  Scenario base = lr.scenario;
  base.injections.clear();
  Scenario injected = base;
  injected.injections.push_back(inj);

  Trace t_base = run(validate_scenario(base), lr.seed);
  Trace t_inj = run(validate_scenario(injected), lr.seed);

  double t0 = m.t0, t1 = m.t1;
  auto_window(t_base, t0, t1);
  std::ostringstream os;
  try {
    auto wf0 = measure_wavefront(t_base, t0, t1, base.system);
    auto wf1 = measure_wavefront(t_inj, t0, t1, base.system);
    os << "lagger_before " << wf0.lagger_domain << "\n";
    os << "lagger_after " << wf1.lagger_domain << "\n";
  } catch (const AnalysisError& e) {
    os << "wavefront_error " << e.what() << "\n";
  }
  try {
    auto wave = measure_idle_wave(t_inj, inj);
    os << "wave_detected 1\n";
    os << "velocity " << wave.velocity << "\n";
    os << "extinction_rank " << wave.extinction_rank << "\n";
  } catch (const AnalysisError&) {
    os << "wave_detected 0\n";
  }
  std::cout << os.str();
  if (!m.out_dir.empty()) cli::atomic_write(m.out_dir + "/inject.txt", os.str());
  return 0;
}

int cmd_analyze(const Manifest& m, const std::string& trace_path) {
  std::ifstream in(trace_path);
  if (!in) throw IoError("IoError: cannot open " + trace_path);
  Trace t = Trace::read(in);
  LoadedRun lr = load(m);
  double t0 = m.t0, t1 = m.t1;
  auto_window(t, t0, t1);
  MetricsReport rep = build_report(t, lr.scenario.system, t0, t1, total_flops(lr.scenario));
  std::ostringstream os;
  rep.write(os);
  std::cout << os.str();
  if (!m.out_dir.empty()) cli::atomic_write(m.out_dir + "/metrics.txt", os.str());
  return 0;
}

int cmd_export_csv(const std::string& trace_path, const std::string& out_dir) {
  std::ifstream in(trace_path);
  if (!in) throw IoError("IoError: cannot open " + trace_path);
  Trace t = Trace::read(in);
  std::ostringstream seg;
  t.write_csv(seg);
  cli::atomic_write(out_dir + "/segments.csv", seg.str());
  std::ostringstream cer;
  write_cer_csv(compute_cer(t), cer);
  cli::atomic_write(out_dir + "/cer.csv", cer.str());
  std::cout << "wrote " << out_dir << "/segments.csv and " << out_dir << "/cer.csv\n";
  return 0;
}

void add_manifest_opts(CLI::App* cmd, Manifest& m, bool need_scenario = true) {
  auto* s = cmd->add_option("--scenario", m.scenario_path, "Scenario JSON file");
  if (need_scenario) s->required();
  cmd->add_option("--seed", m.seed, "Run seed (overrides the scenario file)")
      ->each([&m](const std::string&) { m.seed_set = true; });
  cmd->add_option("--out", m.out_dir, "Output directory");
  cmd->add_option("--t0", m.t0, "Analysis window start, seconds (default: 25% of runtime)");
  cmd->add_option("--t1", m.t1, "Analysis window end, seconds (default: end of run)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contention-aware simulator of bulk-synchronous message-passing programs"};
  app.require_subcommand(1);

  Manifest m;
  std::string sweep_pointer, sweep_values, trace_path;
  int inj_rank = 0, inj_iter = 0;
  double inj_seconds = 0;
  std::string inj_kind = "core";

  auto* c_run = app.add_subcommand("run", "Simulate a scenario, write trace and metrics");
  add_manifest_opts(c_run, m);

  auto* c_sweep = app.add_subcommand("sweep", "Run the scenario once per parameter value");
  add_manifest_opts(c_sweep, m);
  c_sweep->add_option("--param", sweep_pointer, "JSON pointer into the scenario, e.g. /workload/n_b")
      ->required();
  c_sweep->add_option("--values", sweep_values, "Comma-separated values")->required();

  auto* c_pd = app.add_subcommand("pd", "Barrier-free vs. barrier speedup report");
  add_manifest_opts(c_pd, m);

  auto* c_inject = app.add_subcommand("inject", "Idle-wave experiment with a one-off delay");
  add_manifest_opts(c_inject, m);
  c_inject->add_option("--rank", inj_rank, "Injected rank")->required();
  c_inject->add_option("--iteration", inj_iter, "Injected iteration")->required();
  c_inject->add_option("--seconds", inj_seconds, "Injected delay in seconds")->required();
  c_inject->add_option("--kind", inj_kind, "core or memory");

  auto* c_analyze = app.add_subcommand("analyze", "Re-analyze an existing trace");
  add_manifest_opts(c_analyze, m);
  c_analyze->add_option("--trace", trace_path, "Trace file")->required();

  auto* c_export = app.add_subcommand("export-csv", "Trace to plot-ready CSV");
  c_export->add_option("--trace", trace_path, "Trace file")->required();
  c_export->add_option("--out", m.out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_run->parsed()) return cmd_run(m);
    if (c_sweep->parsed()) return cmd_sweep(m, sweep_pointer, sweep_values);
    if (c_pd->parsed()) return cmd_pd(m);
    if (c_inject->parsed()) return cmd_inject(m, inj_rank, inj_iter, inj_seconds, inj_kind);
    if (c_analyze->parsed()) return cmd_analyze(m, trace_path);
    if (c_export->parsed()) return cmd_export_csv(trace_path, m.out_dir);
  } catch (const DeadlockError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {  // validation, matrix, analysis
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 1;
}
