#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "desync/model.hpp"
#include "desync/trace.hpp"

namespace desync {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Idle wave emanating from a one-off injection. Onsets are (rank, time)
/// pairs of the first abnormal wait per rank; velocity is the least-squares
/// slope of distance-from-source vs. onset time.
struct IdleWaveResult {
  double velocity = 0;  // ranks/s
  int extinction_rank = 0;
  std::vector<std::pair<int, double>> onsets;
};

// threshold_frac: a wait counts as wave onset when it exceeds the rank's
// pre-injection baseline by threshold_frac * inj.extra_seconds.
// Throws AnalysisError("NoWaveDetected...") when fewer than two ranks react.
IdleWaveResult measure_idle_wave(const Trace& t, const InjectionSpec& inj,
                                 double threshold_frac = 0.25);

struct WavefrontResult {
  double slope = 0;       // ranks/s; unset when lockstep
  bool lockstep = false;  // amplitude at floating-point zero, slope unusable
  double amplitude = 0;   // seconds, max-min exec start per iteration (median)
  int lagger_rank = -1;    // latest median exec start
  int lagger_domain = -1;  // memory domain with the largest median offset
};

// Fits the per-iteration ramp of exec-phase start times across ranks inside
// [t0, t1]. Throws AnalysisError("WindowTooShort...") with < 3 complete
// iterations in the window.
WavefrontResult measure_wavefront(const Trace& t, double t0, double t1, const SystemSpec& sys);

// Time-weighted distribution of how many ranks of `domain` execute
// simultaneously; slot m holds seconds spent with exactly m ranks in an
// exec segment. Sums to the window length.
std::vector<double> active_histogram(const Trace& t, const ContentionDomain& domain,
                                     double t0, double t1);
std::vector<double> active_histogram(const Trace& t, const ContentionDomain& domain);

int histogram_mode(const std::vector<double>& masses);

/// Per-iteration wall time split per rank, reduced over ranks.
/// All values are seconds per iteration.
struct CerResult {
  double cer_median = 0;  // median over ranks of comm/exec
  double exec_min = 0, exec_median = 0, exec_max = 0;
  double comm_min = 0, comm_median = 0, comm_max = 0;
};

// comm = wait + transfer time (trailing end-of-run idle excluded).
// Throws AnalysisError("ZeroExecTime...") if some rank never executes.
CerResult compute_cer(const Trace& t);

// Cost of one barrier among n_ranks under the system's network, observed
// from a barrier-only run.
double barrier_cost(const SystemSpec& sys, int n_ranks);

// (perf_free - perf_adj) / |perf_adj|.
double compute_pd(double perf_barrier_free, double perf_barrier_adjusted);

double scenario_performance(const Trace& t, double total_flops);

// Total kernel flops over all ranks and iterations, for scenario_performance.
double total_flops(const Scenario& s);

struct MetricsReport {
  std::optional<double> idle_wave_velocity;
  std::optional<int> idle_wave_extinction_rank;
  double wavefront_slope = 0;
  bool lockstep = false;
  double wavefront_amplitude = 0;
  int lagger_domain = -1;
  std::vector<std::vector<double>> active_histograms;  // one per memory domain
  CerResult cer;
  double perf = 0;
  std::optional<double> p_d;

  // Flat "key value" lines, one per scalar; histogram slots as
  // histogram.<domain>.<m>.
  void write(std::ostream& os) const;
};

// Exec/comm min-median-max rows as CSV.
void write_cer_csv(const CerResult& c, std::ostream& os, const std::string& label = "run");

// Convenience aggregation: CER, performance, histograms and (when the
// window holds enough iterations) the wavefront fit.
MetricsReport build_report(const Trace& t, const SystemSpec& sys, double window_t0,
                           double window_t1, double flops);

}  // namespace desync
