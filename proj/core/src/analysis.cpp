#include "desync/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "desync/engine.hpp"

namespace desync {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool is_wait(const Segment& s) {
  return s.kind == SegmentKind::Wait && s.detail != "idle";
}

bool is_comm(const Segment& s) { return is_wait(s) || s.kind == SegmentKind::Transfer; }

// Least-squares slope of y over x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double n = (double)x.size(), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double den = n * sxx - sx * sx;
  if (den == 0) return std::numeric_limits<double>::infinity();
  return (n * sxy - sx * sy) / den;
}

}  // namespace

IdleWaveResult measure_idle_wave(const Trace& t, const InjectionSpec& inj,
                                 double threshold_frac) {
  if (inj.extra_seconds <= 0) throw AnalysisError("NoWaveDetected: zero-size injection");
  if (inj.rank < 0 || inj.rank >= t.n_ranks())
    throw AnalysisError("NoWaveDetected: injection rank outside trace");

  // Injection time: the injected exec segment on the source rank.
  double t_inj = -1;
  for (const auto& s : t.ranks[inj.rank])
    if (s.kind == SegmentKind::Exec && s.iteration == inj.iteration &&
        s.detail.rfind("inject:", 0) == 0) {
      t_inj = s.t_start;
      break;
    }
  if (t_inj < 0) throw AnalysisError("NoWaveDetected: injection not present in trace");

  IdleWaveResult res;
  for (int r = 0; r < t.n_ranks(); ++r) {
    double baseline = 0;
    for (const auto& s : t.ranks[r])
      if (is_wait(s) && s.t_end <= t_inj) baseline = std::max(baseline, s.duration());
    const double thresh = baseline + threshold_frac * inj.extra_seconds;
    for (const auto& s : t.ranks[r])
      if (is_wait(s) && s.t_start >= t_inj && s.duration() > thresh) {
        res.onsets.emplace_back(r, s.t_start);
        break;
      }
  }
  if (res.onsets.size() < 2)
    throw AnalysisError("NoWaveDetected: injection too small or absorbed");

  std::vector<double> dist, when;
  int far_rank = inj.rank;
  std::int64_t far_dist = -1;
  for (auto& [r, tn] : res.onsets) {
    dist.push_back(std::abs(r - inj.rank));
    when.push_back(tn);
    if (std::abs(r - inj.rank) > far_dist) {
      far_dist = std::abs(r - inj.rank);
      far_rank = r;
    }
  }
  res.velocity = ls_slope(when, dist);
  res.extinction_rank = far_rank;
  return res;
}

WavefrontResult measure_wavefront(const Trace& t, double t0, double t1, const SystemSpec& sys) {
  const int n = t.n_ranks();
  // First exec start per (iteration, rank) inside the window.
  std::map<int, std::vector<double>> starts;  // iteration -> per-rank start
  for (int r = 0; r < n; ++r)
    for (const auto& s : t.ranks[r]) {
      if (s.kind != SegmentKind::Exec || s.t_start < t0 || s.t_start > t1) continue;
      auto& row = starts[s.iteration];
      if (row.empty()) row.assign(n, std::numeric_limits<double>::quiet_NaN());
      if (std::isnan(row[r]) || s.t_start < row[r]) row[r] = s.t_start;
    }
  // Keep iterations where every rank started inside the window.
  std::vector<std::vector<double>> its;
  for (auto& [it, row] : starts) {
    bool full = true;
    for (double v : row)
      if (std::isnan(v)) {
        full = false;
        break;
      }
    if (full) its.push_back(std::move(row));
  }
  if (its.size() < 3)
    throw AnalysisError("WindowTooShort: need >= 3 complete iterations, have " +
                        std::to_string(its.size()));

  std::vector<double> amps, slopes;
  std::vector<std::vector<double>> offsets(n);
  for (const auto& row : its) {
    double lo = *std::min_element(row.begin(), row.end());
    double hi = *std::max_element(row.begin(), row.end());
    amps.push_back(hi - lo);
    for (int r = 0; r < n; ++r) offsets[r].push_back(row[r] - lo);
    // Fit rank vs. time over maximal monotone sections of length >= 3.
    int sec_start = 0;
    auto flush = [&](int sec_end) {  // [sec_start, sec_end)
      if (sec_end - sec_start >= 3) {
        std::vector<double> xs(row.begin() + sec_start, row.begin() + sec_end);
        std::vector<double> ys;
        for (int r = sec_start; r < sec_end; ++r) ys.push_back(r);
        double sl = ls_slope(xs, ys);
        if (std::isfinite(sl) && sl != 0) slopes.push_back(std::abs(sl));
      }
    };
    int dir = 0;
    for (int r = 1; r < n; ++r) {
      int d = row[r] > row[r - 1] ? 1 : row[r] < row[r - 1] ? -1 : 0;
      if (d != 0 && dir != 0 && d != dir) {
        flush(r);
        sec_start = r - 1;
        dir = d;
      } else if (d != 0) {
        dir = d;
      }
    }
    flush(n);
  }

  WavefrontResult res;
  res.amplitude = median(amps);
  if (res.amplitude <= 0 || slopes.empty()) {
    res.lockstep = true;
    res.slope = std::numeric_limits<double>::infinity();
  } else {
    res.slope = median(slopes);
  }
  std::vector<double> med_off(n);
  for (int r = 0; r < n; ++r) med_off[r] = median(offsets[r]);
  res.lagger_rank =
      (int)(std::max_element(med_off.begin(), med_off.end()) - med_off.begin());
  // The lagging domain is judged by its median rank offset, not by the
  // single latest rank: wavefront plateaus often straddle the domain
  // boundary by one rank, which would make the argmax tie-break arbitrary.
  double worst = -1;
  for (std::size_t d = 0; d < sys.domains.size(); ++d) {
    const auto& dom = sys.domains[d];
    if (dom.kind != DomainKind::Memory) continue;
    std::vector<double> m(med_off.begin() + dom.first_rank,
                          med_off.begin() + std::min(dom.last_rank, n));
    if (m.empty()) continue;
    double v = median(m);
    if (v > worst) {
      worst = v;
      res.lagger_domain = (int)d;
    }
  }
  return res;
}

std::vector<double> active_histogram(const Trace& t, const ContentionDomain& domain,
                                     double t0, double t1) {
  std::vector<double> masses(domain.size() + 1, 0.0);
  if (t1 <= t0) return masses;
  // Sweep exec intervals of the domain's ranks, clipped to the window.
  std::vector<std::pair<double, int>> ev;
  for (int r = domain.first_rank; r < domain.last_rank && r < t.n_ranks(); ++r)
    for (const auto& s : t.ranks[r]) {
      if (s.kind != SegmentKind::Exec) continue;
      double a = std::max(s.t_start, t0), b = std::min(s.t_end, t1);
      if (a >= b) continue;
      ev.emplace_back(a, +1);
      ev.emplace_back(b, -1);
    }
  std::sort(ev.begin(), ev.end());
  double prev = t0;
  int m = 0;
  for (auto& [tt, d] : ev) {
    if (tt > prev) masses[m] += tt - prev;
    prev = tt;
    m += d;
  }
  if (t1 > prev) masses[0] += t1 - prev;
  return masses;
}

std::vector<double> active_histogram(const Trace& t, const ContentionDomain& domain) {
  return active_histogram(t, domain, 0.0, t.end_time);
}

int histogram_mode(const std::vector<double>& masses) {
  if (masses.empty()) return 0;
  return (int)(std::max_element(masses.begin(), masses.end()) - masses.begin());
}

CerResult compute_cer(const Trace& t) {
  std::vector<double> exec, comm, ratio;
  for (int r = 0; r < t.n_ranks(); ++r) {
    double e = 0, c = 0;
    int max_iter = -1;
    for (const auto& s : t.ranks[r]) {
      max_iter = std::max(max_iter, s.iteration);
      if (s.kind == SegmentKind::Exec)
        e += s.duration();
      else if (is_comm(s))
        c += s.duration();
    }
    if (e <= 0)
      throw AnalysisError("ZeroExecTime: rank " + std::to_string(r) + " never executes");
    double iters = max_iter + 1;
    exec.push_back(e / iters);
    comm.push_back(c / iters);
    ratio.push_back(c / e);
  }
  CerResult res;
  res.cer_median = median(ratio);
  res.exec_min = *std::min_element(exec.begin(), exec.end());
  res.exec_max = *std::max_element(exec.begin(), exec.end());
  res.exec_median = median(exec);
  res.comm_min = *std::min_element(comm.begin(), comm.end());
  res.comm_max = *std::max_element(comm.begin(), comm.end());
  res.comm_median = median(comm);
  return res;
}

double barrier_cost(const SystemSpec& sys, int n_ranks) {
  if (n_ranks <= 1) return 0;
  Scenario s;
  s.system.n_ranks = n_ranks;
  s.system.network = sys.network;
  s.system.domains.push_back({0, n_ranks, 1e9, 1e9, DomainKind::Memory});
  s.n_iters = 1;
  s.programs.assign(n_ranks, {Barrier{}});
  return run(validate_scenario(s), 0).end_time;
}

double compute_pd(double perf_barrier_free, double perf_barrier_adjusted) {
  if (perf_barrier_adjusted == 0)
    throw AnalysisError("DivisionByZero: barrier-adjusted performance is zero");
  return (perf_barrier_free - perf_barrier_adjusted) / std::abs(perf_barrier_adjusted);
}

double scenario_performance(const Trace& t, double flops) {
  if (t.end_time <= 0) throw AnalysisError("ZeroDuration: trace has no extent");
  return flops / t.end_time;
}

double total_flops(const Scenario& s) {
  double f = 0;
  for (const auto& prog : s.programs)
    for (const auto& ph : prog)
      if (auto* c = std::get_if<Compute>(&ph)) f += c->kernel.flops;
  return f * s.n_iters;
}

void MetricsReport::write(std::ostream& os) const {
  auto put = [&](const std::string& k, double v) { os << k << " " << v << "\n"; };
  if (idle_wave_velocity) put("idle_wave.velocity", *idle_wave_velocity);
  if (idle_wave_extinction_rank) os << "idle_wave.extinction_rank " << *idle_wave_extinction_rank << "\n";
  os << "wavefront.lockstep " << (lockstep ? 1 : 0) << "\n";
  if (!lockstep) put("wavefront.slope", wavefront_slope);
  put("wavefront.amplitude", wavefront_amplitude);
  os << "wavefront.lagger_domain " << lagger_domain << "\n";
  put("cer.median", cer.cer_median);
  put("cer.exec_min", cer.exec_min);
  put("cer.exec_median", cer.exec_median);
  put("cer.exec_max", cer.exec_max);
  put("cer.comm_min", cer.comm_min);
  put("cer.comm_median", cer.comm_median);
  put("cer.comm_max", cer.comm_max);
  put("perf", perf);
  if (p_d) put("p_d", *p_d);
  for (std::size_t d = 0; d < active_histograms.size(); ++d)
    for (std::size_t m = 0; m < active_histograms[d].size(); ++m)
      put("histogram." + std::to_string(d) + "." + std::to_string(m),
          active_histograms[d][m]);
}

void write_cer_csv(const CerResult& c, std::ostream& os, const std::string& label) {
  os << "label,metric,min,median,max\n";
  os << label << ",exec," << c.exec_min << "," << c.exec_median << "," << c.exec_max << "\n";
  os << label << ",comm," << c.comm_min << "," << c.comm_median << "," << c.comm_max << "\n";
  os << label << ",cer,," << c.cer_median << ",\n";
}

MetricsReport build_report(const Trace& t, const SystemSpec& sys, double window_t0,
                           double window_t1, double flops) {
  MetricsReport rep;
  rep.cer = compute_cer(t);
  rep.perf = scenario_performance(t, flops);
  for (const auto& d : sys.domains)
    if (d.kind == DomainKind::Memory)
      rep.active_histograms.push_back(active_histogram(t, d, window_t0, window_t1));
  try {
    auto wf = measure_wavefront(t, window_t0, window_t1, sys);
    rep.wavefront_slope = wf.slope;
    rep.lockstep = wf.lockstep;
    rep.wavefront_amplitude = wf.amplitude;
    rep.lagger_domain = wf.lagger_domain;
  } catch (const AnalysisError&) {
    rep.lagger_domain = -1;
  }
  return rep;
}

}  // namespace desync
