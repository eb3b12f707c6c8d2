#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "coefficients.hpp"
#include "filter.hpp"
#include "lattice.hpp"
#include "metrics.hpp"

namespace smwfb {

/// Runs f(0..count-1) on a small worker pool.  Callers write into
/// pre-sized slots so results do not depend on scheduling.
template <class F>
void parallel_for(std::size_t count, F&& f, unsigned workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) f(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < count;) {
        try {
          f(k);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Parses "1.2", "pi/2.8", "pi", "0.5*pi".
inline double parse_angle(const std::string& text) {
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad angle: " + text);
    return v;
  };
  const auto p = text.find("pi");
  if (p == std::string::npos) return num(text);
  const std::string before = text.substr(0, p), after = text.substr(p + 2);
  double v = std::numbers::pi;
  if (!before.empty()) {
    if (before.back() != '*') throw std::invalid_argument("bad angle: " + text);
    v *= num(before.substr(0, before.size() - 1));
  }
  if (!after.empty()) {
    if (after.front() != '/') throw std::invalid_argument("bad angle: " + text);
    v /= num(after.substr(1));
  }
  return v;
}

// ---- configuration ---------------------------------------------------------

struct ExperimentConfig {
  int experiment = 1;
  std::optional<int> M, N;            // unset: the experiment's own grid
  std::optional<double> rho, theta;   // unset: the experiment's own grid
  std::string excitation = "gaussian";
  long samples = 20000;
  int seeds = 10;
  std::uint64_t seed = 1;             // first seed; the rest follow consecutively
  double lambda = 1.0;
  double discard = 0.2;
  int signal = 0;                     // experiment 5: 1..9, 0 for all
  int segment = 1024;
  std::string out = ".";

  static ExperimentConfig defaults(int id) {
    ExperimentConfig c;
    c.experiment = id;
    switch (id) {
      case 4: c.samples = 400; c.seeds = 5; break;
      case 5: c.samples = 1 << 17; c.seeds = 1; break;
      default: break;
    }
    return c;
  }

  void validate() const {
    if (experiment < 1 || experiment > 5) throw std::invalid_argument("experiment id must be 1..5");
    if (M && (*M < 2 || *M > 16)) throw std::invalid_argument("M must be in 2..16");
    if (N && (*N < 1 || *N > 64)) throw std::invalid_argument("N must be in 1..64");
    if (rho && !(*rho >= 0.0 && *rho < 1.0)) throw std::invalid_argument("rho must be in [0,1)");
    if (samples < 1) throw std::invalid_argument("samples must be positive");
    if (seeds < 1) throw std::invalid_argument("seeds must be positive");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in (0,1]");
    if (!(discard >= 0.0 && discard < 1.0)) throw std::invalid_argument("discard must be in [0,1)");
    if (signal < 0 || signal > 9) throw std::invalid_argument("signal must be 0..9");
    if (segment < 2 || (segment & (segment - 1)) != 0) throw std::invalid_argument("segment must be a power of two");
    if (excitation != "gaussian" && excitation != "uniform" && excitation != "exponential" && excitation != "gamma")
      throw std::invalid_argument("unknown excitation: " + excitation);
  }

  ExcitationSpec excitation_spec(std::uint64_t s) const {
    ExcitationSpec e;
    e.seed = s;
    if (excitation == "uniform") e.distribution = Uniform{-1.0, 1.0};
    else if (excitation == "exponential") e.distribution = Exponential{1.5};
    else if (excitation == "gamma") e.distribution = Gamma{2.0, 1.0};
    else e.distribution = Gaussian{0.0, 1.0};
    return e;
  }

  std::vector<std::uint64_t> seed_list() const {
    std::vector<std::uint64_t> v;
    for (int k = 0; k < seeds; ++k) v.push_back(seed + static_cast<std::uint64_t>(k));
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"experiment", experiment}, {"excitation", excitation}, {"samples", samples}, {"seeds", seeds},
                     {"seed", seed}, {"lambda", lambda}, {"discard", discard}, {"signal", signal},
                     {"segment", segment}, {"out", out}};
    j["M"] = M ? nlohmann::json(*M) : nlohmann::json(nullptr);
    j["N"] = N ? nlohmann::json(*N) : nlohmann::json(nullptr);
    j["rho"] = rho ? nlohmann::json(*rho) : nlohmann::json(nullptr);
    j["theta"] = theta ? nlohmann::json(*theta) : nlohmann::json(nullptr);
    return j;
  }

  /// Applies the keys present in a flat JSON object.  Unknown keys are errors.
  void merge(const nlohmann::json& j, const std::vector<std::string>& skip = {}) {
    if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");
    for (const auto& [k, v] : j.items()) {
      if (std::find(skip.begin(), skip.end(), k) != skip.end()) continue;
      if (k == "experiment") experiment = v.get<int>();
      else if (k == "M") M = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (k == "N") N = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (k == "rho") rho = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (k == "theta")
        theta = v.is_null() ? std::nullopt
                            : std::optional<double>(v.is_string() ? parse_angle(v.get<std::string>()) : v.get<double>());
      else if (k == "excitation") excitation = v.get<std::string>();
      else if (k == "samples") samples = v.get<long>();
      else if (k == "seeds") seeds = v.get<int>();
      else if (k == "seed") seed = v.get<std::uint64_t>();
      else if (k == "lambda") lambda = v.get<double>();
      else if (k == "discard") discard = v.get<double>();
      else if (k == "signal") signal = v.get<int>();
      else if (k == "segment") segment = v.get<int>();
      else if (k == "out") out = v.get<std::string>();
      else throw std::invalid_argument("unknown config key: " + k);
    }
  }
};

// ---- coding gain grids (experiments 1-3) ------------------------------------

struct GainPoint {
  int M = 4, N = 4;
  double rho = 0.975, theta = 0.0;
};

struct GainRun {
  GainPoint point;
  std::uint64_t seed = 0;
  CodingGainReport report;
  double am_gm = 1.0;
};

struct GainSummary {
  GainPoint point;
  double mean_gain_db = 0.0;
  double mean_am_gm = 1.0;
  double theory_db = 0.0;  // infinite-order prediction bound for the AR(2) source
};

struct GainExperiment {
  std::vector<GainRun> runs;           // point-major, seed-minor
  std::vector<GainSummary> summaries;  // one per point
};

/// Upper bound on coding gain for an AR(2) source: variance over innovation variance.
inline double ar2_gain_bound_db(double rho, double theta) { return 10.0 * std::log10(ar2_variance(rho, theta)); }

inline GainRun run_gain_once(const GainPoint& p, const ExperimentConfig& cfg, std::uint64_t seed) {
  const Signal x = generate_ar(ArModel::from_poles(p.rho, p.theta), cfg.excitation_spec(seed),
                               static_cast<std::size_t>(cfg.samples));
  const auto out = whiten(WhitenerConfig{p.M, p.N, cfg.lambda}, x.samples());
  GainRun r{p, seed, coding_gain(x, out, cfg.discard), 1.0};
  if (!r.report.infinite) r.am_gm = am_gm_report(r.report.channel_variances).ratio;
  return r;
}

inline GainExperiment run_gain_grid(const std::vector<GainPoint>& points, const ExperimentConfig& cfg) {
  const auto seeds = cfg.seed_list();
  GainExperiment ex;
  ex.runs.resize(points.size() * seeds.size());
  parallel_for(ex.runs.size(), [&](std::size_t k) {
    ex.runs[k] = run_gain_once(points[k / seeds.size()], cfg, seeds[k % seeds.size()]);
  });
  for (std::size_t p = 0; p < points.size(); ++p) {
    GainSummary s{points[p], 0.0, 0.0, ar2_gain_bound_db(points[p].rho, points[p].theta)};
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const auto& r = ex.runs[p * seeds.size() + k];
      s.mean_gain_db += r.report.infinite ? std::numeric_limits<double>::infinity() : r.report.gain_db;
      s.mean_am_gm += r.am_gm;
    }
    s.mean_gain_db /= static_cast<double>(seeds.size());
    s.mean_am_gm /= static_cast<double>(seeds.size());
    ex.summaries.push_back(s);
  }
  return ex;
}

/// Parameter grid of experiments 1-3; fields set in the config pin that axis.
inline std::vector<GainPoint> gain_points(const ExperimentConfig& cfg) {
  const double pi = std::numbers::pi;
  std::vector<double> thetas, rhos;
  std::vector<int> Ms;
  int N = 4;
  switch (cfg.experiment) {
    case 1: thetas = {pi / 2.8, pi / 1.75}; rhos = {0.975}; Ms = {4}; N = 4; break;
    case 2: thetas = {pi / 3}; rhos = {0.5, 0.7, 0.8, 0.9, 0.95, 0.975, 0.99}; Ms = {4}; N = 4; break;
    case 3: thetas = {pi / 3}; rhos = {0.975}; Ms = {2, 3, 4, 5, 6}; N = 5; break;
    default: throw std::invalid_argument("gain_points: experiments 1-3 only");
  }
  if (cfg.theta) thetas = {*cfg.theta};
  if (cfg.rho) rhos = {*cfg.rho};
  if (cfg.M) Ms = {*cfg.M};
  if (cfg.N) N = *cfg.N;
  std::vector<GainPoint> pts;
  for (int M : Ms)
    for (double r : rhos)
      for (double t : thetas) pts.push_back({M, N, r, t});
  return pts;
}

// ---- coefficient trajectories (experiment 4) --------------------------------

struct TrajectoryRun {
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> h;  // per block: h_0 .. h_{M-1} concatenated
  long converged_block = kNeverConverged;
  std::vector<std::vector<double>> final_a;
};

struct TrajectoryExperiment {
  int M = 2, N = 1;
  double rho = 0.6, theta = 0.0, tolerance = 0.05;
  std::vector<TrajectoryRun> runs;
};

inline TrajectoryRun run_trajectory(const WhitenerConfig& wc, const Signal& x, double tol) {
  FilterBankEstimator est(wc, 0);
  TrajectoryRun r;
  const int M = wc.M;
  std::vector<double> blk(static_cast<std::size_t>(M), 0.0);
  auto push = [&] {
    est.push_block(blk);
    std::vector<double> row;
    for (int i = 0; i < M; ++i) {
      auto h = est.coefficients().h(i, wc.N);
      row.insert(row.end(), h.begin(), h.end());
    }
    r.h.push_back(std::move(row));
  };
  if (x.empty()) return r;
  blk.back() = x(0);
  push();
  for (long t = 1; t + M <= static_cast<long>(x.size()); t += M) {
    for (int j = 0; j < M; ++j) blk[static_cast<std::size_t>(j)] = x(t + j);
    push();
  }
  est.refresh_prefilter();
  for (int i = 0; i < M; ++i) r.final_a.push_back(est.coefficients().a(i));
  if (r.h.size() >= 100) r.converged_block = convergence_report(r.h, tol);
  return r;
}

inline TrajectoryExperiment run_trajectories(const ExperimentConfig& cfg) {
  TrajectoryExperiment ex;
  ex.M = cfg.M.value_or(2);
  ex.N = cfg.N.value_or(1);
  ex.rho = cfg.rho.value_or(0.6);
  ex.theta = cfg.theta.value_or(std::numbers::pi / 3);
  const auto seeds = cfg.seed_list();
  ex.runs.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t k) {
    const Signal x = generate_ar(ArModel::from_poles(ex.rho, ex.theta), cfg.excitation_spec(seeds[k]),
                                 static_cast<std::size_t>(cfg.samples));
    ex.runs[k] = run_trajectory(WhitenerConfig{ex.M, ex.N, cfg.lambda}, x, ex.tolerance);
    ex.runs[k].seed = seeds[k];
  });
  return ex;
}

// ---- whitening of the nine test signals (experiment 5) ----------------------

struct WhiteningRun {
  int signal = 1;
  std::uint64_t seed = 0;
  SpectrumEstimate input, output;  // output: channel 0
  double input_flatness = 0.0;
  std::vector<double> channel_flatness;
  std::vector<double> channel_max_autocorr;  // max |r(l)|, l = 1..10
};

struct WhiteningExperiment {
  int M = 2, N = 32;
  std::vector<WhiteningRun> runs;
};

inline WhiteningRun run_whitening(int k, std::uint64_t seed, int M, int N, const ExperimentConfig& cfg) {
  const Signal x = test_signal(k, seed, static_cast<std::size_t>(cfg.samples));
  const auto out = whiten(WhitenerConfig{M, N, cfg.lambda}, x.samples());
  const auto seg = static_cast<std::size_t>(cfg.segment);
  WhiteningRun r{k, seed, welch_psd(x, seg), {}, 0.0, {}, {}};
  r.input_flatness = spectral_flatness(r.input);
  const std::size_t skip = static_cast<std::size_t>(cfg.discard * static_cast<double>(out.size()));
  for (int i = 0; i < M; ++i) {
    const auto ch = channel_series(out, i, skip);
    auto psd = welch_psd(ch, seg);
    r.channel_flatness.push_back(spectral_flatness(psd));
    const auto ac = autocorrelation(ch, 10);
    double m = 0.0;
    for (std::size_t l = 1; l < ac.size(); ++l) m = std::max(m, std::abs(ac[l]));
    r.channel_max_autocorr.push_back(m);
    if (i == 0) r.output = std::move(psd);
  }
  return r;
}

inline WhiteningExperiment run_whitening_set(const ExperimentConfig& cfg) {
  WhiteningExperiment ex;
  ex.M = cfg.M.value_or(2);
  ex.N = cfg.N.value_or(32);
  std::vector<int> signals;
  if (cfg.signal == 0)
    for (int k = 1; k <= 9; ++k) signals.push_back(k);
  else
    signals.push_back(cfg.signal);
  const auto seeds = cfg.seed_list();
  ex.runs.resize(signals.size() * seeds.size());
  parallel_for(ex.runs.size(), [&](std::size_t k) {
    ex.runs[k] = run_whitening(signals[k / seeds.size()], seeds[k % seeds.size()], ex.M, ex.N, cfg);
  });
  return ex;
}

// ---- output files --------------------------------------------------------------

namespace detail {

inline std::string config_comment(const ExperimentConfig& cfg) { return "# config: " + cfg.to_json().dump() + "\n"; }

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << body;
}

}  // namespace detail

/// Runs the configured experiment, writes CSV/JSON files to cfg.out and
/// returns the summary that is also written as summary.json.
inline nlohmann::json run_experiment(const ExperimentConfig& cfg) {
  using nlohmann::json;
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const std::string head = detail::config_comment(cfg);
  json summary{{"config", cfg.to_json()}};
  auto fmt = [](double v) { return detail::format_double(v); };

  if (cfg.experiment <= 3) {
    const auto ex = run_gain_grid(gain_points(cfg), cfg);
    std::ostringstream runs, table;
    runs << head << "M,N,rho,theta,seed,gain_db,am_gm_ratio\n";
    for (const auto& r : ex.runs)
      runs << r.point.M << ',' << r.point.N << ',' << fmt(r.point.rho) << ',' << fmt(r.point.theta) << ',' << r.seed
           << ',' << fmt(r.report.infinite ? std::numeric_limits<double>::infinity() : r.report.gain_db) << ','
           << fmt(r.am_gm) << '\n';
    table << head << "M,N,rho,theta,mean_gain_db,mean_am_gm_ratio,ar2_bound_db\n";
    summary["points"] = json::array();
    for (const auto& s : ex.summaries) {
      table << s.point.M << ',' << s.point.N << ',' << fmt(s.point.rho) << ',' << fmt(s.point.theta) << ','
            << fmt(s.mean_gain_db) << ',' << fmt(s.mean_am_gm) << ',' << fmt(s.theory_db) << '\n';
      summary["points"].push_back({{"M", s.point.M}, {"N", s.point.N}, {"rho", s.point.rho}, {"theta", s.point.theta},
                                   {"mean_gain_db", s.mean_gain_db}, {"mean_am_gm_ratio", s.mean_am_gm},
                                   {"ar2_bound_db", s.theory_db}});
    }
    detail::write_file(dir / "coding_gain_runs.csv", runs.str());
    detail::write_file(dir / "coding_gain.csv", table.str());
  } else if (cfg.experiment == 4) {
    const auto ex = run_trajectories(cfg);
    summary["M"] = ex.M;
    summary["N"] = ex.N;
    summary["rho"] = ex.rho;
    summary["theta"] = ex.theta;
    summary["tolerance"] = ex.tolerance;
    summary["runs"] = json::array();
    for (const auto& r : ex.runs) {
      std::ostringstream os;
      os << head << "# seed: " << r.seed << '\n' << "block,channel,order,value\n";
      for (std::size_t n = 0; n < r.h.size(); ++n)
        for (std::size_t c = 0; c < r.h[n].size(); ++c)
          os << n << ',' << c / static_cast<std::size_t>(ex.N) << ',' << c % static_cast<std::size_t>(ex.N) + 1 << ','
             << fmt(r.h[n][c]) << '\n';
      detail::write_file(dir / ("trajectory_seed" + std::to_string(r.seed) + ".csv"), os.str());
      summary["runs"].push_back({{"seed", r.seed}, {"converged_block", r.converged_block},
                                 {"final_h", r.h.empty() ? json::array() : json(r.h.back())}, {"final_a", r.final_a}});
    }
  } else {
    const auto ex = run_whitening_set(cfg);
    summary["M"] = ex.M;
    summary["N"] = ex.N;
    summary["runs"] = json::array();
    std::ostringstream table;
    table << head << "signal,seed,channel,input_flatness,output_flatness,max_abs_autocorr_lag1_10\n";
    for (const auto& r : ex.runs) {
      const std::string tag = "s" + std::to_string(r.signal) + "_seed" + std::to_string(r.seed);
      for (const auto& [name, psd] : {std::pair{"input", &r.input}, std::pair{"output", &r.output}}) {
        std::ostringstream os;
        os << head << "# seed: " << r.seed << "\n# spectrum: " << psd->metadata().dump() << '\n';
        write_spectrum_csv(os, *psd);
        detail::write_file(dir / ("spectrum_" + tag + "_" + name + ".csv"), os.str());
      }
      for (std::size_t i = 0; i < r.channel_flatness.size(); ++i)
        table << r.signal << ',' << r.seed << ',' << i << ',' << fmt(r.input_flatness) << ','
              << fmt(r.channel_flatness[i]) << ',' << fmt(r.channel_max_autocorr[i]) << '\n';
      summary["runs"].push_back({{"signal", r.signal}, {"seed", r.seed}, {"input_flatness", r.input_flatness},
                                 {"channel_flatness", r.channel_flatness},
                                 {"channel_max_autocorr", r.channel_max_autocorr},
                                 {"spectrum", r.input.metadata()}});
    }
    detail::write_file(dir / "whitening.csv", table.str());
  }
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace smwfb
