#pragma once

// Fixed-step RK4 simulation of xdot = A x + B z(x), trajectory verdicts,
// sampled upper bounds on the spherical region of attraction and plot data.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "roaqc/error.hpp"
#include "roaqc/monomials.hpp"

namespace roaqc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd rhs(const QuadraticSystem& sys, const VectorXd& x) {
  if (x.size() != sys.n())
    throw DimensionError("state has length " + std::to_string(x.size()) + ", expected " + std::to_string(sys.n()));
  return sys.A() * x + sys.B() * sys.basis().evaluate(x);
}

enum class Verdict { Converged, Diverged, Undecided };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "Converged";
    case Verdict::Diverged: return "Diverged";
    case Verdict::Undecided: return "Undecided";
  }
  return "?";
}

struct SimOptions {
  double dt = 1e-3;
  double T = 40.0;            // the slowest mode of the 3-state example needs ~18 s to shrink by 1e6
  double conv_tol = 1e-6;     // relative to max(1, |x0|)
  double div_factor = 1e3;    // relative to max(1, |x0|)
  int stride = 0;             // keep every stride-th state; 0 keeps only x0 and the final state
  bool early_exit = true;     // stop as soon as the norm drops below the convergence threshold
};

struct Trajectory {
  double dt = 0.0;
  double T = 0.0;
  std::vector<double> times;
  std::vector<VectorXd> states;
  Verdict verdict = Verdict::Undecided;
  double t_final = 0.0;
  double norm_final = 0.0;
  VectorXd x0;
};

namespace sim_detail {

// RK4 workspace; N, M are compile-time sizes for small systems or Eigen::Dynamic.
template <int N, int M>
struct Rk4 {
  using Vec = Eigen::Matrix<double, N, 1>;
  using W = Eigen::Matrix<double, M, 1>;
  Eigen::Matrix<double, N, N> A;
  Eigen::Matrix<double, N, M> B;
  int n;
  Vec k1, k2, k3, k4, tmp;
  W w;

  explicit Rk4(const QuadraticSystem& s)
      : A(s.A()), B(s.B()), n(s.n()), k1(s.n()), k2(s.n()), k3(s.n()), k4(s.n()), tmp(s.n()), w(s.m()) {}

  void f(const Vec& x, Vec& out) {
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) w[k++] = x[i] * x[j];
    out.noalias() = A * x;
    out.noalias() += B * w;
  }

  void step(Vec& x, double h) {
    f(x, k1);
    tmp = x + 0.5 * h * k1;
    f(tmp, k2);
    tmp = x + 0.5 * h * k2;
    f(tmp, k3);
    tmp = x + h * k3;
    f(tmp, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
};

template <int N, int M>
void run(const QuadraticSystem& sys, const VectorXd& x0, const SimOptions& opts, Trajectory& tr) {
  using Vec = typename Rk4<N, M>::Vec;
  const double base = std::max(1.0, x0.norm());
  const double conv = opts.conv_tol * base;
  const double div = opts.div_factor * base;
  const long steps = std::lround(std::ceil(opts.T / opts.dt - 1e-9));

  Rk4<N, M> rk(sys);
  Vec x = x0;
  double t = 0.0;
  double nx = x.norm();
  tr.verdict = Verdict::Undecided;
  if (!x.allFinite() || nx >= div) {
    tr.verdict = Verdict::Diverged;
  } else if (opts.early_exit && nx <= conv) {
    tr.verdict = Verdict::Converged;
  } else {
    for (long s = 1; s <= steps; ++s) {
      const double h = std::min(opts.dt, opts.T - t);
      rk.step(x, h);
      t = (s == steps) ? opts.T : t + h;
      nx = x.norm();
      if (opts.stride > 0 && s % opts.stride == 0) {
        tr.times.push_back(t);
        tr.states.push_back(x);
      }
      if (!std::isfinite(nx) || nx >= div) {
        tr.verdict = Verdict::Diverged;
        break;
      }
      if (opts.early_exit && nx <= conv) {
        tr.verdict = Verdict::Converged;
        break;
      }
    }
    if (tr.verdict == Verdict::Undecided && nx <= conv) tr.verdict = Verdict::Converged;
  }
  if (tr.times.back() != t || tr.states.size() == 1) {
    tr.times.push_back(t);
    tr.states.push_back(x);
  }
  tr.t_final = t;
  tr.norm_final = nx;
}

}  // namespace sim_detail

inline Trajectory integrate(const QuadraticSystem& sys, const VectorXd& x0, const SimOptions& opts = {}) {
  if (x0.size() != sys.n())
    throw DimensionError("initial state has length " + std::to_string(x0.size()) + ", expected " +
                         std::to_string(sys.n()));
  if (!(opts.dt > 0.0) || !(opts.T > 0.0)) throw Error("integrate needs dt > 0 and T > 0");
  Trajectory tr;
  tr.dt = opts.dt;
  tr.T = opts.T;
  tr.x0 = x0;
  tr.times.push_back(0.0);
  tr.states.push_back(x0);
  switch (sys.n()) {
    case 1: sim_detail::run<1, 1>(sys, x0, opts, tr); break;
    case 2: sim_detail::run<2, 3>(sys, x0, opts, tr); break;
    case 3: sim_detail::run<3, 6>(sys, x0, opts, tr); break;
    case 4: sim_detail::run<4, 10>(sys, x0, opts, tr); break;
    default: sim_detail::run<Eigen::Dynamic, Eigen::Dynamic>(sys, x0, opts, tr); break;
  }
  return tr;
}

/// Verdict only, without keeping any states.
inline Verdict classify_initial_state(const QuadraticSystem& sys, const VectorXd& x0, const SimOptions& opts = {}) {
  SimOptions o = opts;
  o.stride = 0;
  return integrate(sys, x0, o).verdict;
}

/// Unit directions from a Halton sequence mapped through Box-Muller, with a
/// Cranley-Patterson shift drawn from `seed` so different seeds give different point sets.
inline std::vector<VectorXd> sphere_directions(int n, int count, std::uint64_t seed = 0) {
  if (n < 1) throw DimensionError("sphere_directions needs n >= 1");
  if (count < 0) throw Error("direction count must be non-negative");
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  const int dims = n + (n % 2);
  if (dims > static_cast<int>(std::size(kPrimes))) throw DimensionError("sphere_directions supports n <= 20");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> shift(dims);
  for (auto& s : shift) s = seed == 0 ? 0.0 : uni(rng);

  auto radical_inverse = [](long i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    return r;
  };

  std::vector<VectorXd> out;
  out.reserve(count);
  std::vector<double> u(dims);
  for (long idx = 1; static_cast<int>(out.size()) < count; ++idx) {
    for (int d = 0; d < dims; ++d) {
      double v = radical_inverse(idx, kPrimes[d]) + shift[d];
      u[d] = v - std::floor(v);
    }
    VectorXd g(dims);
    bool ok = true;
    for (int d = 0; d < dims; d += 2) {
      if (u[d] <= 0.0) {
        ok = false;
        break;
      }
      const double rad = std::sqrt(-2.0 * std::log(u[d]));
      g[d] = rad * std::cos(2.0 * M_PI * u[d + 1]);
      g[d + 1] = rad * std::sin(2.0 * M_PI * u[d + 1]);
    }
    if (!ok) continue;
    VectorXd v = g.head(n);
    const double nv = v.norm();
    if (!(nv > 1e-12)) continue;
    out.push_back(v / nv);
  }
  return out;
}

struct UpperBoundSearch {
  int directions = 1000;
  double r_lo = 0.1;
  double r_hi = 10.0;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  SimOptions sim;
  unsigned workers = 1;
};

struct UpperBoundResult {
  bool found = false;     // some sampled direction fails to converge at r_hi
  double r_bar = 0.0;     // upper end of the final bracket
  double r_lower = 0.0;   // largest radius at which every sampled direction converged
  VectorXd witness;       // initial state at r_bar that does not converge
  Verdict witness_verdict = Verdict::Undecided;
  int trajectories = 0;
  std::string message;
};

/// Smallest radius (to tol) at which some sampled direction gives a non-converging
/// trajectory. Undecided counts as non-converging.
inline UpperBoundResult roa_upper_bound(const QuadraticSystem& sys, const UpperBoundSearch& search = {}) {
  if (!(search.r_lo > 0.0) || !(search.r_hi > search.r_lo)) throw Error("upper bound bracket needs 0 < r_lo < r_hi");
  if (!(search.tol > 0.0)) throw Error("bisection tolerance must be positive");
  const auto dirs = sphere_directions(sys.n(), search.directions, search.seed);
  UpperBoundResult res;
  std::optional<std::size_t> last_bad;

  // index of a direction whose trajectory from radius r does not converge, if any
  auto probe = [&](double r) -> std::optional<std::size_t> {
    auto fails = [&](std::size_t d) {
      ++res.trajectories;
      return classify_initial_state(sys, r * dirs[d], search.sim) != Verdict::Converged;
    };
    if (last_bad && fails(*last_bad)) return last_bad;
    const unsigned workers = std::max(1u, search.workers);
    if (workers == 1) {
      for (std::size_t d = 0; d < dirs.size(); ++d)
        if ((!last_bad || d != *last_bad) && fails(d)) return d;
      return std::nullopt;
    }
    // chunks in input order; the first failing chunk wins so the witness is deterministic
    const std::size_t chunk = (dirs.size() + workers - 1) / workers;
    std::vector<std::future<std::optional<std::size_t>>> jobs;
    for (unsigned w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w]() -> std::optional<std::size_t> {
        for (std::size_t d = w * chunk; d < std::min(dirs.size(), (w + 1) * chunk); ++d) {
          if (last_bad && d == *last_bad) continue;
          if (classify_initial_state(sys, r * dirs[d], search.sim) != Verdict::Converged) return d;
        }
        return std::nullopt;
      }));
    std::optional<std::size_t> hit;
    for (auto& j : jobs) {
      auto h = j.get();
      if (!hit && h) hit = h;
    }
    res.trajectories += static_cast<int>(dirs.size());
    return hit;
  };

  auto hi_hit = probe(search.r_hi);
  if (!hi_hit) {
    res.found = false;
    res.r_lower = search.r_hi;
    std::ostringstream msg;
    msg << "no upper bound below " << search.r_hi;
    res.message = msg.str();
    return res;
  }
  last_bad = hi_hit;
  double lo = search.r_lo, hi = search.r_hi;
  if (auto lo_hit = probe(lo)) {
    res.found = true;
    res.r_bar = lo;
    res.witness = lo * dirs[*lo_hit];
    res.witness_verdict = integrate(sys, res.witness, search.sim).verdict;
    res.message = "non-converging trajectory already at the lower bracket end";
    return res;
  }
  while (hi - lo > search.tol) {
    const double mid = 0.5 * (lo + hi);
    if (auto h = probe(mid)) {
      hi = mid;
      last_bad = h;
    } else {
      lo = mid;
    }
  }
  res.found = true;
  res.r_bar = hi;
  res.r_lower = lo;
  res.witness = hi * dirs[*last_bad];
  res.witness_verdict = integrate(sys, res.witness, search.sim).verdict;
  res.message = "ok";
  return res;
}

struct VerdictRow {
  VectorXd x0;
  Verdict verdict = Verdict::Undecided;
  double t_final = 0.0;
  double norm_final = 0.0;
  std::vector<VectorXd> samples;  // filled when stride > 0
};

/// Verdicts for arbitrary initial states in input order.
inline std::vector<VerdictRow> verdict_table(const QuadraticSystem& sys, const std::vector<VectorXd>& x0s,
                                             const SimOptions& opts = {}, unsigned workers = 1) {
  std::vector<VerdictRow> rows(x0s.size());
  auto run = [&](std::size_t i) {
    Trajectory tr = integrate(sys, x0s[i], opts);
    rows[i].x0 = x0s[i];
    rows[i].verdict = tr.verdict;
    rows[i].t_final = tr.t_final;
    rows[i].norm_final = tr.norm_final;
    if (opts.stride > 0) rows[i].samples = std::move(tr.states);
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, x0s.size()))));
  if (workers == 1) {
    for (std::size_t i = 0; i < x0s.size(); ++i) run(i);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < x0s.size(); i += workers) run(i);
      }));
    for (auto& j : jobs) j.get();
  }
  return rows;
}

struct PortraitGrid {
  int points = 41;  // per axis; 0 gives an empty table
  double lo = -6.0;
  double hi = 6.0;
};

struct PhasePortrait {
  std::vector<VerdictRow> rows;
  std::vector<double> circles;  // certified radii to overlay
};

/// Row-major grid over [lo, hi]^2 (x1 varies fastest) for 2-state systems.
inline PhasePortrait phase_portrait(const QuadraticSystem& sys, const PortraitGrid& grid, const SimOptions& opts = {},
                                    std::vector<double> circles = {}, unsigned workers = 1) {
  if (sys.n() != 2) throw DimensionError("phase portraits need a 2-state system; use verdict_table for n != 2");
  if (grid.points < 0) throw Error("grid size must be non-negative");
  std::vector<VectorXd> x0s;
  x0s.reserve(static_cast<std::size_t>(grid.points) * grid.points);
  const double h = grid.points > 1 ? (grid.hi - grid.lo) / (grid.points - 1) : 0.0;
  for (int r = 0; r < grid.points; ++r)
    for (int c = 0; c < grid.points; ++c) {
      VectorXd x(2);
      x << grid.lo + c * h, grid.lo + r * h;
      x0s.push_back(x);
    }
  PhasePortrait pp;
  pp.rows = verdict_table(sys, x0s, opts, workers);
  pp.circles = std::move(circles);
  return pp;
}

inline void write_verdict_csv(std::ostream& os, const std::vector<VerdictRow>& rows, int n) {
  for (int i = 0; i < n; ++i) os << "x0_" << (i + 1) << ',';
  os << "verdict,t_final,norm_final\n";
  os.precision(17);
  for (const auto& r : rows) {
    for (int i = 0; i < n; ++i) os << r.x0[i] << ',';
    os << to_string(r.verdict) << ',' << r.t_final << ',' << r.norm_final << '\n';
  }
}

inline nlohmann::json portrait_to_json(const PhasePortrait& pp) {
  nlohmann::json j;
  j["circles"] = pp.circles;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : pp.rows) {
    nlohmann::json row;
    row["x0"] = json_detail::vector_to_json(r.x0);
    row["verdict"] = to_string(r.verdict);
    row["t_final"] = r.t_final;
    row["norm_final"] = r.norm_final;
    if (!r.samples.empty()) {
      row["samples"] = nlohmann::json::array();
      for (const auto& s : r.samples) row["samples"].push_back(json_detail::vector_to_json(s));
    }
    j["rows"].push_back(std::move(row));
  }
  return j;
}

}  // namespace roaqc
