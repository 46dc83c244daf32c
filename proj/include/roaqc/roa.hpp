#pragma once

// Spherical region-of-attraction certificates from quadratic constraints.
//
// For fixed E and alpha, find P, t = 1/r^2 and multipliers xi >= 0 with
//
//   [A'P + PA, PB; B'P, 0] + sum_i xi_i M_i + diag(eps I, 0)  <= 0
//   E / alpha^2 <= P <= t I
//
// minimizing t. Then V(x) = x'Px decreases on {x'Px <= 1}, which contains the
// ball of radius r = 1/sqrt(t), and that level set lies inside the QC region.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "roaqc/ellipsoid.hpp"
#include "roaqc/error.hpp"
#include "roaqc/monomials.hpp"
#include "roaqc/qc_factory.hpp"
#include "roaqc/sdp.hpp"

namespace roaqc {

/// 1e-6 * max(1, ||A||_2)
inline double default_eps(const QuadraticSystem& sys) {
  Eigen::JacobiSVD<MatrixXd> svd(sys.A());
  return 1e-6 * std::max(1.0, svd.singularValues()[0]);
}

struct RoaOptions {
  /// Margin on the decrease condition; NaN selects default_eps().
  double eps = std::numeric_limits<double>::quiet_NaN();
  SdpOptions sdp;
  /// Concurrent solves in alpha_sweep; 0 picks the hardware concurrency.
  unsigned workers = 0;

  double eps_for(const QuadraticSystem& sys) const { return std::isnan(eps) ? default_eps(sys) : eps; }
};

struct CertificateMargins {
  double lmi_max_eig = 0.0;    // lambda_max of the shifted decrease LMI (want <= 0)
  double lmi_scale = 1.0;      // magnitude the LMI tolerance is relative to
  double lower_min_eig = 0.0;  // lambda_min(P - E/alpha^2)
  double upper_min_eig = 0.0;  // lambda_min(t I - P)
  double xi_min = 0.0;
};

struct RoaCertificate {
  MatrixXd P;
  double t = 0.0;
  double r = 0.0;
  double alpha = 0.0;
  double eps = 0.0;
  VectorXd xi;
  CertificateMargins margins;
  QcRecipe recipe;
};

namespace roa_detail {

inline int vech_size(int n) { return n * (n + 1) / 2; }

// Symmetric basis matrix for the (a, b) entry of P, a <= b.
inline MatrixXd sym_unit(int n, int a, int b) {
  MatrixXd E = MatrixXd::Zero(n, n);
  E(a, b) = 1.0;
  E(b, a) = 1.0;
  return E;
}

inline MatrixXd lyapunov_part(const QuadraticSystem& sys, const MatrixXd& P) {
  const int n = sys.n(), m = sys.m();
  MatrixXd L = MatrixXd::Zero(n + m, n + m);
  L.topLeftCorner(n, n) = sys.A().transpose() * P + P * sys.A();
  L.topRightCorner(n, m) = P * sys.B();
  L.bottomLeftCorner(m, n) = sys.B().transpose() * P;
  return L;
}

}  // namespace roa_detail

/// Variables y = (vech(P), t, xi); blocks: decrease LMI (n+m), P - E/alpha^2 (n), tI - P (n),
/// then one 1x1 block per multiplier.
inline SdpProblem assemble(const QuadraticSystem& sys, const std::vector<QcMatrix>& qcs, const Ellipsoid& ell,
                           double eps) {
  using namespace roa_detail;
  const int n = sys.n(), m = sys.m(), nq = static_cast<int>(qcs.size());
  ell.check_dim(n);
  for (const auto& qc : qcs)
    if (qc.M.rows() != n + m || qc.M.cols() != n + m)
      throw DimensionError("QC matrix must be " + std::to_string(n + m) + "x" + std::to_string(n + m));
  const int np = vech_size(n);
  const int t_idx = np;
  SdpProblem prob;
  prob.num_vars = np + 1 + nq;
  prob.objective = VectorXd::Unit(prob.num_vars, t_idx);
  auto zero_block = [&](int d) {
    SdpBlock b;
    b.F0 = MatrixXd::Zero(d, d);
    b.F.assign(prob.num_vars, MatrixXd::Zero(d, d));
    return b;
  };

  SdpBlock lmi = zero_block(n + m);
  lmi.F0.topLeftCorner(n, n) = -eps * MatrixXd::Identity(n, n);
  SdpBlock lower = zero_block(n);
  lower.F0 = -ell.E() / (ell.alpha() * ell.alpha());
  lower.F0 = 0.5 * (lower.F0 + lower.F0.transpose());
  SdpBlock upper = zero_block(n);
  upper.F[t_idx] = MatrixXd::Identity(n, n);

  int k = 0;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b, ++k) {
      const MatrixXd Eab = sym_unit(n, a, b);
      lmi.F[k] = -lyapunov_part(sys, Eab);
      lower.F[k] = Eab;
      upper.F[k] = -Eab;
    }
  for (int i = 0; i < nq; ++i) lmi.F[np + 1 + i] = -0.5 * (qcs[i].M + qcs[i].M.transpose());

  prob.blocks.push_back(std::move(lmi));
  prob.blocks.push_back(std::move(lower));
  prob.blocks.push_back(std::move(upper));
  for (int i = 0; i < nq; ++i) {
    SdpBlock b = zero_block(1);
    b.F[np + 1 + i](0, 0) = 1.0;
    prob.blocks.push_back(std::move(b));
  }
  return prob;
}

/// Recompute every certificate margin from (P, t, xi) alone.
inline CertificateMargins compute_margins(const QuadraticSystem& sys, const std::vector<QcMatrix>& qcs,
                                          const MatrixXd& P, double t, const VectorXd& xi, const Ellipsoid& ell,
                                          double eps) {
  const int n = sys.n();
  if (xi.size() != static_cast<Eigen::Index>(qcs.size())) throw DimensionError("multiplier count differs from QC count");
  CertificateMargins mg;
  const MatrixXd base = roa_detail::lyapunov_part(sys, P);
  MatrixXd L = base;
  double qc_mag = 0.0;
  for (std::size_t i = 0; i < qcs.size(); ++i) {
    L += xi[static_cast<Eigen::Index>(i)] * qcs[i].M;
    qc_mag += std::abs(xi[static_cast<Eigen::Index>(i)]) * qcs[i].M.cwiseAbs().maxCoeff();
  }
  L.topLeftCorner(n, n) += eps * MatrixXd::Identity(n, n);
  mg.lmi_max_eig = lambda_max_symmetric(L);
  mg.lmi_scale = std::max({1.0, base.cwiseAbs().maxCoeff(), qc_mag});
  mg.lower_min_eig = lambda_min_symmetric(P - ell.E() / (ell.alpha() * ell.alpha()));
  mg.upper_min_eig = lambda_min_symmetric(t * MatrixXd::Identity(n, n) - P);
  mg.xi_min = xi.size() ? xi.minCoeff() : 0.0;
  return mg;
}

struct RoaResult {
  SdpStatus status = SdpStatus::NumericalFailure;
  double r_star = 0.0;  // 0 unless the status is usable
  bool usable() const { return certificate.has_value(); }
  double alpha = 0.0;
  int iterations = 0;
  int qc_count = 0;
  std::optional<RoaCertificate> certificate;
  std::string message;
};

inline RoaResult solve_roa(const QuadraticSystem& sys, const std::vector<QcMatrix>& qcs, const Ellipsoid& ell,
                           const QcRecipe& recipe = {}, const RoaOptions& opts = {}) {
  const double eps = opts.eps_for(sys);
  const SdpProblem prob = assemble(sys, qcs, ell, eps);
  const SdpSolution sol = solve(prob, opts.sdp);
  RoaResult res;
  res.status = sol.status;
  res.alpha = ell.alpha();
  res.iterations = sol.iterations;
  res.qc_count = static_cast<int>(qcs.size());
  res.message = sol.message;
  if (sol.status != SdpStatus::Optimal && sol.status != SdpStatus::NearOptimal) return res;

  const int n = sys.n();
  const int np = roa_detail::vech_size(n);
  RoaCertificate cert;
  cert.P = MatrixXd::Zero(n, n);
  int k = 0;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b, ++k) {
      cert.P(a, b) = sol.y[k];
      cert.P(b, a) = sol.y[k];
    }
  cert.t = sol.y[np];
  cert.xi = sol.y.tail(static_cast<Eigen::Index>(qcs.size()));
  cert.alpha = ell.alpha();
  cert.eps = eps;
  cert.recipe = recipe;
  cert.r = cert.t > 0.0 ? 1.0 / std::sqrt(cert.t) : 0.0;
  cert.margins = compute_margins(sys, qcs, cert.P, cert.t, cert.xi, ell, eps);
  if (sol.status == SdpStatus::NearOptimal) {
    // the primal point alone is the certificate; keep it only if it checks out
    const auto& mg = cert.margins;
    if (!(mg.lmi_max_eig <= 1e-7 * mg.lmi_scale && mg.lower_min_eig >= -1e-8 && mg.upper_min_eig >= -1e-8 &&
          mg.xi_min >= -1e-10)) {
      res.message += "; near-optimal point failed the certificate check";
      return res;
    }
  }
  res.r_star = cert.r;
  res.certificate = std::move(cert);
  return res;
}

inline RoaResult solve_roa(const QuadraticSystem& sys, const QcRecipe& recipe, const Ellipsoid& ell,
                           const RoaOptions& opts = {}) {
  const QcSet set = build_qc_set(sys, ell, recipe);
  return solve_roa(sys, set.qcs, ell, recipe, opts);
}

struct CertificateReport {
  CertificateMargins margins;
  bool lmi_ok = false;
  bool lower_ok = false;
  bool upper_ok = false;
  bool xi_ok = false;
  int vdot_samples = 0;
  int vdot_violations = 0;
  double vdot_worst = -std::numeric_limits<double>::infinity();  // max of Vdot / |x|^2 over samples
  bool pass = false;
};

/// Re-check a certificate: all three LMIs from scratch, then dV/dt = 2x'P(Ax + Bz(x)) < 0
/// on samples of {x'Px <= 1} \ {0}.
inline CertificateReport verify_certificate(const QuadraticSystem& sys, const std::vector<QcMatrix>& qcs,
                                            const RoaCertificate& cert, const Ellipsoid& ell, double eps,
                                            int samples = 10000, std::uint64_t seed = 0xce47) {
  CertificateReport rep;
  const int n = sys.n();
  if (cert.P.rows() != n || cert.P.cols() != n) throw DimensionError("certificate P has the wrong size");
  rep.margins = compute_margins(sys, qcs, cert.P, cert.t, cert.xi, ell, eps);
  rep.lmi_ok = rep.margins.lmi_max_eig <= 1e-7 * rep.margins.lmi_scale;
  rep.lower_ok = rep.margins.lower_min_eig >= -1e-8;
  rep.upper_ok = rep.margins.upper_min_eig >= -1e-8;
  rep.xi_ok = rep.margins.xi_min >= -1e-10;

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (cert.P + cert.P.transpose()));
  bool vdot_ok = es.eigenvalues()[0] > 0.0;
  if (vdot_ok && samples > 0) {
    const MatrixXd Pinv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                               es.eigenvectors().transpose();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    VectorXd u(n), w(sys.m());
    for (int s = 0; s < samples; ++s) {
      for (int i = 0; i < n; ++i) u[i] = gauss(rng);
      const double nu = u.norm();
      double rad = s % 4 == 0 ? 1.0 : std::pow(unif(rng), 1.0 / n);
      if (nu == 0.0 || rad == 0.0) continue;
      const VectorXd x = Pinv_sqrt * (rad / nu * u);
      sys.basis().evaluate_into(x, w);
      const double vdot = 2.0 * x.dot(cert.P * (sys.A() * x + sys.B() * w));
      rep.vdot_samples++;
      rep.vdot_worst = std::max(rep.vdot_worst, vdot / x.squaredNorm());
      if (!(vdot < 0.0)) rep.vdot_violations++;
    }
  } else if (!vdot_ok) {
    rep.vdot_violations = 1;
  }
  rep.pass = rep.lmi_ok && rep.lower_ok && rep.upper_ok && rep.xi_ok && rep.vdot_violations == 0;
  return rep;
}

/// Logarithmic alpha grid plus golden-section refinement around the best grid point.
struct AlphaGrid {
  double lo = 0.05;
  double hi = 50.0;
  int count = 60;
  int refine_evals = 12;

  std::vector<double> points() const {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw Error("alpha grid needs 0 < lo <= hi and count >= 1");
    std::vector<double> out;
    if (count == 1) return {lo};
    for (int i = 0; i < count; ++i)
      out.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (count - 1)));
    return out;
  }

  /// "lo:hi:count"
  static AlphaGrid parse(const std::string& text) {
    AlphaGrid g;
    const auto a = text.find(':');
    const auto b = a == std::string::npos ? a : text.find(':', a + 1);
    if (b == std::string::npos) throw ParseError("alpha grid must be lo:hi:count, got '" + text + "'");
    try {
      std::size_t used = 0;
      g.lo = std::stod(text.substr(0, a), &used);
      g.hi = std::stod(text.substr(a + 1, b - a - 1));
      g.count = std::stoi(text.substr(b + 1));
    } catch (const std::exception&) {
      throw ParseError("alpha grid must be lo:hi:count, got '" + text + "'");
    }
    if (!(g.lo > 0.0) || !(g.hi >= g.lo) || g.count < 1) throw ParseError("alpha grid needs 0 < lo <= hi, count >= 1");
    return g;
  }
};

struct SweepPoint {
  double alpha = 0.0;
  double r_star = 0.0;
  SdpStatus status = SdpStatus::NumericalFailure;
  int iterations = 0;
};

struct SweepResult {
  std::vector<SweepPoint> curve;       // grid points in grid order
  std::vector<SweepPoint> refinement;  // golden-section evaluations in evaluation order
  double best_alpha = 0.0;
  double best_r = 0.0;
  int qc_count = 0;
  std::optional<RoaResult> best;  // certificate at best_alpha, if any alpha was feasible
};

inline SweepResult alpha_sweep(const QuadraticSystem& sys, const QcRecipe& recipe, const MatrixXd& E,
                               const std::vector<double>& grid, int refine_evals = 0, const RoaOptions& opts = {}) {
  if (grid.empty()) throw Error("alpha grid is empty");
  for (double a : grid)
    if (!(a > 0.0)) throw Error("alpha values must be positive");
  const Ellipsoid shape(E, 1.0);

  auto evaluate = [&](double alpha) {
    const Ellipsoid ell = shape.with_alpha(alpha);
    const QcSet set = build_qc_set(sys, ell, recipe);
    return solve_roa(sys, set.qcs, ell, recipe, opts);
  };

  SweepResult out;
  std::vector<RoaResult> results(grid.size());
  unsigned workers = opts.workers ? opts.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(grid.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) results[i] = evaluate(grid[i]);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < grid.size(); i += workers) results[i] = evaluate(grid[i]);
      }));
    for (auto& j : jobs) j.get();
  }

  std::optional<std::size_t> best_idx;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const RoaResult& r = results[i];
    out.curve.push_back({grid[i], r.r_star, r.status, r.iterations});
    out.qc_count = r.qc_count;
    if (r.usable() && (!best_idx || r.r_star > results[*best_idx].r_star)) best_idx = i;
  }
  if (!best_idx) return out;
  out.best_alpha = grid[*best_idx];
  out.best_r = results[*best_idx].r_star;
  out.best = results[*best_idx];

  if (refine_evals > 0 && grid.size() > 1) {
    // golden section in log(alpha) on the bracket formed by the neighbouring grid points
    const std::size_t k = *best_idx;
    double a = std::log(grid[k == 0 ? 0 : k - 1]);
    double b = std::log(grid[std::min(k + 1, grid.size() - 1)]);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double la) {
      RoaResult r = evaluate(std::exp(la));
      out.refinement.push_back({std::exp(la), r.r_star, r.status, r.iterations});
      if (r.usable() && r.r_star > out.best_r) {
        out.best_r = r.r_star;
        out.best_alpha = std::exp(la);
        out.best = r;
      }
      return r.r_star;
    };
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = refine_evals > 1 ? f(d) : 0.0;
    for (int e = 2; e < refine_evals; ++e) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = f(d);
      }
    }
  }
  return out;
}

inline SweepResult alpha_sweep(const QuadraticSystem& sys, const QcRecipe& recipe, const MatrixXd& E,
                               const AlphaGrid& grid = {}, const RoaOptions& opts = {}) {
  return alpha_sweep(sys, recipe, E, grid.points(), grid.refine_evals, opts);
}

}  // namespace roaqc
