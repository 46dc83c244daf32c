#pragma once

// Small dense semidefinite programs
//
//   minimize    c'y
//   subject to  F0_b + sum_i y_i F_i_b  >= 0   for every block b
//
// solved with an infeasible primal-dual path-following method using
// Nesterov-Todd scaling and a Mehrotra predictor-corrector step. The dual is
//
//   maximize   -sum_b <F0_b, Z_b>   s.t.  sum_b <F_i_b, Z_b> = c_i,  Z_b >= 0.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "roaqc/ellipsoid.hpp"
#include "roaqc/error.hpp"
#include "roaqc/monomials.hpp"

namespace roaqc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SdpBlock {
  MatrixXd F0;
  std::vector<MatrixXd> F;  // one per variable; zero matrices allowed

  int dim() const { return static_cast<int>(F0.rows()); }
};

struct SdpProblem {
  int num_vars = 0;
  VectorXd objective;
  std::vector<SdpBlock> blocks;

  /// Throws DimensionError if shapes are inconsistent or a matrix is not symmetric.
  void validate() const {
    if (objective.size() != num_vars) throw DimensionError("objective length differs from num_vars");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& blk = blocks[b];
      const auto d = blk.F0.rows();
      if (blk.F0.cols() != d) throw DimensionError("block " + std::to_string(b) + ": F0 not square");
      if (static_cast<int>(blk.F.size()) != num_vars)
        throw DimensionError("block " + std::to_string(b) + ": expected " + std::to_string(num_vars) + " F_i");
      auto check_sym = [&](const MatrixXd& M, const std::string& what) {
        if (M.rows() != d || M.cols() != d) throw DimensionError("block " + std::to_string(b) + ": " + what + " size");
        const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-13 * scale)
          throw DimensionError("block " + std::to_string(b) + ": " + what + " not symmetric");
      };
      check_sym(blk.F0, "F0");
      for (int i = 0; i < num_vars; ++i) check_sym(blk.F[i], "F" + std::to_string(i + 1));
    }
  }

  /// F0_b + sum_i y_i F_i_b
  MatrixXd block_value(std::size_t b, const VectorXd& y) const {
    MatrixXd S = blocks[b].F0;
    for (int i = 0; i < num_vars; ++i)
      if (y[i] != 0.0) S += y[i] * blocks[b].F[i];
    return S;
  }
};

enum class SdpStatus { Optimal, NearOptimal, Infeasible, Unbounded, NumericalFailure, IterationLimit };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "Optimal";
    case SdpStatus::NearOptimal: return "NearOptimal";
    case SdpStatus::Infeasible: return "Infeasible";
    case SdpStatus::Unbounded: return "Unbounded";
    case SdpStatus::NumericalFailure: return "NumericalFailure";
    case SdpStatus::IterationLimit: return "IterationLimit";
  }
  return "?";
}

struct SdpOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iters = 200;
  double regularization = 1e-12;
  /// Normalized size of an infeasibility/unboundedness certificate residual.
  double infeas_tol = 1e-7;
  /// Dual residual accepted when it stops improving while the primal point is feasible
  /// and the gap is closed (reported as NearOptimal).
  double near_tol = 1e-5;
  /// Per-iteration trace (iteration, objectives, residuals, steps) when set.
  std::ostream* log = nullptr;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  VectorXd y;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double dual_objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> block_min_eig;
  std::vector<MatrixXd> Z;  // dual matrices, one per block
  double gap = std::numeric_limits<double>::quiet_NaN();  // <S, Z>
  double min_gap_seen = std::numeric_limits<double>::infinity();
  double primal_infeasibility = std::numeric_limits<double>::quiet_NaN();  // relative
  double dual_infeasibility = std::numeric_limits<double>::quiet_NaN();    // relative
  int iterations = 0;
  std::string message;
};

namespace sdp_detail {

struct WorkBlock {
  int source = 0;  // index of the block in the original problem
  int dim = 0;
  std::vector<int> keep;  // rows of the original block retained after presolve
  MatrixXd F0;
  std::vector<int> vars;  // variables with a nonzero coefficient in this block
  std::vector<MatrixXd> F;
};

inline double frob_inner(const MatrixXd& A, const MatrixXd& B) { return A.cwiseProduct(B).sum(); }

inline MatrixXd sym(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

// Rows and columns that are identically zero in F0 and every F_i carry no information and
// would leave the cone without an interior; drop them.
inline std::vector<WorkBlock> presolve(const SdpProblem& prob) {
  std::vector<WorkBlock> out;
  for (std::size_t src = 0; src < prob.blocks.size(); ++src) {
    const auto& blk = prob.blocks[src];
    const int d = blk.dim();
    std::vector<int> keep;
    for (int r = 0; r < d; ++r) {
      bool nz = blk.F0.row(r).cwiseAbs().maxCoeff() > 0.0;
      for (int i = 0; i < prob.num_vars && !nz; ++i) nz = blk.F[i].row(r).cwiseAbs().maxCoeff() > 0.0;
      if (nz) keep.push_back(r);
    }
    if (keep.empty()) continue;
    WorkBlock w;
    w.source = static_cast<int>(src);
    w.dim = static_cast<int>(keep.size());
    w.keep = keep;
    auto take = [&](const MatrixXd& M) {
      MatrixXd R(w.dim, w.dim);
      for (int a = 0; a < w.dim; ++a)
        for (int b = 0; b < w.dim; ++b) R(a, b) = M(keep[a], keep[b]);
      return sym(R);
    };
    w.F0 = take(blk.F0);
    for (int i = 0; i < prob.num_vars; ++i) {
      if (blk.F[i].cwiseAbs().maxCoeff() == 0.0) continue;
      w.vars.push_back(i);
      w.F.push_back(take(blk.F[i]));
    }
    out.push_back(std::move(w));
  }
  return out;
}

// Largest step t in (0, inf] with X + t dX >= 0, given the Cholesky factor of X.
inline double max_step(const Eigen::LLT<MatrixXd>& cholX, const MatrixXd& dX) {
  const MatrixXd L = cholX.matrixL();
  MatrixXd T = L.triangularView<Eigen::Lower>().solve(dX);
  T = L.triangularView<Eigen::Lower>().solve(T.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(T), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()[0];
  return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

struct Scaling {
  MatrixXd R;     // R^-1 S R^-T = R' Z R = diag(lambda)
  MatrixXd Rinv;
  MatrixXd Winv;  // (R R')^-1
  VectorXd lambda;
};

inline bool compute_scaling(const MatrixXd& S, const MatrixXd& Z, Scaling& out) {
  Eigen::LLT<MatrixXd> ls(S), lz(Z);
  if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
  const MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
  Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd sig = svd.singularValues();
  if (!(sig.minCoeff() > 0.0) || !sig.allFinite()) return false;
  const MatrixXd& V = svd.matrixV();
  const MatrixXd LsInv = Ls.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(S.rows(), S.cols()));
  out.lambda = sig;
  out.R = Ls * V * sig.cwiseSqrt().cwiseInverse().asDiagonal();
  out.Rinv = sig.cwiseSqrt().asDiagonal() * V.transpose() * LsInv;
  out.Winv = sym(out.Rinv.transpose() * out.Rinv);
  return out.Winv.allFinite();
}

}  // namespace sdp_detail

inline SdpSolution solve(const SdpProblem& prob, const SdpOptions& opts = {}) {
  using namespace sdp_detail;
  prob.validate();
  const int nv = prob.num_vars;
  const VectorXd& c = prob.objective;
  std::vector<WorkBlock> blocks = presolve(prob);
  const std::size_t nb = blocks.size();

  SdpSolution sol;
  sol.y = VectorXd::Zero(nv);

  int N = 0;
  double normF0 = 0.0;
  for (const auto& b : blocks) {
    N += b.dim;
    normF0 += b.F0.squaredNorm();
  }
  normF0 = std::sqrt(normF0);
  const double normC = c.norm();

  // variables absent from every block: bounded only if their cost is zero
  std::vector<int> appears(nv, 0);
  for (const auto& b : blocks)
    for (int v : b.vars) appears[v] = 1;
  for (int i = 0; i < nv; ++i)
    if (!appears[i] && c[i] != 0.0) {
      sol.status = SdpStatus::Unbounded;
      sol.message = "variable " + std::to_string(i) + " has cost but no constraint";
      return sol;
    }

  if (nb == 0) {
    sol.status = SdpStatus::Optimal;
    sol.objective = sol.dual_objective = 0.0;
    sol.gap = 0.0;
    sol.primal_infeasibility = sol.dual_infeasibility = 0.0;
    for (std::size_t b = 0; b < prob.blocks.size(); ++b) {
      sol.block_min_eig.push_back(prob.blocks[b].dim() ? lambda_min_symmetric(prob.blocks[b].F0) : 0.0);
      sol.Z.push_back(MatrixXd::Zero(prob.blocks[b].dim(), prob.blocks[b].dim()));
    }
    return sol;
  }

  std::vector<MatrixXd> S(nb), Z(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& blk = blocks[b];
    const double d = blk.dim;
    double zs = std::max({10.0, std::sqrt(d), blk.F0.norm()});
    double zz = std::max(10.0, std::sqrt(d));
    for (std::size_t t = 0; t < blk.vars.size(); ++t) {
      const double fn = blk.F[t].norm();
      zs = std::max(zs, fn);
      zz = std::max(zz, d * (1.0 + std::abs(c[blk.vars[t]])) / (1.0 + fn));
    }
    S[b] = zs * MatrixXd::Identity(blk.dim, blk.dim);
    Z[b] = zz * MatrixXd::Identity(blk.dim, blk.dim);
  }
  VectorXd& y = sol.y;

  std::vector<MatrixXd> Rd(nb);
  std::vector<Scaling> sc(nb);
  VectorXd r(nv);

  auto apply_F = [&](std::size_t b, const VectorXd& v) {
    MatrixXd out = MatrixXd::Zero(blocks[b].dim, blocks[b].dim);
    for (std::size_t t = 0; t < blocks[b].vars.size(); ++t) {
      const double s = v[blocks[b].vars[t]];
      if (s != 0.0) out += s * blocks[b].F[t];
    }
    return out;
  };

  auto finish = [&](SdpStatus st, int iter, std::string msg) {
    sol.status = st;
    sol.iterations = iter;
    sol.message = std::move(msg);
    sol.objective = c.dot(y);
    double dobj = 0.0;
    for (std::size_t b = 0; b < nb; ++b) dobj -= frob_inner(blocks[b].F0, Z[b]);
    sol.dual_objective = dobj;
    sol.block_min_eig.clear();
    sol.Z.clear();
    for (std::size_t b = 0; b < prob.blocks.size(); ++b) {
      const int d = prob.blocks[b].dim();
      sol.Z.push_back(MatrixXd::Zero(d, d));
      sol.block_min_eig.push_back(d ? lambda_min_symmetric(prob.block_value(b, y)) : 0.0);
    }
    for (std::size_t w = 0; w < nb; ++w) {
      const auto& keep = blocks[w].keep;
      MatrixXd& Zfull = sol.Z[blocks[w].source];
      for (int a = 0; a < blocks[w].dim; ++a)
        for (int bb = 0; bb < blocks[w].dim; ++bb) Zfull(keep[a], keep[bb]) = Z[w](a, bb);
    }
    return sol;
  };

  const double tau_max = 0.98;
  int stall = 0;
  // last iterate that was primal feasible with a closed gap, used if the dual residual stagnates
  struct Snapshot {
    int iter = -1;
    VectorXd y;
    std::vector<MatrixXd> S, Z;
    double rel_d = 0.0;
  } near;
  std::vector<double> rel_d_hist;
  auto fail = [&](SdpStatus st, int iter, std::string msg) {
    if (near.iter >= 0) {
      y = near.y;
      S = near.S;
      Z = near.Z;
      sol.dual_infeasibility = near.rel_d;
      return finish(SdpStatus::NearOptimal, iter, "dual residual stalled at " + std::to_string(near.rel_d) + " (" + msg + ")");
    }
    return finish(st, iter, std::move(msg));
  };
  for (int iter = 0;; ++iter) {
    // residuals
    double rp2 = 0.0, gap = 0.0, dobj = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      Rd[b] = blocks[b].F0 + apply_F(b, y) - S[b];
      rp2 += Rd[b].squaredNorm();
      gap += frob_inner(S[b], Z[b]);
      dobj -= frob_inner(blocks[b].F0, Z[b]);
    }
    VectorXd AZ = VectorXd::Zero(nv);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t t = 0; t < blocks[b].vars.size(); ++t)
        AZ[blocks[b].vars[t]] += frob_inner(blocks[b].F[t], Z[b]);
    r = c - AZ;
    const double pobj = c.dot(y);
    const double rel_p = std::sqrt(rp2) / (1.0 + normF0);
    const double rel_d = r.norm() / (1.0 + normC);
    const double rel_gap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.gap = gap;
    sol.min_gap_seen = std::min(sol.min_gap_seen, gap);
    sol.primal_infeasibility = rel_p;
    sol.dual_infeasibility = rel_d;

    if (opts.log)
      *opts.log << "iter " << iter << " pobj " << pobj << " dobj " << dobj << " rel_p " << rel_p << " rel_d " << rel_d
                << " gap " << gap << " |AZ|/dobj " << AZ.norm() / std::abs(dobj) << '\n';
    if (rel_p <= opts.feas_tol && rel_d <= opts.feas_tol && rel_gap <= opts.gap_tol)
      return finish(SdpStatus::Optimal, iter, "converged");
    rel_d_hist.push_back(rel_d);
    if (rel_p <= opts.feas_tol && rel_gap <= opts.gap_tol && rel_d <= opts.near_tol) {
      near.iter = iter;
      near.y = y;
      near.S = S;
      near.Z = Z;
      near.rel_d = rel_d;
      const std::size_t h = rel_d_hist.size();
      if (h > 5 && rel_d > 0.9 * rel_d_hist[h - 6]) return fail(SdpStatus::NumericalFailure, iter, "no progress");
    }

    // Z/dobj approaches a certificate that {y : F(y) >= 0} is empty
    if (dobj > 0.0 && AZ.norm() <= opts.infeas_tol * dobj && rel_p > opts.feas_tol)
      return finish(SdpStatus::Infeasible, iter, "dual ray found");
    // y/(-c'y) approaches a direction of unbounded descent
    if (pobj < 0.0 && rel_p <= opts.feas_tol && -pobj * opts.infeas_tol > 1.0) {
      double worst = 0.0;
      for (std::size_t b = 0; b < nb; ++b)
        worst = std::min(worst, lambda_min_symmetric(apply_F(b, y)) / -pobj);
      if (worst >= -opts.infeas_tol) return finish(SdpStatus::Unbounded, iter, "primal ray found");
    }

    if (iter >= opts.max_iters) return fail(SdpStatus::IterationLimit, iter, "iteration limit");

    // Nesterov-Todd scaling
    for (std::size_t b = 0; b < nb; ++b)
      if (!compute_scaling(S[b], Z[b], sc[b])) return fail(SdpStatus::NumericalFailure, iter, "lost positive definiteness");

    // Schur complement H_ij = sum_b <F_i, W^-1 F_j W^-1>
    MatrixXd H = MatrixXd::Zero(nv, nv);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& blk = blocks[b];
      const MatrixXd& Wi = sc[b].Winv;
      const std::size_t k = blk.vars.size();
      if (blk.dim == 1) {
        const double w2 = Wi(0, 0) * Wi(0, 0);
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t bb = 0; bb < k; ++bb) H(blk.vars[a], blk.vars[bb]) += w2 * blk.F[a](0, 0) * blk.F[bb](0, 0);
        continue;
      }
      std::vector<MatrixXd> G(k);
      for (std::size_t t = 0; t < k; ++t) G[t] = Wi * blk.F[t] * Wi;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t bb = a; bb < k; ++bb) {
          const double h = frob_inner(blk.F[a], G[bb]);
          H(blk.vars[a], blk.vars[bb]) += h;
          if (a != bb) H(blk.vars[bb], blk.vars[a]) += h;
        }
    }
    for (int i = 0; i < nv; ++i)
      if (!appears[i]) H(i, i) = 1.0;
    const double hscale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<MatrixXd> chol;
    double reg = opts.regularization;
    for (;;) {
      chol.compute(H + reg * hscale * MatrixXd::Identity(nv, nv));
      if (chol.info() == Eigen::Success) break;
      reg = std::max(reg * 100.0, 1e-14);
      if (reg > 1e-4) return fail(SdpStatus::NumericalFailure, iter, "singular Schur complement");
    }

    // direction for complementarity right-hand side Rc (scaled-space G already mapped back)
    std::vector<MatrixXd> dS(nb), dZ(nb);
    VectorXd dy(nv);
    auto direction = [&](const std::vector<MatrixXd>& Rc) {
      VectorXd rhs = -r;
      for (std::size_t b = 0; b < nb; ++b) {
        const MatrixXd T = Rc[b] - sc[b].Winv * Rd[b] * sc[b].Winv;
        for (std::size_t t = 0; t < blocks[b].vars.size(); ++t) rhs[blocks[b].vars[t]] += frob_inner(blocks[b].F[t], T);
      }
      for (int i = 0; i < nv; ++i)
        if (!appears[i]) rhs[i] = 0.0;
      dy = chol.solve(rhs);
      for (int pass = 0; pass < 2; ++pass) dy += chol.solve(rhs - H * dy);
      for (std::size_t b = 0; b < nb; ++b) {
        dS[b] = sym(Rd[b] + apply_F(b, dy));
        dZ[b] = sym(Rc[b] - sc[b].Winv * dS[b] * sc[b].Winv);
      }
    };
    auto steps = [&](double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < nb; ++b) {
        Eigen::LLT<MatrixXd> cs(S[b]), cz(Z[b]);
        ap = std::min(ap, max_step(cs, dS[b]));
        ad = std::min(ad, max_step(cz, dZ[b]));
      }
    };

    const double mu = gap / N;
    std::vector<MatrixXd> Rc(nb);
    for (std::size_t b = 0; b < nb; ++b) Rc[b] = -Z[b];
    direction(Rc);
    double ap, ad;
    steps(ap, ad);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double mu_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b) mu_aff += frob_inner(S[b] + ap * dS[b], Z[b] + ad * dZ[b]);
    mu_aff /= N;
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

    // corrector: Lambda o (dS~ + dZ~) = sigma mu I - Lambda^2 - dS~_a o dZ~_a
    for (std::size_t b = 0; b < nb; ++b) {
      const Scaling& s = sc[b];
      const MatrixXd dSt = s.Rinv * dS[b] * s.Rinv.transpose();
      const MatrixXd dZt = s.R.transpose() * dZ[b] * s.R;
      MatrixXd rhs = -sym(dSt * dZt);
      rhs.diagonal().array() += sigma * mu;
      rhs.diagonal() -= s.lambda.cwiseProduct(s.lambda);
      MatrixXd G(rhs.rows(), rhs.cols());
      for (Eigen::Index i = 0; i < G.rows(); ++i)
        for (Eigen::Index j = 0; j < G.cols(); ++j) G(i, j) = 2.0 * rhs(i, j) / (s.lambda[i] + s.lambda[j]);
      Rc[b] = sym(s.Rinv.transpose() * G * s.Rinv);
    }
    direction(Rc);
    steps(ap, ad);
    const double tau = std::min(tau_max, 0.9 + 0.09 * std::min(ap, ad));
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    if (!dy.allFinite()) return fail(SdpStatus::NumericalFailure, iter, "non-finite search direction");

    y += ap * dy;
    for (std::size_t b = 0; b < nb; ++b) {
      S[b] = sym(S[b] + ap * dS[b]);
      Z[b] = sym(Z[b] + ad * dZ[b]);
    }
    stall = (std::max(ap, ad) < 1e-9) ? stall + 1 : 0;
    if (stall >= 5) return fail(SdpStatus::NumericalFailure, iter + 1, "step length collapsed");
  }
}

struct SdpVerification {
  std::vector<double> min_eig;
  std::vector<bool> violated;
  bool ok = true;
};

/// Recompute lambda_min(F_b(y)) from scratch for every block and flag those below -margin.
inline SdpVerification verify_solution(const SdpProblem& prob, const VectorXd& y, double margin) {
  if (y.size() != prob.num_vars) throw DimensionError("solution length differs from num_vars");
  SdpVerification v;
  for (std::size_t b = 0; b < prob.blocks.size(); ++b) {
    const double l = prob.blocks[b].dim() ? lambda_min_symmetric(prob.block_value(b, y)) : 0.0;
    v.min_eig.push_back(l);
    v.violated.push_back(l < -margin);
    if (l < -margin) v.ok = false;
  }
  return v;
}

inline SdpVerification verify_solution(const SdpProblem& prob, const SdpSolution& sol, double margin) {
  return verify_solution(prob, sol.y, margin);
}

/// Plain-text dump of all blocks and matrices, for cross-checking with other solvers.
inline nlohmann::json dump_problem(const SdpProblem& prob) {
  nlohmann::json j;
  j["num_vars"] = prob.num_vars;
  j["objective"] = json_detail::vector_to_json(prob.objective);
  j["blocks"] = nlohmann::json::array();
  for (const auto& blk : prob.blocks) {
    nlohmann::json jb;
    jb["dim"] = blk.dim();
    jb["F0"] = json_detail::matrix_to_json(blk.F0);
    nlohmann::json fs = nlohmann::json::object();
    for (std::size_t i = 0; i < blk.F.size(); ++i)
      if (blk.F[i].cwiseAbs().maxCoeff() != 0.0) fs[std::to_string(i + 1)] = json_detail::matrix_to_json(blk.F[i]);
    jb["F"] = std::move(fs);
    j["blocks"].push_back(std::move(jb));
  }
  return j;
}

}  // namespace roaqc
