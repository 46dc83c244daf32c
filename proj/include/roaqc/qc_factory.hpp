#pragma once

// Local quadratic constraints [x; w]' M [x; w] >= 0 (w = z(x), x in the ellipsoid)
// for quadratic nonlinearities:
//   CSQC          alpha^2 Q E^-1 Q        | -b b'
//   Rank-2 Valley alpha^2 W               | -b b'      (Q = (c1 c2' + c2 c1')/2)
//   Rank-3 Valley alpha^2 (W + g c3 c3')  | -b b'      (Q = (c1 c2' + c2 c1')/2 + c3 c3')
//   Cross-Product alpha^2 W               | -/+ S_pq   (w_p w_q = x_i^2 x_j x_k, j != k)
//   Same-index    alpha^2 W               | -S_pq / 2  (w_p w_q = x_i^2 x_j^2)

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "roaqc/ellipsoid.hpp"
#include "roaqc/error.hpp"
#include "roaqc/monomials.hpp"

namespace roaqc {

enum class QcKind { CSQC, Rank2Valley, Rank3Valley, CrossProduct, CrossProductSameIndex };

inline const char* to_string(QcKind k) {
  switch (k) {
    case QcKind::CSQC: return "CSQC";
    case QcKind::Rank2Valley: return "Rank2Valley";
    case QcKind::Rank3Valley: return "Rank3Valley";
    case QcKind::CrossProduct: return "CrossProduct";
    case QcKind::CrossProductSameIndex: return "CrossProductSameIndex";
  }
  return "?";
}

inline QcKind qc_kind_from_string(const std::string& s) {
  for (QcKind k : {QcKind::CSQC, QcKind::Rank2Valley, QcKind::Rank3Valley, QcKind::CrossProduct,
                   QcKind::CrossProductSameIndex})
    if (s == to_string(k)) return k;
  throw ParseError("unknown QC kind: " + s);
}

struct QcMatrix {
  MatrixXd M;  // (n+m) x (n+m), symmetric
  QcKind kind = QcKind::CSQC;
  std::string source;
  std::string variant;

  /// [x; z(x)]' M [x; z(x)]
  double evaluate(const VectorXd& x, const MonomialBasis& basis) const {
    VectorXd v(M.rows());
    v << x, basis.evaluate(x);
    return v.dot(M * v);
  }
};

/// Block-diagonal QC matrix diag(xblock, wblock).
inline MatrixXd lift_qc(const MatrixXd& xblock, const MatrixXd& wblock) {
  const auto n = xblock.rows(), m = wblock.rows();
  MatrixXd M = MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = 0.5 * (xblock + xblock.transpose());
  M.bottomRightCorner(m, m) = 0.5 * (wblock + wblock.transpose());
  return M;
}

struct RankSignature {
  int rank = 0;
  int n_pos = 0;
  int n_neg = 0;
  VectorXd eigvals;  // ascending
  MatrixXd eigvecs;  // columns, orthonormal
};

/// Default relative threshold below which an eigenvalue counts as zero.
inline constexpr double kRankTolerance = 1e-9;

inline RankSignature classify(const MatrixXd& Q, double tol = kRankTolerance) {
  if (Q.rows() != Q.cols()) throw DimensionError("classify needs a square matrix");
  RankSignature sig;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Q + Q.transpose()));
  sig.eigvals = es.eigenvalues();
  sig.eigvecs = es.eigenvectors();
  const double big = sig.eigvals.cwiseAbs().maxCoeff();
  if (big == 0.0) return sig;
  for (Eigen::Index i = 0; i < sig.eigvals.size(); ++i) {
    if (std::abs(sig.eigvals[i]) <= tol * big) continue;
    (sig.eigvals[i] > 0 ? sig.n_pos : sig.n_neg)++;
  }
  sig.rank = sig.n_pos + sig.n_neg;
  return sig;
}

struct ValleyFactors {
  VectorXd c1;
  VectorXd c2;
  std::optional<VectorXd> c3;
  std::string grouping;
  /// The factors reconstruct -Q rather than Q (one positive, two negative eigenvalues).
  bool negated = false;

  /// (c1 c2' + c2 c1')/2 + c3 c3'
  MatrixXd reconstruct() const {
    MatrixXd R = 0.5 * (c1 * c2.transpose() + c2 * c1.transpose());
    if (c3) R += (*c3) * c3->transpose();
    return R;
  }
};

namespace qc_detail {

// -1, 0, +1 for lexicographic comparison with an absolute tolerance.
inline int lex_compare(const VectorXd& a, const VectorXd& b, double tol) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i] + tol) return 1;
    if (a[i] < b[i] - tol) return -1;
  }
  return 0;
}

// Among (c1,c2), (c2,c1), (-c1,-c2), (-c2,-c1), all of which give the same
// symmetric product, keep the lexicographically largest. The leading entry of c1
// then comes out positive.
inline void canonicalize_pair(VectorXd& c1, VectorXd& c2) {
  const double tol = 1e-12 * std::max({1.0, c1.cwiseAbs().maxCoeff(), c2.cwiseAbs().maxCoeff()});
  std::array<std::pair<VectorXd, VectorXd>, 4> cand{{{c1, c2}, {c2, c1}, {-c1, -c2}, {-c2, -c1}}};
  std::size_t best = 0;
  for (std::size_t k = 1; k < cand.size(); ++k) {
    int c = lex_compare(cand[k].first, cand[best].first, tol);
    if (c == 0) c = lex_compare(cand[k].second, cand[best].second, tol);
    if (c > 0) best = k;
  }
  c1 = cand[best].first;
  c2 = cand[best].second;
}

inline void canonicalize_sign(VectorXd& c) {
  const double tol = 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (std::abs(c[i]) <= tol) continue;
    if (c[i] < 0) c = -c;
    return;
  }
}

struct Eigenpair {
  double value;
  VectorXd vec;
};

inline std::vector<Eigenpair> nonzero_pairs(const RankSignature& sig, double tol, bool positive) {
  const double big = sig.eigvals.cwiseAbs().maxCoeff();
  std::vector<Eigenpair> out;
  for (Eigen::Index i = 0; i < sig.eigvals.size(); ++i) {
    const double l = sig.eigvals[i];
    if (std::abs(l) <= tol * big) continue;
    if ((l > 0) == positive) out.push_back({l, sig.eigvecs.col(i)});
  }
  // descending magnitude, solver order kept on ties
  std::stable_sort(out.begin(), out.end(),
                   [](const Eigenpair& a, const Eigenpair& b) { return std::abs(a.value) > std::abs(b.value); });
  return out;
}

inline std::string signature_text(const RankSignature& s) {
  return "rank " + std::to_string(s.rank) + " (" + std::to_string(s.n_pos) + " positive, " +
         std::to_string(s.n_neg) + " negative)";
}

inline ValleyFactors pair_factors(const Eigenpair& pos, const Eigenpair& neg) {
  ValleyFactors f;
  const VectorXd a = std::sqrt(pos.value) * pos.vec;
  const VectorXd b = std::sqrt(std::abs(neg.value)) * neg.vec;
  f.c1 = a + b;
  f.c2 = a - b;
  canonicalize_pair(f.c1, f.c2);
  return f;
}

inline std::string describe(const QuadForm& f) {
  const MonomialBasis basis(f.dim());
  std::ostringstream os;
  bool first = true;
  for (int k = 0; k < basis.size(); ++k) {
    const double c = f.b[k];
    if (c == 0.0) continue;
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << '-';
    if (std::abs(c) != 1.0) os << std::abs(c) << '*';
    os << basis.label(k);
    first = false;
  }
  return first ? std::string("0") : os.str();
}

}  // namespace qc_detail

/// Q = (c1 c2' + c2 c1')/2 for Q of rank 2 with one positive and one negative eigenvalue.
inline ValleyFactors rank2_decompose(const MatrixXd& Q, double tol = kRankTolerance) {
  const RankSignature sig = classify(Q, tol);
  if (sig.rank != 2 || sig.n_pos != 1 || sig.n_neg != 1)
    throw SignatureError("rank2_decompose needs rank 2 with one positive and one negative eigenvalue, got " +
                         qc_detail::signature_text(sig));
  const auto pos = qc_detail::nonzero_pairs(sig, tol, true);
  const auto neg = qc_detail::nonzero_pairs(sig, tol, false);
  ValleyFactors f = qc_detail::pair_factors(pos[0], neg[0]);
  f.grouping = "rank2";
  return f;
}

/// Both rank-3 splittings Q = (c1 c2' + c2 c1')/2 + c3 c3'. Grouping A pairs the larger
/// positive eigenvalue with the negative one; grouping B pairs the smaller. Matrices with
/// one positive and two negative eigenvalues are decomposed as -Q and flagged `negated`.
inline std::array<ValleyFactors, 2> rank3_decompose(const MatrixXd& Q, double tol = kRankTolerance) {
  RankSignature sig = classify(Q, tol);
  bool negated = false;
  if (sig.rank == 3 && sig.n_pos == 1 && sig.n_neg == 2) {
    sig = classify(-Q, tol);
    negated = true;
  }
  if (sig.rank != 3 || sig.n_pos != 2 || sig.n_neg != 1)
    throw SignatureError("rank3_decompose needs rank 3 with mixed signature, got " + qc_detail::signature_text(sig));
  const auto pos = qc_detail::nonzero_pairs(sig, tol, true);
  const auto neg = qc_detail::nonzero_pairs(sig, tol, false);
  std::array<ValleyFactors, 2> out;
  for (int g = 0; g < 2; ++g) {
    ValleyFactors f = qc_detail::pair_factors(pos[g], neg[0]);
    VectorXd c3 = std::sqrt(pos[1 - g].value) * pos[1 - g].vec;
    qc_detail::canonicalize_sign(c3);
    f.c3 = std::move(c3);
    f.grouping = g == 0 ? "A" : "B";
    f.negated = negated;
    out[g] = std::move(f);
  }
  return out;
}

/// The two x-blocks alpha^2 (W + gamma c3 c3') for one set of valley factors.
/// With no c3 this is the rank-2 formula.
inline std::array<std::pair<MatrixXd, std::string>, 2> valley_x_blocks(const ValleyFactors& f,
                                                                        const Ellipsoid& ell) {
  const double a2 = ell.alpha() * ell.alpha();
  const MatrixXd& Ei = ell.inv();
  MatrixXd W1 = a2 * f.c2.dot(Ei * f.c2) * f.c1 * f.c1.transpose();
  MatrixXd W2 = a2 * f.c1.dot(Ei * f.c1) * f.c2 * f.c2.transpose();
  if (f.c3 && f.c3->squaredNorm() > 0.0) {
    const VectorXd& c3 = *f.c3;
    const MatrixXd pair_part = f.c1 * f.c2.transpose() + f.c2 * f.c1.transpose();
    // alpha^2 gamma = max over the ellipsoid of x'(2Q - c3 c3')x
    const double a2_gamma = max_quadform(pair_part + c3 * c3.transpose(), ell);
    const MatrixXd extra = a2_gamma * c3 * c3.transpose();
    W1 += extra;
    W2 += extra;
  }
  return {{{std::move(W1), "W=(c2'E^-1c2)c1c1'"}, {std::move(W2), "W=(c1'E^-1c1)c2c2'"}}};
}

inline QcMatrix cs_qc(const QuadForm& f, const Ellipsoid& ell, std::string source = {}) {
  ell.check_dim(f.dim());
  QcMatrix qc;
  const double a2 = ell.alpha() * ell.alpha();
  qc.M = lift_qc(a2 * f.Q * ell.inv() * f.Q, -f.b * f.b.transpose());
  qc.kind = QcKind::CSQC;
  qc.source = source.empty() ? qc_detail::describe(f) : std::move(source);
  qc.variant = "cauchy-schwarz";
  return qc;
}

inline std::vector<QcMatrix> valley_qcs_from_factors(const ValleyFactors& fac, const QuadForm& f,
                                                      const Ellipsoid& ell, QcKind kind, const std::string& source) {
  std::vector<QcMatrix> out;
  const MatrixXd wblock = -f.b * f.b.transpose();
  for (auto& [x, label] : valley_x_blocks(fac, ell)) {
    QcMatrix qc;
    qc.M = lift_qc(x, wblock);
    qc.kind = kind;
    qc.source = source;
    qc.variant = (fac.grouping.empty() ? "" : "grouping " + fac.grouping + ", ") + label +
                 (fac.negated ? ", negated" : "");
    out.push_back(std::move(qc));
  }
  return out;
}

inline std::vector<QcMatrix> rank2_valley_qcs(const QuadForm& f, const Ellipsoid& ell, std::string source = {}) {
  ell.check_dim(f.dim());
  const ValleyFactors fac = rank2_decompose(f.Q);
  return valley_qcs_from_factors(fac, f, ell, QcKind::Rank2Valley,
                                 source.empty() ? qc_detail::describe(f) : source);
}

inline std::vector<QcMatrix> rank3_valley_qcs(const QuadForm& f, const Ellipsoid& ell, std::string source = {}) {
  ell.check_dim(f.dim());
  if (source.empty()) source = qc_detail::describe(f);
  std::vector<QcMatrix> out;
  for (const ValleyFactors& fac : rank3_decompose(f.Q)) {
    auto qcs = valley_qcs_from_factors(fac, f, ell, QcKind::Rank3Valley, source);
    out.insert(out.end(), qcs.begin(), qcs.end());
  }
  return out;
}

/// Monomial pair whose product is x_i^2 x_j x_k with j < k (i may equal j or k).
struct CrossPair {
  int p, q;
  int i, j, k;
};

/// Monomial pair whose product is x_i^2 x_j^2 with i < j.
struct SameIndexPair {
  int p, q;
  int i, j;
};

namespace qc_detail {

inline Eigen::VectorXi product_exponents(int p, int q, const MonomialBasis& basis) {
  Eigen::VectorXi e = Eigen::VectorXi::Zero(basis.dim());
  for (int k : {p, q}) {
    auto [a, b] = basis.pair(k);
    e[a]++;
    e[b]++;
  }
  return e;
}

inline std::string pair_label(int p, int q, const MonomialBasis& basis) {
  return "(" + basis.label(p) + ")*(" + basis.label(q) + ")";
}

}  // namespace qc_detail

inline std::vector<CrossPair> enumerate_cross_pairs(const MonomialBasis& basis) {
  std::vector<CrossPair> out;
  const int n = basis.dim();
  for (int p = 0; p < basis.size(); ++p)
    for (int q = p + 1; q < basis.size(); ++q) {
      const Eigen::VectorXi e = qc_detail::product_exponents(p, q, basis);
      for (int i = 0; i < n; ++i) {
        if (e[i] < 2) continue;
        Eigen::VectorXi rest = e;
        rest[i] -= 2;
        std::vector<int> singles;
        bool ok = true;
        for (int t = 0; t < n; ++t) {
          if (rest[t] == 1) singles.push_back(t);
          else if (rest[t] != 0) ok = false;
        }
        if (ok && singles.size() == 2) out.push_back({p, q, i, singles[0], singles[1]});
      }
    }
  return out;
}

inline std::vector<SameIndexPair> enumerate_same_index_pairs(const MonomialBasis& basis) {
  std::vector<SameIndexPair> out;
  const int n = basis.dim();
  for (int p = 0; p < basis.size(); ++p)
    for (int q = p + 1; q < basis.size(); ++q) {
      const Eigen::VectorXi e = qc_detail::product_exponents(p, q, basis);
      std::vector<int> twos;
      for (int t = 0; t < n; ++t)
        if (e[t] == 2) twos.push_back(t);
      if (twos.size() == 2) out.push_back({p, q, twos[0], twos[1]});
    }
  return out;
}

namespace qc_detail {

inline MatrixXd s_pq(int p, int q, int m) {
  MatrixXd S = MatrixXd::Zero(m, m);
  S(p, q) = 1.0;
  S(q, p) = 1.0;
  return S;
}

inline void check_cross_pair(const CrossPair& c, const MonomialBasis& basis) {
  const int n = basis.dim();
  if (c.p == c.q || c.p < 0 || c.q < 0 || c.p >= basis.size() || c.q >= basis.size())
    throw Error("cross pair needs two distinct monomials");
  if (c.j == c.k) throw Error("cross pair with j == k: use the same-index QCs");
  if (c.i < 0 || c.j < 0 || c.k < 0 || c.i >= n || c.j >= n || c.k >= n) throw DimensionError("cross pair index");
  Eigen::VectorXi want = Eigen::VectorXi::Zero(n);
  want[c.i] += 2;
  want[c.j]++;
  want[c.k]++;
  if (product_exponents(c.p, c.q, basis) != want) throw Error("monomial product does not match x_i^2 x_j x_k");
}

}  // namespace qc_detail

/// Four QCs bounding 2 w_p w_q between -x_i^2 (x_j - x_k)^2 and x_i^2 (x_j + x_k)^2.
/// Order: -S with d = e_j + e_k (two W choices), then +S with d = e_j - e_k.
inline std::vector<QcMatrix> cross_product_qcs(const CrossPair& pair, const Ellipsoid& ell,
                                                const MonomialBasis& basis) {
  qc_detail::check_cross_pair(pair, basis);
  ell.check_dim(basis.dim());
  const int n = basis.dim(), m = basis.size();
  const double a2 = ell.alpha() * ell.alpha();
  const MatrixXd& Ei = ell.inv();
  const VectorXd ei = VectorXd::Unit(n, pair.i);
  const MatrixXd S = qc_detail::s_pq(pair.p, pair.q, m);
  const std::string source = qc_detail::pair_label(pair.p, pair.q, basis) + " = x" + std::to_string(pair.i + 1) +
                             "^2*x" + std::to_string(pair.j + 1) + "*x" + std::to_string(pair.k + 1);
  std::vector<QcMatrix> out;
  for (int sign : {-1, +1}) {
    // -S pairs with d = e_j + e_k (upper bound), +S with d = e_j - e_k (lower bound)
    VectorXd d = VectorXd::Unit(n, pair.j) - sign * VectorXd::Unit(n, pair.k);
    const std::string s = sign < 0 ? "-S" : "+S";
    const std::string dl = sign < 0 ? "d=e_j+e_k" : "d=e_j-e_k";
    const std::array<std::pair<MatrixXd, std::string>, 2> ws{{
        {a2 * Ei(pair.i, pair.i) * d * d.transpose(), "W=(e_i'E^-1e_i)dd'"},
        {a2 * d.dot(Ei * d) * ei * ei.transpose(), "W=(d'E^-1d)e_ie_i'"},
    }};
    for (const auto& [x, wl] : ws) {
      QcMatrix qc;
      qc.M = lift_qc(x, sign * S);
      qc.kind = QcKind::CrossProduct;
      qc.source = source;
      qc.variant = s + ", " + dl + ", " + wl;
      out.push_back(std::move(qc));
    }
  }
  return out;
}

/// Two QCs bounding w_p w_q = x_i^2 x_j^2 from above.
inline std::vector<QcMatrix> same_index_cross_qcs(const SameIndexPair& pair, const Ellipsoid& ell,
                                                   const MonomialBasis& basis) {
  const int n = basis.dim(), m = basis.size();
  if (pair.p == pair.q) throw Error("same-index cross pair needs two distinct monomials");
  if (pair.p < 0 || pair.q < 0 || pair.p >= m || pair.q >= m || pair.i < 0 || pair.j < 0 || pair.i >= n ||
      pair.j >= n || pair.i == pair.j)
    throw Error("malformed same-index cross pair");
  Eigen::VectorXi want = Eigen::VectorXi::Zero(n);
  want[pair.i] = 2;
  want[pair.j] = 2;
  if (qc_detail::product_exponents(pair.p, pair.q, basis) != want)
    throw Error("monomial product does not match x_i^2 x_j^2");
  ell.check_dim(n);
  const double a2 = ell.alpha() * ell.alpha();
  const MatrixXd& Ei = ell.inv();
  const VectorXd ei = VectorXd::Unit(n, pair.i), ej = VectorXd::Unit(n, pair.j);
  const MatrixXd wblock = -0.5 * qc_detail::s_pq(pair.p, pair.q, m);
  const std::string source = qc_detail::pair_label(pair.p, pair.q, basis) + " = x" + std::to_string(pair.i + 1) +
                             "^2*x" + std::to_string(pair.j + 1) + "^2";
  std::vector<QcMatrix> out;
  const std::array<std::pair<MatrixXd, std::string>, 2> ws{{
      {a2 * Ei(pair.i, pair.i) * ej * ej.transpose(), "W=(e_i'E^-1e_i)e_je_j'"},
      {a2 * Ei(pair.j, pair.j) * ei * ei.transpose(), "W=(e_j'E^-1e_j)e_ie_i'"},
  }};
  for (const auto& [x, wl] : ws) {
    QcMatrix qc;
    qc.M = lift_qc(x, wblock);
    qc.kind = QcKind::CrossProductSameIndex;
    qc.source = source;
    qc.variant = "-S/2, " + wl;
    out.push_back(std::move(qc));
  }
  return out;
}

/// The older product bound on [x; phi1; phi2] with phi1 = w_p, phi2 = w_q:
/// diag(alpha^2 (E^-1)_ii c c', [0 -1; -1 0]), c = e_j + e_k, lifted to [x; w]
/// through [x; phi1; phi2] = T [x; w].
inline QcMatrix lifted_product_qc(const CrossPair& pair, const Ellipsoid& ell, const MonomialBasis& basis) {
  qc_detail::check_cross_pair(pair, basis);
  const int n = basis.dim(), m = basis.size();
  MatrixXd small = MatrixXd::Zero(n + 2, n + 2);
  const VectorXd c = VectorXd::Unit(n, pair.j) + VectorXd::Unit(n, pair.k);
  small.topLeftCorner(n, n) = ell.alpha() * ell.alpha() * ell.inv()(pair.i, pair.i) * c * c.transpose();
  small(n, n + 1) = -1.0;
  small(n + 1, n) = -1.0;
  MatrixXd T = MatrixXd::Zero(n + 2, n + m);
  T.topLeftCorner(n, n).setIdentity();
  T(n, n + pair.p) = 1.0;
  T(n + 1, n + pair.q) = 1.0;
  QcMatrix qc;
  qc.M = T.transpose() * small * T;
  qc.kind = QcKind::CrossProduct;
  qc.source = qc_detail::pair_label(pair.p, pair.q, basis);
  qc.variant = "lifted product bound";
  return qc;
}

/// Which QC families to include. The eight presets follow the comparison table:
/// set1 CSQC; set2 +Rank2; set3 +Rank3; set4 +Cross; set5 +Rank2+Rank3;
/// set6 +Rank2+Cross; set7 +Rank3+Cross; set8 everything.
struct QcRecipe {
  bool csqc = true;
  bool rank2 = false;
  bool rank3 = false;
  bool cross = false;

  static QcRecipe preset(int set) {
    switch (set) {
      case 1: return {true, false, false, false};
      case 2: return {true, true, false, false};
      case 3: return {true, false, true, false};
      case 4: return {true, false, false, true};
      case 5: return {true, true, true, false};
      case 6: return {true, true, false, true};
      case 7: return {true, false, true, true};
      case 8: return {true, true, true, true};
      default: throw ParseError("recipe preset must be set1..set8, got set" + std::to_string(set));
    }
  }

  /// "set1".."set8" or a comma list of csqc, rank2, rank3, cross.
  static QcRecipe parse(const std::string& text) {
    if (text.size() == 4 && text.rfind("set", 0) == 0 && std::isdigit(static_cast<unsigned char>(text[3])))
      return preset(text[3] - '0');
    QcRecipe r{false, false, false, false};
    std::stringstream ss(text);
    std::string item;
    bool any = false;
    while (std::getline(ss, item, ',')) {
      if (item == "csqc") r.csqc = true;
      else if (item == "rank2") r.rank2 = true;
      else if (item == "rank3") r.rank3 = true;
      else if (item == "cross") r.cross = true;
      else throw ParseError("unknown recipe item: '" + item + "'");
      any = true;
    }
    if (!any) throw ParseError("empty recipe");
    return r;
  }

  std::string name() const {
    for (int s = 1; s <= 8; ++s)
      if (preset(s) == *this) return "set" + std::to_string(s);
    std::string out;
    auto add = [&](bool on, const char* w) {
      if (!on) return;
      if (!out.empty()) out += ',';
      out += w;
    };
    add(csqc, "csqc");
    add(rank2, "rank2");
    add(rank3, "rank3");
    add(cross, "cross");
    return out;
  }

  /// True when every family of `o` is also in this recipe.
  bool includes(const QcRecipe& o) const {
    return (csqc || !o.csqc) && (rank2 || !o.rank2) && (rank3 || !o.rank3) && (cross || !o.cross);
  }

  bool operator==(const QcRecipe&) const = default;
};

struct QcSet {
  std::vector<QcMatrix> qcs;
  /// Row functions that received only the CSQC because their signature fits no valley family.
  std::vector<std::string> flagged;
  int duplicates_removed = 0;
};

/// CSQC on every monomial and row function b_i'w; Rank-2 Valley on the sign-indefinite
/// monomials and rank-2 indefinite rows; Rank-3 Valley on rank-3 mixed rows; Cross-Product
/// (with the same-index variant) on every eligible monomial pair. Identical matrices are dropped.
inline QcSet build_qc_set(const QuadraticSystem& sys, const Ellipsoid& ell, const QcRecipe& recipe) {
  const MonomialBasis& basis = sys.basis();
  ell.check_dim(sys.n());
  std::vector<QuadForm> monos;
  for (int k = 0; k < basis.size(); ++k) monos.push_back(QuadForm::monomial(k, basis));
  std::vector<std::pair<QuadForm, RankSignature>> rows;
  QcSet set;
  for (int i = 0; i < sys.n(); ++i) {
    QuadForm f = sys.row_function(i);
    if (f.b.cwiseAbs().maxCoeff() == 0.0) continue;
    RankSignature sig = classify(f.Q);
    rows.emplace_back(std::move(f), std::move(sig));
  }
  auto row_label = [&](std::size_t r) {
    return "b" + std::to_string(r + 1) + "'w = " + qc_detail::describe(rows[r].first);
  };

  std::vector<QcMatrix> all;
  auto push = [&](std::vector<QcMatrix> qcs) {
    for (auto& qc : qcs) all.push_back(std::move(qc));
  };
  if (recipe.csqc) {
    for (const auto& f : monos) all.push_back(cs_qc(f, ell));
    for (std::size_t r = 0; r < rows.size(); ++r) all.push_back(cs_qc(rows[r].first, ell, row_label(r)));
  }
  std::vector<std::size_t> row_rank2, row_rank3;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& sig = rows[r].second;
    if (sig.rank == 2 && sig.n_pos == 1 && sig.n_neg == 1) row_rank2.push_back(r);
    else if (sig.rank == 3 && sig.n_pos >= 1 && sig.n_neg >= 1) row_rank3.push_back(r);
    else
      set.flagged.push_back(row_label(r) + ": " + qc_detail::signature_text(sig));
  }
  if (recipe.rank2) {
    for (int k = 0; k < basis.size(); ++k) {
      auto [i, j] = basis.pair(k);
      if (i != j) push(rank2_valley_qcs(monos[k], ell, basis.label(k)));
    }
    for (std::size_t r : row_rank2) push(rank2_valley_qcs(rows[r].first, ell, row_label(r)));
  }
  if (recipe.rank3)
    for (std::size_t r : row_rank3) push(rank3_valley_qcs(rows[r].first, ell, row_label(r)));
  if (recipe.cross) {
    for (const auto& pair : enumerate_cross_pairs(basis)) push(cross_product_qcs(pair, ell, basis));
    for (const auto& pair : enumerate_same_index_pairs(basis)) push(same_index_cross_qcs(pair, ell, basis));
  }

  for (auto& qc : all) {
    const double scale = std::max(1.0, qc.M.cwiseAbs().maxCoeff());
    const bool dup = std::any_of(set.qcs.begin(), set.qcs.end(), [&](const QcMatrix& kept) {
      return (kept.M - qc.M).cwiseAbs().maxCoeff() <= 1e-12 * scale;
    });
    if (dup) {
      set.duplicates_removed++;
      continue;
    }
    set.qcs.push_back(std::move(qc));
  }
  return set;
}

struct QcValidation {
  double min_value = 0.0;
  VectorXd argmin;
  std::uint64_t seed = 0;
  int samples = 0;
};

/// Minimum of [x; z(x)]' M [x; z(x)] over N points of the ellipsoid: even samples uniform
/// in its interior, odd samples on its boundary. Deterministic in `seed`.
inline QcValidation validate_qc_sampled(const QcMatrix& qc, const Ellipsoid& ell, const MonomialBasis& basis, int N,
                                        std::uint64_t seed = 0x5eed) {
  if (N < 1) throw Error("validate_qc_sampled needs N >= 1");
  const int n = basis.dim();
  if (qc.M.rows() != n + basis.size()) throw DimensionError("QC matrix does not match the monomial basis");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  QcValidation rep;
  rep.seed = seed;
  rep.samples = N;
  rep.min_value = std::numeric_limits<double>::infinity();
  VectorXd u(n), v(n + basis.size()), w(basis.size());
  for (int s = 0; s < N; ++s) {
    for (int i = 0; i < n; ++i) u[i] = gauss(rng);
    double nu = u.norm();
    if (nu == 0.0) continue;
    double rad = (s % 2 == 0) ? std::pow(unif(rng), 1.0 / n) : 1.0;
    const VectorXd x = ell.alpha() * rad / nu * (ell.inv_sqrt() * u);
    basis.evaluate_into(x, w);
    v << x, w;
    const double val = v.dot(qc.M * v);
    if (val < rep.min_value) {
      rep.min_value = val;
      rep.argmin = x;
    }
  }
  return rep;
}

inline nlohmann::json qc_to_json(const QcMatrix& qc) {
  return {{"kind", to_string(qc.kind)},
          {"source", qc.source},
          {"variant", qc.variant},
          {"M", json_detail::matrix_to_json(qc.M)}};
}

inline QcMatrix qc_from_json(const nlohmann::json& j) {
  QcMatrix qc;
  qc.kind = qc_kind_from_string(j.at("kind").get<std::string>());
  qc.source = j.value("source", std::string{});
  qc.variant = j.value("variant", std::string{});
  qc.M = json_detail::matrix_from_json(j.at("M"), "M");
  return qc;
}

inline nlohmann::json qc_set_to_json(const std::vector<QcMatrix>& qcs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& qc : qcs) arr.push_back(qc_to_json(qc));
  return arr;
}

}  // namespace roaqc
