#pragma once

// Quadratic monomial basis, the two representations of a homogeneous quadratic
// function, and the quadratic system model xdot = A x + B z(x).

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "roaqc/error.hpp"

namespace roaqc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Number of quadratic monomials in n variables.
constexpr int monomial_count(int n) { return n * (n + 1) / 2; }

/// Ordered list of index pairs (i, j), i <= j, in lexicographic order:
/// x1^2, x1x2, ..., x1xn, x2^2, x2x3, ..., xn^2.
/// Indices are 0-based in the API; labels and files use 1-based names (x1, x2, ...).
class MonomialBasis {
 public:
  explicit MonomialBasis(int n) : n_(n) {
    if (n < 1) throw DimensionError("monomial basis needs n >= 1, got " + std::to_string(n));
    pairs_.reserve(monomial_count(n));
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) pairs_.emplace_back(i, j);
  }

  int dim() const { return n_; }
  int size() const { return static_cast<int>(pairs_.size()); }

  std::pair<int, int> pair(int k) const {
    if (k < 0 || k >= size()) throw DimensionError("monomial index out of range: " + std::to_string(k));
    return pairs_[k];
  }

  /// Position of x_i x_j in z(x). The order of i and j does not matter.
  int index(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_)
      throw DimensionError("state index out of range for n=" + std::to_string(n_));
    if (i > j) std::swap(i, j);
    // rows 0..i-1 contribute n, n-1, ..., n-i+1 entries
    return i * n_ - i * (i - 1) / 2 + (j - i);
  }

  VectorXd evaluate(const VectorXd& x) const {
    VectorXd w(size());
    evaluate_into(x, w);
    return w;
  }

  /// Allocation-free variant for inner loops; `w` must already have size().
  void evaluate_into(const VectorXd& x, VectorXd& w) const {
    if (x.size() != n_)
      throw DimensionError("state has length " + std::to_string(x.size()) + ", expected " + std::to_string(n_));
    int k = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) w[k++] = x[i] * x[j];
  }

  std::string label(int k) const {
    auto [i, j] = pair(k);
    if (i == j) return "x" + std::to_string(i + 1) + "^2";
    return "x" + std::to_string(i + 1) + "*x" + std::to_string(j + 1);
  }

  bool operator==(const MonomialBasis& o) const { return n_ == o.n_; }

 private:
  int n_;
  std::vector<std::pair<int, int>> pairs_;
};

/// Convenience wrapper matching the free-function form of the basis.
inline VectorXd eval_monomials(const MonomialBasis& basis, const VectorXd& x) { return basis.evaluate(x); }

/// phi(x) = x'Qx = b'z(x), both representations kept in sync.
struct QuadForm {
  MatrixXd Q;
  VectorXd b;
  /// Set when the input matrix was not symmetric and (Q + Q')/2 was used instead.
  bool symmetrized = false;

  int dim() const { return static_cast<int>(Q.rows()); }

  double operator()(const VectorXd& x) const { return x.dot(Q * x); }

  static QuadForm from_matrix(const MatrixXd& Q_in, const MonomialBasis& basis) {
    const int n = basis.dim();
    if (Q_in.rows() != n || Q_in.cols() != n)
      throw DimensionError("quadratic form matrix must be " + std::to_string(n) + "x" + std::to_string(n));
    QuadForm f;
    f.Q = 0.5 * (Q_in + Q_in.transpose());
    const double asym = (Q_in - Q_in.transpose()).cwiseAbs().maxCoeff();
    f.symmetrized = asym > 1e-14 * std::max(1.0, Q_in.cwiseAbs().maxCoeff());
    f.b.resize(basis.size());
    for (int k = 0; k < basis.size(); ++k) {
      auto [i, j] = basis.pair(k);
      f.b[k] = (i == j) ? f.Q(i, i) : 2.0 * f.Q(i, j);
    }
    return f;
  }

  static QuadForm from_coeffs(const VectorXd& b, const MonomialBasis& basis) {
    if (b.size() != basis.size())
      throw DimensionError("coefficient vector has length " + std::to_string(b.size()) + ", expected " +
                           std::to_string(basis.size()));
    QuadForm f;
    f.b = b;
    f.Q = MatrixXd::Zero(basis.dim(), basis.dim());
    for (int k = 0; k < basis.size(); ++k) {
      auto [i, j] = basis.pair(k);
      if (i == j) {
        f.Q(i, i) = b[k];
      } else {
        f.Q(i, j) = 0.5 * b[k];
        f.Q(j, i) = 0.5 * b[k];
      }
    }
    return f;
  }

  /// The single monomial z_k(x) as a quadratic form.
  static QuadForm monomial(int k, const MonomialBasis& basis) {
    return from_coeffs(VectorXd::Unit(basis.size(), k), basis);
  }
};

inline QuadForm quadform_from_matrix(const MatrixXd& Q, const MonomialBasis& basis) {
  return QuadForm::from_matrix(Q, basis);
}
inline QuadForm quadform_from_coeffs(const VectorXd& b, const MonomialBasis& basis) {
  return QuadForm::from_coeffs(b, basis);
}

/// xdot = A x + B w, w = z(x). This is also the Lur'e split: a linear block fed back through z.
class QuadraticSystem {
 public:
  QuadraticSystem(MatrixXd A, MatrixXd B, std::string name = {})
      : name_(std::move(name)), A_(std::move(A)), B_(std::move(B)), basis_(checked_dim(A_)) {
    const int n = basis_.dim();
    if (B_.rows() != n || B_.cols() != basis_.size())
      throw DimensionError("B must be " + std::to_string(n) + "x" + std::to_string(basis_.size()) + ", got " +
                           std::to_string(B_.rows()) + "x" + std::to_string(B_.cols()));
    if (!A_.allFinite() || !B_.allFinite()) throw ParseError("system matrices contain non-finite entries");
    Eigen::EigenSolver<MatrixXd> es(A_, false);
    const auto ev = es.eigenvalues();
    if ((ev.real().array() >= 0.0).any()) {
      std::ostringstream os;
      os << "A is not Hurwitz; eigenvalues:";
      for (int i = 0; i < ev.size(); ++i) os << ' ' << ev[i].real() << (ev[i].imag() >= 0 ? "+" : "") << ev[i].imag() << 'i';
      throw NonHurwitzError(os.str());
    }
  }

  const std::string& name() const { return name_; }
  const MatrixXd& A() const { return A_; }
  const MatrixXd& B() const { return B_; }
  const MonomialBasis& basis() const { return basis_; }
  int n() const { return basis_.dim(); }
  int m() const { return basis_.size(); }

  /// Row function b_i'w = (B z(x))_i as a quadratic form.
  QuadForm row_function(int i) const { return QuadForm::from_coeffs(B_.row(i).transpose(), basis_); }

 private:
  static int checked_dim(const MatrixXd& A) {
    if (A.rows() != A.cols() || A.rows() < 1) throw DimensionError("A must be square and nonempty");
    return static_cast<int>(A.rows());
  }

  std::string name_;
  MatrixXd A_;
  MatrixXd B_;
  MonomialBasis basis_;
};

namespace json_detail {

inline MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  if (!j[0].is_array()) throw ParseError(what + " must be an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw DimensionError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw ParseError(what + ": non-numeric entry");
      M(r, c) = row[c].get<double>();
    }
  }
  return M;
}

inline nlohmann::json matrix_to_json(const MatrixXd& M) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

inline VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " must be an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

}  // namespace json_detail

/// Builds a system from {"n": int, "A": [[...]], "B": [[...]], "name": optional}.
/// Columns of B follow the monomial ordering of MonomialBasis.
inline QuadraticSystem load_system(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("system description must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "n" && key != "A" && key != "B" && key != "name")
      throw ParseError("unknown key in system description: " + key);
  if (!doc.contains("n") || !doc["n"].is_number_integer()) throw ParseError("system description needs integer 'n'");
  if (!doc.contains("A") || !doc.contains("B")) throw ParseError("system description needs 'A' and 'B'");
  const int n = doc["n"].get<int>();
  if (n < 1) throw DimensionError("'n' must be positive");
  MatrixXd A = json_detail::matrix_from_json(doc["A"], "A");
  MatrixXd B = json_detail::matrix_from_json(doc["B"], "B");
  if (A.rows() != n || A.cols() != n) throw DimensionError("A must be n x n with n=" + std::to_string(n));
  if (B.rows() != n || B.cols() != monomial_count(n))
    throw DimensionError("B must be n x n(n+1)/2 = " + std::to_string(n) + "x" + std::to_string(monomial_count(n)));
  std::string name = doc.value("name", std::string{});
  return QuadraticSystem(std::move(A), std::move(B), std::move(name));
}

inline QuadraticSystem load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open system file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed system file " + path + ": " + e.what());
  }
  return load_system(doc);
}

inline nlohmann::json system_to_json(const QuadraticSystem& sys) {
  nlohmann::json j;
  j["name"] = sys.name();
  j["n"] = sys.n();
  j["A"] = json_detail::matrix_to_json(sys.A());
  j["B"] = json_detail::matrix_to_json(sys.B());
  return j;
}

}  // namespace roaqc
