#pragma once

// JSON forms of certificates and sweep reports, and re-verification of a stored certificate.

#include <nlohmann/json.hpp>

#include <fstream>
#include <string>

#include "roaqc/roa.hpp"

namespace roaqc {

inline nlohmann::json margins_to_json(const CertificateMargins& m) {
  return {{"lmi_max_eig", m.lmi_max_eig},
          {"lmi_scale", m.lmi_scale},
          {"lower_min_eig", m.lower_min_eig},
          {"upper_min_eig", m.upper_min_eig},
          {"xi_min", m.xi_min}};
}

inline nlohmann::json certificate_to_json(const QuadraticSystem& sys, const RoaCertificate& cert, const MatrixXd& E,
                                          int qc_count) {
  nlohmann::json j;
  j["system"] = sys.name();
  j["recipe"] = cert.recipe.name();
  j["E"] = json_detail::matrix_to_json(E);
  j["alpha"] = cert.alpha;
  j["eps"] = cert.eps;
  j["P"] = json_detail::matrix_to_json(cert.P);
  j["t"] = cert.t;
  j["r"] = cert.r;
  j["xi"] = json_detail::vector_to_json(cert.xi);
  j["qc_count"] = qc_count;
  j["margins"] = margins_to_json(cert.margins);
  return j;
}

struct StoredCertificate {
  std::string system;
  MatrixXd E;
  RoaCertificate cert;
  int qc_count = 0;
};

inline StoredCertificate certificate_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("certificate must be a JSON object");
  for (const char* key : {"recipe", "E", "alpha", "eps", "P", "t", "xi", "qc_count"})
    if (!j.contains(key)) throw ParseError(std::string("certificate is missing '") + key + "'");
  StoredCertificate s;
  try {
    s.system = j.value("system", std::string{});
    s.E = json_detail::matrix_from_json(j["E"], "E");
    s.cert.recipe = QcRecipe::parse(j["recipe"].get<std::string>());
    s.cert.alpha = j["alpha"].get<double>();
    s.cert.eps = j["eps"].get<double>();
    s.cert.P = json_detail::matrix_from_json(j["P"], "P");
    s.cert.t = j["t"].get<double>();
    s.cert.r = s.cert.t > 0.0 ? 1.0 / std::sqrt(s.cert.t) : 0.0;
    s.cert.xi = json_detail::vector_from_json(j["xi"], "xi");
    s.qc_count = j["qc_count"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed certificate: ") + e.what());
  }
  return s;
}

struct VerifyOutcome {
  CertificateReport report;
  int rebuilt_qc_count = 0;
  bool qc_count_matches = false;
  bool pass = false;
};

/// Rebuild the QC list from system, recipe, E and alpha, then check the stored multipliers against it.
inline VerifyOutcome verify_stored(const QuadraticSystem& sys, const StoredCertificate& s, int samples = 10000) {
  if (s.E.rows() != sys.n() || s.E.cols() != sys.n()) throw DimensionError("certificate E does not match the system");
  const Ellipsoid ell(s.E, s.cert.alpha);
  const QcSet set = build_qc_set(sys, ell, s.cert.recipe);
  VerifyOutcome out;
  out.rebuilt_qc_count = static_cast<int>(set.qcs.size());
  out.qc_count_matches = out.rebuilt_qc_count == s.qc_count && s.cert.xi.size() == out.rebuilt_qc_count;
  if (!out.qc_count_matches) return out;
  out.report = verify_certificate(sys, set.qcs, s.cert, ell, s.cert.eps, samples);
  out.pass = out.report.pass;
  return out;
}

inline nlohmann::json sweep_point_json(const SweepPoint& p) {
  return {{"alpha", p.alpha}, {"r_star", p.r_star}, {"status", to_string(p.status)}, {"iterations", p.iterations}};
}

/// Deterministic analysis report. Timing lives elsewhere so reruns are byte-identical.
inline nlohmann::json sweep_report_json(const QuadraticSystem& sys, const QcRecipe& recipe, const MatrixXd& E,
                                        double eps, const SweepResult& sw) {
  nlohmann::json j;
  j["system"] = sys.name();
  j["recipe"] = recipe.name();
  j["E"] = json_detail::matrix_to_json(E);
  j["eps"] = eps;
  j["qc_count"] = sw.qc_count;
  j["curve"] = nlohmann::json::array();
  for (const auto& p : sw.curve) j["curve"].push_back(sweep_point_json(p));
  j["refinement"] = nlohmann::json::array();
  for (const auto& p : sw.refinement) j["refinement"].push_back(sweep_point_json(p));
  j["best_alpha"] = sw.best_alpha;
  j["r_star"] = sw.best_r;
  if (sw.best && sw.best->certificate) {
    j["status"] = to_string(sw.best->status);
    j["certificate"] = certificate_to_json(sys, *sw.best->certificate, E, sw.best->qc_count);
  } else {
    j["status"] = "Infeasible";
    j["certificate"] = nullptr;
  }
  return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace roaqc
