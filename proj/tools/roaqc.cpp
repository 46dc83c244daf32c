// roaqc: region-of-attraction certificates for quadratic systems.
//
//   roaqc analyze  --system sys.json [--recipe set8] [--alpha-grid 0.05:50:60] [--out dir]
//   roaqc sweep    --system sys.json --alpha-grid lo:hi:count ...
//   roaqc simulate --system sys.json [--upper-bound] [--portrait --grid 41]
//   roaqc verify   --certificate cert.json --system sys.json
//
// Exit codes: 0 ok, 2 bad input, 3 infeasible at every alpha, 4 solver failure, 5 verification failed.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "roaqc/report.hpp"
#include "roaqc/simulate.hpp"

namespace fs = std::filesystem;
using namespace roaqc;

namespace {

constexpr int kOk = 0;
constexpr int kParse = 2;
constexpr int kInfeasible = 3;
constexpr int kSolver = 4;
constexpr int kVerifyFail = 5;

struct AnalysisConfig {
  std::string system;
  std::string recipe = "set1";
  nlohmann::json E = "identity";
  std::string alpha_grid;  // empty: default grid
  int refine = 12;
  std::optional<double> eps;
  std::uint64_t seed = 0;
  std::string out = ".";
  unsigned workers = 0;
  SdpOptions solver;
};

MatrixXd shape_matrix(const nlohmann::json& shape, int n) {
  if (shape.is_string()) {
    const std::string s = shape.get<std::string>();
    if (s == "identity") return MatrixXd::Identity(n, n);
    // a path to a JSON file holding the matrix
    nlohmann::json j = read_json_file(s);
    if (j.is_object() && j.contains("E")) j = j["E"];
    return shape_matrix(j, n);
  }
  MatrixXd E = json_detail::matrix_from_json(shape, "E");
  if (E.rows() != n || E.cols() != n) throw DimensionError("E must be " + std::to_string(n) + "x" + std::to_string(n));
  return E;
}

void apply_config_file(const std::string& path, AnalysisConfig& cfg) {
  const nlohmann::json j = read_json_file(path);
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "system") cfg.system = v.get<std::string>();
      else if (key == "recipe") cfg.recipe = v.get<std::string>();
      else if (key == "E") cfg.E = v;
      else if (key == "alpha_grid") cfg.alpha_grid = v.get<std::string>();
      else if (key == "refine") cfg.refine = v.get<int>();
      else if (key == "eps") cfg.eps = v.get<double>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "workers") cfg.workers = v.get<unsigned>();
      else if (key == "solver") {
        if (!v.is_object()) throw ParseError("'solver' must be an object");
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "feas_tol") cfg.solver.feas_tol = sv.get<double>();
          else if (sk == "gap_tol") cfg.solver.gap_tol = sv.get<double>();
          else if (sk == "max_iters") cfg.solver.max_iters = sv.get<int>();
          else throw ParseError("unknown solver option in config: " + sk);
        }
      } else {
        throw ParseError("unknown key in config: " + key);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("config key '" + key + "': " + e.what());
    }
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

int run_analyze(const AnalysisConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const QuadraticSystem sys = load_system_file(cfg.system);
  const QcRecipe recipe = QcRecipe::parse(cfg.recipe);
  const MatrixXd E = shape_matrix(cfg.E, sys.n());
  AlphaGrid grid = cfg.alpha_grid.empty() ? AlphaGrid{} : AlphaGrid::parse(cfg.alpha_grid);
  grid.refine_evals = cfg.refine;
  RoaOptions opts;
  if (cfg.eps) opts.eps = *cfg.eps;
  opts.sdp = cfg.solver;
  opts.workers = cfg.workers;
  const double eps = opts.eps_for(sys);

  const SweepResult sw = alpha_sweep(sys, recipe, E, grid, opts);
  const auto t1 = std::chrono::steady_clock::now();

  ensure_dir(cfg.out);
  nlohmann::json report = sweep_report_json(sys, recipe, E, eps, sw);
  int code = kOk;
  if (sw.best && sw.best->certificate) {
    const RoaCertificate& cert = *sw.best->certificate;
    const Ellipsoid ell(E, cert.alpha);
    const QcSet set = build_qc_set(sys, ell, recipe);
    const CertificateReport chk = verify_certificate(sys, set.qcs, cert, ell, eps, 10000, cfg.seed);
    report["self_check"] = chk.pass ? "PASS" : "FAIL";
    write_json_file((fs::path(cfg.out) / "certificate.json").string(), report["certificate"]);
    write_json_file((fs::path(cfg.out) / "qcs.json").string(), qc_set_to_json(set.qcs));
    std::cout << "system " << (sys.name().empty() ? cfg.system : sys.name()) << "  recipe " << recipe.name()
              << "  QCs " << sw.qc_count << '\n'
              << std::setprecision(6) << "r* = " << sw.best_r << " at alpha = " << sw.best_alpha << " ("
              << to_string(sw.best->status) << ", self-check " << (chk.pass ? "PASS" : "FAIL") << ")\n";
    if (!set.flagged.empty())
      for (const auto& f : set.flagged) std::cerr << "note: " << f << '\n';
  } else {
    bool all_infeasible = true;
    for (const auto& p : sw.curve) all_infeasible = all_infeasible && p.status == SdpStatus::Infeasible;
    code = all_infeasible ? kInfeasible : kSolver;
    std::cerr << (all_infeasible ? "infeasible at every alpha on the grid\n"
                                 : "no alpha produced a usable certificate (solver failures on the grid)\n");
  }
  write_json_file((fs::path(cfg.out) / "report.json").string(), report);

  nlohmann::json meta;
  meta["seconds"] = std::chrono::duration<double>(t1 - t0).count();
  meta["solves"] = sw.curve.size() + sw.refinement.size();
  meta["workers"] = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  write_json_file((fs::path(cfg.out) / "metadata.json").string(), meta);
  return code;
}

struct SimulateConfig {
  std::string system;
  bool upper_bound = false;
  bool portrait = false;
  int grid = 41;
  double range_lo = -6.0, range_hi = 6.0;
  int directions = 1000;
  double r_lo = 0.1, r_hi = 10.0, tol = 1e-3;
  double dt = 1e-3, T = 40.0;
  int stride = 0;
  std::uint64_t seed = 0;
  std::vector<double> circles;
  std::string out = ".";
};

int run_simulate(const SimulateConfig& cfg) {
  const QuadraticSystem sys = load_system_file(cfg.system);
  SimOptions sim;
  sim.dt = cfg.dt;
  sim.T = cfg.T;
  sim.stride = cfg.stride;
  ensure_dir(cfg.out);
  if (!cfg.upper_bound && !cfg.portrait) {
    std::cerr << "nothing to do: pass --upper-bound and/or --portrait\n";
    return kParse;
  }
  if (cfg.upper_bound) {
    UpperBoundSearch s;
    s.directions = cfg.directions;
    s.r_lo = cfg.r_lo;
    s.r_hi = cfg.r_hi;
    s.tol = cfg.tol;
    s.seed = cfg.seed;
    s.sim = sim;
    s.sim.stride = 0;
    const UpperBoundResult ub = roa_upper_bound(sys, s);
    nlohmann::json j;
    j["system"] = sys.name();
    j["directions"] = cfg.directions;
    j["seed"] = cfg.seed;
    j["bracket"] = {cfg.r_lo, cfg.r_hi};
    j["tol"] = cfg.tol;
    j["dt"] = cfg.dt;
    j["T"] = cfg.T;
    j["found"] = ub.found;
    j["message"] = ub.message;
    if (ub.found) {
      j["r_bar"] = ub.r_bar;
      j["r_lower"] = ub.r_lower;
      j["witness"] = json_detail::vector_to_json(ub.witness);
      j["witness_verdict"] = to_string(ub.witness_verdict);
      std::cout << std::setprecision(6) << "r_bar = " << ub.r_bar << "  witness x0 = [" << ub.witness.transpose()
                << "] (" << to_string(ub.witness_verdict) << ")\n";
    } else {
      std::cout << ub.message << '\n';
    }
    write_json_file((fs::path(cfg.out) / "upper_bound.json").string(), j);
  }
  if (cfg.portrait) {
    PortraitGrid g;
    g.points = cfg.grid;
    g.lo = cfg.range_lo;
    g.hi = cfg.range_hi;
    const PhasePortrait pp = phase_portrait(sys, g, sim, cfg.circles);
    std::ofstream csv(fs::path(cfg.out) / "portrait.csv");
    if (!csv) throw Error("cannot write portrait.csv");
    write_verdict_csv(csv, pp.rows, sys.n());
    write_json_file((fs::path(cfg.out) / "portrait.json").string(), portrait_to_json(pp));
    int diverged = 0;
    for (const auto& r : pp.rows) diverged += r.verdict != Verdict::Converged;
    std::cout << "portrait: " << pp.rows.size() << " initial states, " << diverged << " not converging\n";
  }
  return kOk;
}

int run_verify(const std::string& cert_path, const std::string& system_path, int samples) {
  const QuadraticSystem sys = load_system_file(system_path);
  const StoredCertificate s = certificate_from_json(read_json_file(cert_path));
  const VerifyOutcome v = verify_stored(sys, s, samples);
  if (!v.qc_count_matches) {
    std::cout << "FAIL: certificate lists " << s.qc_count << " QCs (" << s.cert.xi.size()
              << " multipliers), rebuilt set has " << v.rebuilt_qc_count << '\n';
    return kVerifyFail;
  }
  const auto& m = v.report.margins;
  auto line = [](const char* what, double value, const char* want, bool ok) {
    std::cout << std::left << std::setw(28) << what << std::setw(16) << std::setprecision(6) << value << std::setw(14)
              << want << (ok ? "ok" : "VIOLATED") << '\n';
  };
  line("lambda_max(decrease LMI)", m.lmi_max_eig, "<= 0", v.report.lmi_ok);
  line("lambda_min(P - E/alpha^2)", m.lower_min_eig, ">= 0", v.report.lower_ok);
  line("lambda_min(tI - P)", m.upper_min_eig, ">= 0", v.report.upper_ok);
  line("min xi", m.xi_min, ">= 0", v.report.xi_ok);
  line("max Vdot/|x|^2 (sampled)", v.report.vdot_worst, "< 0", v.report.vdot_violations == 0);
  std::cout << (v.pass ? "PASS" : "FAIL") << "  r = " << s.cert.r << '\n';
  return v.pass ? kOk : kVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-of-attraction certificates for quadratic systems"};
  app.require_subcommand(1);

  AnalysisConfig acfg;
  std::string config_path;
  std::string e_flag;
  double eps_flag = 0.0;
  auto add_analysis = [&](CLI::App* cmd, bool grid_required) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--system", acfg.system, "system description JSON");
    cmd->add_option("--recipe", acfg.recipe, "set1..set8 or a comma list of csqc,rank2,rank3,cross");
    auto* g = cmd->add_option("--alpha-grid", acfg.alpha_grid, "lo:hi:count, log-spaced");
    if (grid_required) g->required();
    cmd->add_option("--refine", acfg.refine, "golden-section evaluations after the grid");
    cmd->add_option("--E", e_flag, "'identity' or a JSON file holding the shape matrix");
    cmd->add_option("--eps", eps_flag, "margin on the decrease condition");
    cmd->add_option("--seed", acfg.seed, "seed for the certificate self-check");
    cmd->add_option("--out", acfg.out, "output directory");
    cmd->add_option("--workers", acfg.workers, "concurrent solves (0 = hardware threads)");
  };
  auto* analyze = app.add_subcommand("analyze", "maximize the certified radius over an alpha grid");
  add_analysis(analyze, false);
  auto* sweep = app.add_subcommand("sweep", "analyze with an explicit alpha grid");
  add_analysis(sweep, true);

  SimulateConfig scfg;
  std::string range;
  auto* simulate = app.add_subcommand("simulate", "trajectory verdicts, sampled upper bound, phase portrait");
  simulate->add_option("--system", scfg.system, "system description JSON")->required();
  simulate->add_flag("--upper-bound", scfg.upper_bound, "bisect for the smallest non-converging radius");
  simulate->add_flag("--portrait", scfg.portrait, "grid of initial states (2-state systems)");
  simulate->add_option("--grid", scfg.grid, "portrait points per axis");
  simulate->add_option("--range", range, "portrait range lo:hi");
  simulate->add_option("--directions", scfg.directions, "sampled directions for the upper bound");
  simulate->add_option("--r-lo", scfg.r_lo);
  simulate->add_option("--r-hi", scfg.r_hi);
  simulate->add_option("--tol", scfg.tol, "bisection tolerance");
  simulate->add_option("--dt", scfg.dt);
  simulate->add_option("--T", scfg.T, "horizon");
  simulate->add_option("--stride", scfg.stride, "keep every stride-th state in portrait.json");
  simulate->add_option("--circle", scfg.circles, "certified radius to overlay (repeatable)");
  simulate->add_option("--seed", scfg.seed, "direction set shift");
  simulate->add_option("--out", scfg.out, "output directory");

  std::string cert_path, verify_system;
  int samples = 10000;
  auto* verify = app.add_subcommand("verify", "re-check a stored certificate");
  verify->add_option("--certificate", cert_path)->required();
  verify->add_option("--system", verify_system)->required();
  verify->add_option("--samples", samples, "sampled Vdot checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kParse;
  }

  try {
    if (*analyze || *sweep) {
      CLI::App* cmd = *analyze ? analyze : sweep;
      // defaults < config file < flags
      AnalysisConfig cfg;
      if (!config_path.empty()) apply_config_file(config_path, cfg);
      if (cmd->count("--system")) cfg.system = acfg.system;
      if (cmd->count("--recipe")) cfg.recipe = acfg.recipe;
      if (cmd->count("--alpha-grid")) cfg.alpha_grid = acfg.alpha_grid;
      if (cmd->count("--refine")) cfg.refine = acfg.refine;
      if (cmd->count("--E")) cfg.E = e_flag;
      if (cmd->count("--eps")) cfg.eps = eps_flag;
      if (cmd->count("--seed")) cfg.seed = acfg.seed;
      if (cmd->count("--out")) cfg.out = acfg.out;
      if (cmd->count("--workers")) cfg.workers = acfg.workers;
      if (cfg.system.empty()) throw ParseError("--system is required");
      return run_analyze(cfg);
    }
    if (*simulate) {
      if (!range.empty()) {
        const auto c = range.find(':');
        if (c == std::string::npos) throw ParseError("--range must be lo:hi");
        try {
          scfg.range_lo = std::stod(range.substr(0, c));
          scfg.range_hi = std::stod(range.substr(c + 1));
        } catch (const std::exception&) {
          throw ParseError("--range must be lo:hi");
        }
      }
      return run_simulate(scfg);
    }
    if (*verify) return run_verify(cert_path, verify_system, samples);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const NonHurwitzError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const NotPositiveDefiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  }
  return kOk;
}
