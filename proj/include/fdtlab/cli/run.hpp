#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fdtlab/assumptions.hpp"
#include "fdtlab/cli/config.hpp"
#include "fdtlab/cli/report.hpp"
#include "fdtlab/ensemble.hpp"
#include "fdtlab/error.hpp"
#include "fdtlab/gap_probe.hpp"
#include "fdtlab/lyapunov.hpp"
#include "fdtlab/markov_testbed.hpp"
#include "fdtlab/observable.hpp"
#include "fdtlab/response.hpp"
#include "fdtlab/version.hpp"

namespace fdtlab::cli {

enum ExitCode : int { exit_ok = 0, exit_assumption = 2, exit_divergence = 3, exit_config = 4 };

struct RunResult {
  int exit_code = exit_ok;
  json report;
  Artifacts artifacts{""};
};

inline const char* command_name(Command c) {
  switch (c) {
    case Command::check: return "check";
    case Command::simulate: return "simulate";
    case Command::response: return "response";
    case Command::oracle: return "oracle";
    case Command::testbed: return "testbed";
    case Command::gap_probe: return "gap-probe";
    case Command::compare: return "compare";
  }
  return "?";
}

inline std::string default_prefix(Command c) { return std::string("fdtlab-") + command_name(c); }

/// The part of the report that depends only on the config document.
inline json report_header(const RunConfig& cfg) {
  return json{{"provenance",
               {{"command", command_name(cfg.command)},
                {"seed", cfg.master_seed},
                {"version", version},
                {"config", cfg.resolved}}},
              {"results", json::array()}};
}

namespace detail {

inline json coercivity_json(const CoercivityReport& r) {
  return json{{"kind", "coercivity"},
              {"pass", r.pass},
              {"c_hat", num(r.c_hat)},
              {"C_hat", num(r.C_hat)},
              {"worst_direction", vec_json(r.worst_direction)},
              {"top_degree_radial", num(r.top_degree_radial)},
              {"margin", num(r.margin)},
              {"tolerance", num(r.tolerance)},
              {"even_degree", r.even_degree},
              {"n_directions", r.n_directions}};
}

inline json span_json(const SpanReport& r) {
  return json{{"kind", "hypoellipticity_span"},
              {"pass", r.full_rank},
              {"level_dims", r.level_dims},
              {"final_dim", r.basis.cols()},
              {"tol", num(r.tol)},
              {"randomized", r.used_random_sampling}};
}

/// The forcing vector when the direction only shifts the constant drift term.
inline std::optional<Eigen::VectorXd> pure_forcing(const ParamDirection& dir) {
  if (dir.perturbs_noise() || dir.delta_maps.empty()) return std::nullopt;
  for (std::size_t k = 1; k < dir.delta_maps.size(); ++k)
    if (!dir.delta_maps[k].is_zero()) return std::nullopt;
  return Eigen::VectorXd(dir.delta_maps[0].coefficients().col(0));
}

/// Coordinate index for observables named x1, x2, ...
inline std::optional<Eigen::Index> coordinate_index(const std::string& name) {
  if (name.size() < 2 || name[0] != 'x' || name.find_first_not_of("0123456789", 1) != std::string::npos)
    return std::nullopt;
  return static_cast<Eigen::Index>(std::stoul(name.substr(1)) - 1);
}

inline CurrentSpec resolve_current(const std::string& mode, const PolySystem& sys) {
  if (mode == "quasi-gaussian") return CurrentSpec::quasi_gaussian();
  if (mode == "exact") return gradient_system_current(sys);
  try {
    return gradient_system_current(sys);
  } catch (const UnsupportedMethodError&) {
    return CurrentSpec::quasi_gaussian();
  }
}

inline std::string safe_name(std::string s) {
  for (auto& ch : s)
    if (ch == '-') ch = '_';
  return s;
}

/// Runs the configured estimators; curves go to <prefix>_<method>.csv.
inline std::vector<ResponseEstimate> run_estimators(const RunConfig& cfg, RunResult& out, json& results) {
  const auto& sys = cfg.system->system;
  const auto& dir = *cfg.direction;
  const Observable phi = observables::by_name(cfg.observable, sys.dim());
  std::optional<Ensemble> start;
  auto shared_start = [&]() -> const Ensemble* {
    if (!start) start = fdtlab::detail::start_ensemble(sys, cfg.response, cfg.scheme, cfg.master_seed, nullptr);
    return &*start;
  };
  std::vector<ResponseEstimate> estimates;
  for (const auto& m : cfg.methods) {
    json entry = json::object();
    if (m == "finite-difference") {
      estimates.push_back(finite_difference_oracle(sys, dir, phi, cfg.fd, cfg.scheme, cfg.master_seed));
    } else {
      ResponseCurve curve;
      if (m == "tangent") {
        curve = tangent_response(sys, dir, phi, cfg.response, cfg.scheme, cfg.master_seed, shared_start());
      } else {
        const CurrentSpec cur = resolve_current(cfg.current, sys);
        curve = green_kubo_response(sys, dir, phi, cur, cfg.response, cfg.scheme, cfg.master_seed, shared_start());
        entry["current"] = cur.description;
      }
      estimates.push_back(curve.estimate());
      entry["plateau"] = to_json(curve.plateau);
      const std::string suffix = "_" + safe_name(m) + ".csv";
      entry["curve_file"] = suffix;
      out.artifacts.add(suffix, curve_table(curve).str());
    }
    json e = to_json(estimates.back());
    e.update(entry);
    e["kind"] = "estimate";
    results.push_back(e);
  }
  return estimates;
}

inline int run_check(const RunConfig& cfg, RunResult& out, json& results) {
  const auto& sys = cfg.system->system;
  const auto coer = coercivity_probe(sys, cfg.check.n_directions, cfg.check.radii, cfg.check.coercivity_tol);
  SpanOptions so;
  so.tol = cfg.check.span_tol;
  const auto span = hypoellipticity_span(sys, so);
  results.push_back(coercivity_json(coer));
  results.push_back(span_json(span));
  out.report["verdict"] = {{"coercivity", coer.pass}, {"hypoellipticity", span.full_rank}};
  return coer.pass && span.full_rank ? exit_ok : exit_assumption;
}

inline int run_simulate(const RunConfig& cfg, RunResult& out, json& results) {
  const auto& sys = cfg.system->system;
  const Ensemble ens = sample_stationary(sys, cfg.scheme, cfg.ensemble, derive_seed(cfg.master_seed, "simulate"));
  std::vector<std::string> header{"stream"};
  for (std::size_t k = 0; k < sys.dim(); ++k) header.push_back("x" + std::to_string(k + 1));
  CsvTable table(header);
  const auto n = ens.samples.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> row{static_cast<double>(ens.stream_of_row[static_cast<std::size_t>(i)])};
    for (Eigen::Index k = 0; k < ens.samples.cols(); ++k) row.push_back(ens.samples(i, k));
    table.add_row(row);
  }
  out.artifacts.add("_ensemble.csv", table.str());
  json meta{{"kind", "ensemble"},
            {"n_samples", n},
            {"stream_counts", ens.stream_counts},
            {"dt", ens.dt},
            {"burn_in", ens.burn_in},
            {"thinning", ens.thinning},
            {"file", "_ensemble.csv"}};
  out.report["ensemble"] = meta;
  if (n > 0) {
    const Eigen::VectorXd mean = ens.samples.colwise().mean().transpose();
    json moments{{"kind", "moments"}, {"n", n}, {"mean", vec_json(mean)}};
    if (n > 1) {
      const Eigen::MatrixXd c = ens.samples.rowwise() - mean.transpose();
      moments["covariance"] = mat_json(c.transpose() * c / static_cast<double>(n - 1));
    }
    results.push_back(moments);
  }
  return exit_ok;
}

inline int run_oracle(const RunConfig& cfg, RunResult& out, json& results) {
  RunConfig fd_only = cfg;
  fd_only.methods = {"finite-difference"};
  const auto est = run_estimators(fd_only, out, results);
  const auto& spec = *cfg.system;
  const auto e = pure_forcing(*cfg.direction);
  const auto idx = coordinate_index(cfg.observable);
  if (spec.linear_drift && e && idx && *idx < e->size()) {
    const Eigen::VectorXd r = ou_mean_response(*spec.linear_drift, *e);
    const double ref = r[*idx];
    const double z = est[0].stderr > 0.0 ? (est[0].value - ref) / est[0].stderr : 0.0;
    results.push_back(json{{"kind", "linear_reference"},
                           {"value", num(ref)},
                           {"mean_response", vec_json(r)},
                           {"z", num(z)},
                           {"description", "-A^{-1} e from the linear solve"}});
  }
  return exit_ok;
}

inline json comparison_json(const Comparison& c) {
  json j{{"z", mat_json(c.z)}, {"max_abs_z", num(c.max_abs_z)}, {"consensus", c.consensus}, {"threshold", 3.0}};
  json methods = json::array();
  for (const auto& e : c.estimates) methods.push_back(e.method);
  j["methods"] = methods;
  j["outlier"] = c.outlier ? json(c.estimates[*c.outlier].method) : json(nullptr);
  return j;
}

inline int run_compare(const RunConfig& cfg, RunResult& out, json& results) {
  const auto est = run_estimators(cfg, out, results);
  const Comparison c = compare_estimates(est);
  out.report["comparison"] = comparison_json(c);
  return exit_ok;
}

inline int run_testbed(const RunConfig& cfg, RunResult&, json& results) {
  const auto& tb = cfg.testbed;
  const auto& fam = *tb.family;
  const double exact = testbed::exact_derivative(fam, tb.phi);
  for (std::size_t m : tb.powers) {
    const double f = testbed::linear_response_formula(fam, tb.phi, m);
    results.push_back(json{{"kind", "formula"}, {"power", m}, {"value", num(f)}, {"abs_error", num(std::abs(f - exact))}});
  }
  results.push_back(json{{"kind", "exact"}, {"value", num(exact)}});
  const auto rep = testbed::gap_and_lipschitz_report(fam, testbed::ChainWeights(tb.weights), tb.a_list);
  results.push_back(json{{"kind", "gap"},
                         {"contraction", num(rep.contraction)},
                         {"slem", num(rep.slem)},
                         {"a_list", rep.a_list},
                         {"lipschitz_ratio", rep.lipschitz_ratio},
                         {"lipschitz_max", num(rep.lipschitz_max)}});
  json stat = json::array();
  for (double v : testbed::stationary(fam.P0())) stat.push_back(num(v));
  results.push_back(json{{"kind", "stationary"}, {"pi", stat}});
  return exit_ok;
}

inline json summary_json(const RegimeSummary& s) {
  return json{{"n_pairs", s.n_pairs}, {"n_skipped", s.n_skipped}, {"mean_ratio", num(s.mean_ratio)}, {"max_ratio", num(s.max_ratio)}};
}

inline int run_gap_probe(const RunConfig& cfg, RunResult& out, json& results) {
  const auto& sys = cfg.system->system;
  const auto con = contraction_estimate(sys, cfg.weights, cfg.probe, cfg.scheme, cfg.master_seed);
  std::vector<std::string> header{"regime"};
  for (const char* v : {"x", "y"})
    for (std::size_t k = 0; k < sys.dim(); ++k) header.push_back(v + std::to_string(k + 1));
  for (const char* h : {"d0", "dt_mean", "ratio", "cap_active", "skipped"}) header.emplace_back(h);
  CsvTable pairs(header);
  for (const auto& p : con.pairs) {
    std::vector<double> row{static_cast<double>(static_cast<int>(p.pair.regime))};
    for (Eigen::Index k = 0; k < p.pair.x.size(); ++k) row.push_back(p.pair.x[k]);
    for (Eigen::Index k = 0; k < p.pair.y.size(); ++k) row.push_back(p.pair.y[k]);
    row.insert(row.end(), {p.d0, p.dt_mean, p.ratio, p.cap_active ? 1.0 : 0.0, p.skipped ? 1.0 : 0.0});
    pairs.add_row(row);
  }
  out.artifacts.add("_pairs.csv", pairs.str());
  json regimes = json::object();
  for (int r = 0; r < 3; ++r) regimes[regime_name(static_cast<Regime>(r))] = summary_json(con.regimes[static_cast<std::size_t>(r)]);
  results.push_back(json{{"kind", "contraction"},
                         {"overall", summary_json(con.overall)},
                         {"regimes", regimes},
                         {"contracts", con.contracts},
                         {"n_couplings", con.n_couplings},
                         {"horizon", num(con.horizon)},
                         {"distance_note", ContractionReport::distance_note},
                         {"pairs_file", "_pairs.csv"}});

  const auto mino = minorization_probe(sys, cfg.weights, cfg.probe, cfg.n_starts, cfg.scheme, cfg.master_seed);
  json starts = json::array();
  for (const auto& s : mino.starts)
    starts.push_back(json{{"x", vec_json(s.x)},
                          {"hits", s.hits},
                          {"n", s.n},
                          {"probability", num(s.probability)},
                          {"lower_bound", num(s.lower_bound)}});
  results.push_back(json{{"kind", "minorization"},
                         {"alpha_hat", num(mino.alpha_hat)},
                         {"min_probability", num(mino.min_probability)},
                         {"verdict", mino.verdict},
                         {"n_zero_hit_starts", mino.n_zero_hit_starts},
                         {"confidence", num(mino.confidence)},
                         {"radius", num(mino.radius)},
                         {"starts", starts}});
  return exit_ok;
}

}  // namespace detail

/// Executes one validated config. Artifacts are returned in memory (JSON
/// report last); nothing is written here. Library exceptions propagate.
inline RunResult run(const RunConfig& cfg, const std::string& prefix) {
  RunResult out;
  out.artifacts = Artifacts(prefix);
  out.report = report_header(cfg);
  json results = json::array();
  switch (cfg.command) {
    case Command::check: out.exit_code = detail::run_check(cfg, out, results); break;
    case Command::simulate: out.exit_code = detail::run_simulate(cfg, out, results); break;
    case Command::response: detail::run_estimators(cfg, out, results); break;
    case Command::oracle: out.exit_code = detail::run_oracle(cfg, out, results); break;
    case Command::compare: out.exit_code = detail::run_compare(cfg, out, results); break;
    case Command::testbed: out.exit_code = detail::run_testbed(cfg, out, results); break;
    case Command::gap_probe: out.exit_code = detail::run_gap_probe(cfg, out, results); break;
  }
  out.report["results"] = results;
  json files = json::array();
  for (const auto& f : out.artifacts.files()) files.push_back(f.first.substr(prefix.size()));
  out.report["files"] = files;
  return out;
}

/// Serialized report: sorted keys, two-space indent, trailing newline.
inline std::string report_text(const json& report) { return report.dump(2) + "\n"; }

}  // namespace fdtlab::cli
