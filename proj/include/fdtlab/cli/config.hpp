#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fdtlab/cli/reader.hpp"
#include "fdtlab/ensemble.hpp"
#include "fdtlab/error.hpp"
#include "fdtlab/gap_probe.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/lyapunov.hpp"
#include "fdtlab/markov_testbed.hpp"
#include "fdtlab/observable.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/presets.hpp"
#include "fdtlab/response.hpp"

namespace fdtlab::cli {

enum class Command { check, simulate, response, oracle, testbed, gap_probe, compare };

inline Command parse_command(const std::string& s) {
  static const std::vector<std::pair<std::string, Command>> names = {
      {"check", Command::check},     {"simulate", Command::simulate}, {"response", Command::response},
      {"oracle", Command::oracle},   {"testbed", Command::testbed},   {"gap-probe", Command::gap_probe},
      {"compare", Command::compare}};
  std::string best;
  std::size_t best_d = 100;
  for (const auto& [name, c] : names) {
    if (name == s) return c;
    if (const auto d = edit_distance(s, name); d < best_d) {
      best_d = d;
      best = name;
    }
  }
  throw ConfigError("unknown command '" + s + "'; did you mean '" + best + "'?");
}

struct SystemSpec {
  std::string name;  ///< preset name or "explicit"
  PolySystem system;
  double energy_scale = 1.0;
  std::optional<Eigen::MatrixXd> linear_drift;  ///< set when N(x) = A x exactly
};

struct CheckOptions {
  std::size_t n_directions = 64;
  std::vector<double> radii{0.5, 1.0, 2.0, 4.0, 8.0};
  double coercivity_tol = 1e-10;
  double span_tol = 1e-10;
};

struct TestbedSpec {
  std::optional<testbed::ChainFamily> family;
  Eigen::VectorXd phi;
  std::vector<std::size_t> powers{1};
  Eigen::VectorXd weights;
  std::vector<double> a_list{0.1, -0.1, 0.01, -0.01, 0.001, -0.001};
};

struct RunConfig {
  Command command = Command::check;
  std::uint64_t master_seed = 1;
  std::string output;
  std::optional<SystemSpec> system;
  std::optional<ParamDirection> direction;
  std::string observable = "x1";
  SchemeConfig scheme;
  EnsembleConfig ensemble;
  ResponseConfig response;
  std::vector<std::string> methods;
  std::string current = "auto";
  FdConfig fd;
  bool fd_delta_default = true;
  CheckOptions check;
  WeightConfig weights;
  ProbeConfig probe;
  std::size_t n_starts = 9;
  TestbedSpec testbed;
  json resolved;  ///< the document with every default filled in
};

namespace detail {

/// Drift terms [{"out": i, "monomial": [j, k, ...], "coeff": c}, ...]; the
/// monomial length is the degree of the term.
inline std::vector<SymMultiMap> read_terms(Reader& r, const std::string& key, std::size_t dim, std::size_t degree) {
  std::vector<SymMultiMap> maps;
  for (std::size_t k = 0; k <= degree; ++k) maps.emplace_back(k, dim);
  if (!r.has(key)) return maps;
  const json& terms = r.raw(key);
  if (!terms.is_array()) throw ConfigError(r.at(key) + " must be an array of terms");
  json echo_terms = json::array();
  for (std::size_t t = 0; t < terms.size(); ++t) {
    json echo;
    Reader tr(terms[t], r.at(key) + "[" + std::to_string(t) + "]", echo);
    const std::size_t out = tr.get_size("out", 0);
    const auto mono = tr.get_indices("monomial");
    const double coeff = tr.require_double("coeff");
    tr.finish();
    if (out >= dim) throw ConfigError(tr.path() + ".out is out of range");
    if (mono.size() > degree) throw ConfigError(tr.path() + ".monomial exceeds the system degree");
    for (std::size_t i : mono)
      if (i >= dim) throw ConfigError(tr.path() + ".monomial has an index out of range");
    maps[mono.size()].add_monomial(out, mono, coeff);
    echo_terms.push_back(echo);
  }
  r.put(key, echo_terms);
  return maps;
}

inline std::size_t max_term_degree(Reader& r, const std::string& key) {
  std::size_t deg = 1;
  if (!r.has(key)) return deg;
  const json& terms = r.raw(key);
  if (!terms.is_array()) throw ConfigError(r.at(key) + " must be an array of terms");
  for (const auto& t : terms)
    if (t.is_object() && t.contains("monomial") && t["monomial"].is_array()) deg = std::max(deg, t["monomial"].size());
  return deg;
}

inline SystemSpec read_system(Reader r) {
  SystemSpec spec;
  if (r.has("preset")) {
    spec.name = r.require_string("preset");
    if (spec.name == "scalar_cubic") {
      spec.system = presets::scalar_cubic(r.get_double("sigma", 1.0));
      spec.energy_scale = presets::catalog().front().energy_scale;
    } else if (spec.name == "scalar_ou") {
      const double gamma = r.get_double("gamma", 1.0), sigma = r.get_double("sigma", 1.0);
      if (!(gamma > 0.0)) throw ConfigError(r.at("gamma") + " must be positive");
      spec.system = presets::scalar_ou(gamma, sigma);
      spec.energy_scale = sigma * sigma / (2.0 * gamma);
      spec.linear_drift = Eigen::MatrixXd::Constant(1, 1, -gamma);
    } else if (spec.name == "ou_nd") {
      const Eigen::MatrixXd A = r.get_matrix("A", presets::default_ou_drift());
      const Eigen::MatrixXd S = r.get_matrix("Sigma", Eigen::MatrixXd::Identity(A.rows(), A.rows()));
      spec.system = presets::ou_nd(A, S);
      spec.energy_scale = stationary_covariance_reference(A, S).trace();
      spec.linear_drift = A;
    } else if (spec.name == "triad") {
      presets::TriadParams p;
      auto arr3 = [&](const char* key, std::array<double, 3>& dst) {
        const auto v = r.get_doubles(key, {dst[0], dst[1], dst[2]});
        if (v.size() != 3) throw ConfigError(r.at(key) + " must have 3 entries");
        for (std::size_t i = 0; i < 3; ++i) dst[i] = v[i];
      };
      arr3("b", p.b);
      arr3("damping", p.damping);
      arr3("noise", p.noise);
      spec.system = presets::triad(p);
      spec.energy_scale = presets::triad_energy_scale(p);
    } else if (spec.name == "hypoelliptic_2d") {
      spec.system = presets::hypoelliptic_2d();
    } else if (spec.name == "anti_dissipative_cubic") {
      spec.system = presets::anti_dissipative_cubic();
    } else {
      throw ConfigError("unknown preset '" + spec.name + "' at " + r.at("preset") +
                        " (scalar_cubic, scalar_ou, ou_nd, triad, hypoelliptic_2d, anti_dissipative_cubic)");
    }
  } else {
    spec.name = "explicit";
    const Eigen::MatrixXd sigma = r.require_matrix("sigma");
    const auto dim = static_cast<std::size_t>(sigma.rows());
    const std::size_t degree = r.get_size("degree", max_term_degree(r, "terms"));
    if (degree < 1) throw ConfigError(r.at("degree") + " must be at least 1");
    spec.system = PolySystem(read_terms(r, "terms", dim, degree), sigma);
    spec.energy_scale = r.get_double("energy_scale", 1.0);
    bool linear = true;
    for (std::size_t k = 0; k <= degree; ++k)
      if (k != 1 && !spec.system.map(k).is_zero()) linear = false;
    if (linear) spec.linear_drift = spec.system.map(1).coefficients();
  }
  r.finish();
  return spec;
}

/// Exactly one of: "forcing": [e], "linear": {row, col, value},
/// "sigma": {row, col, value}, or explicit "terms" / "delta_sigma".
inline ParamDirection read_direction(Reader r, const PolySystem& sys) {
  const bool explicit_form = r.has("terms") || r.has("delta_sigma");
  const int forms = int(r.has("forcing")) + int(r.has("linear")) + int(r.has("sigma")) + int(explicit_form);
  if (forms != 1) throw ConfigError(r.path() + ": give exactly one of forcing, linear, sigma, or terms/delta_sigma");
  ParamDirection dir;
  if (r.has("forcing")) {
    dir = ParamDirection::forcing(sys, r.require_vector("forcing"));
  } else if (r.has("linear") || r.has("sigma")) {
    const bool linear = r.has("linear");
    Reader e = r.child(linear ? "linear" : "sigma");
    const std::size_t row = e.get_size("row", 0), col = e.get_size("col", 0);
    const double v = e.get_double("value", 1.0);
    e.finish();
    if (linear) {
      if (row >= sys.dim() || col >= sys.dim()) throw ConfigError(e.path() + ": index out of range");
      dir = ParamDirection::linear_entry(sys, row, col, v);
    } else {
      dir = ParamDirection::sigma_entry(sys, row, col, v);
    }
  } else {
    dir = ParamDirection::zero_like(sys);
    dir.delta_maps = read_terms(r, "terms", sys.dim(), sys.degree());
    dir.delta_sigma = r.get_matrix("delta_sigma", dir.delta_sigma);
    if (dir.delta_sigma.rows() != sys.sigma().rows() || dir.delta_sigma.cols() != sys.sigma().cols())
      throw ConfigError(r.at("delta_sigma") + " must have the shape of the noise matrix");
    dir.check_against(sys);
  }
  r.finish();
  return dir;
}

inline void read_scheme(Reader r, SchemeConfig& s) {
  s.dt = r.get_double("dt", s.dt);
  const std::string m = r.get_string("method", scheme_name(s.scheme));
  if (m == "tamed-euler") s.scheme = Scheme::tamed_euler;
  else if (m == "euler") s.scheme = Scheme::euler;
  else throw ConfigError(r.at("method") + " must be 'tamed-euler' or 'euler'");
  s.divergence_ceiling = r.get_double("divergence_ceiling", s.divergence_ceiling);
  r.finish();
  s.validate();
}

inline void read_ensemble(Reader r, EnsembleConfig& e, bool with_samples = true) {
  e.burn_in = r.get_double("burn_in", e.burn_in);
  if (with_samples) e.n_samples = r.get_size("n_samples", e.n_samples);
  e.thinning = r.get_double("thinning", e.thinning);
  e.n_streams = r.get_size("n_streams", e.n_streams);
  r.finish();
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys are rejected; every
/// default is echoed into cfg.resolved.
inline RunConfig load_config(const json& doc) {
  RunConfig cfg;
  Reader r(doc, "", cfg.resolved);
  cfg.command = parse_command(r.require_string("command"));
  cfg.master_seed = r.get_u64("master_seed", 1);
  cfg.output = r.get_string("output", "");

  const bool needs_system = cfg.command != Command::testbed;
  if (needs_system) {
    cfg.system = detail::read_system(r.child("system"));
    const auto& sys = cfg.system->system;
    cfg.observable = r.get_string("observable", "x1");
    (void)observables::by_name(cfg.observable, sys.dim());
    detail::read_scheme(r.child("scheme"), cfg.scheme);
    detail::read_ensemble(r.child("ensemble"), cfg.ensemble);
    cfg.ensemble.validate(sys.dim());

    const bool needs_direction =
        cfg.command == Command::response || cfg.command == Command::oracle || cfg.command == Command::compare;
    if (needs_direction) {
      if (!r.has("direction")) throw ConfigError("missing required key 'direction'");
      cfg.direction = detail::read_direction(r.child("direction"), sys);

      Reader rr = r.child("response");
      cfg.methods = rr.get_strings("methods", cfg.command == Command::compare
                                                  ? std::vector<std::string>{"tangent", "finite-difference"}
                                                  : std::vector<std::string>{"tangent"});
      for (const auto& m : cfg.methods)
        if (m != "tangent" && m != "green-kubo" && m != "finite-difference")
          throw ConfigError(rr.at("methods") + ": unknown method '" + m +
                            "' (tangent, green-kubo, finite-difference)");
      cfg.response.n_paths = rr.get_size("n_paths", cfg.response.n_paths);
      cfg.response.horizon = rr.get_double("horizon", cfg.response.horizon);
      cfg.response.record_interval = rr.get_double("record_interval", cfg.response.record_interval);
      cfg.response.window_begin = rr.get_double("window_begin", cfg.response.begin());
      cfg.response.window_end = rr.get_double("window_end", cfg.response.end());
      cfg.response.batches = rr.get_size("batches", cfg.response.batches);
      cfg.response.drift_rtol = rr.get_double("drift_rtol", cfg.response.drift_rtol);
      cfg.current = rr.get_string("current", "auto");
      if (cfg.current != "auto" && cfg.current != "exact" && cfg.current != "quasi-gaussian")
        throw ConfigError(rr.at("current") + " must be 'auto', 'exact' or 'quasi-gaussian'");
      detail::read_ensemble(rr.child("start"), cfg.response.start, false);
      rr.finish();
      cfg.response.validate(sys.dim());

      Reader fr = r.child("fd");
      const double da = fr.get_double("delta_a", default_delta_a(*cfg.direction));
      cfg.fd.delta_a = da;
      cfg.fd.crn = fr.get_bool("crn", cfg.fd.crn);
      cfg.fd.richardson = fr.get_bool("richardson", cfg.fd.richardson);
      detail::read_ensemble(fr.child("ensemble"), cfg.fd.ensemble);
      fr.finish();
      if (cfg.fd.delta_a == 0.0 || !std::isfinite(cfg.fd.delta_a)) throw ConfigError("fd.delta_a must be finite and nonzero");
      cfg.fd.ensemble.validate(sys.dim());
    }

    if (cfg.command == Command::check) {
      Reader cr = r.child("check");
      cfg.check.n_directions = cr.get_size("n_directions", cfg.check.n_directions);
      cfg.check.radii = cr.get_doubles("radii", cfg.check.radii);
      cfg.check.coercivity_tol = cr.get_double("coercivity_tol", cfg.check.coercivity_tol);
      cfg.check.span_tol = cr.get_double("span_tol", cfg.check.span_tol);
      cr.finish();
    }

    if (cfg.command == Command::gap_probe) {
      const WeightConfig def = default_weights(cfg.system->energy_scale);
      Reader wr = r.child("weights");
      cfg.weights.eta = wr.get_double("eta", def.eta);
      cfg.weights.beta = wr.get_double("beta", def.beta);
      cfg.weights.delta = wr.get_double("delta", def.delta);
      wr.finish();
      cfg.weights.validate();
      Reader pr = r.child("probe");
      ProbeConfig& p = cfg.probe;
      p.x_star = pr.get_vector("x_star", Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.dim())));
      check_state(sys, p.x_star, "probe.x_star");
      p.eps = pr.get_double("eps", p.eps);
      p.level = pr.get_double("level", p.level);
      p.n_pairs = pr.get_size("n_pairs", p.n_pairs);
      p.horizon = pr.get_double("horizon", p.horizon);
      p.n_couplings = pr.get_size("n_couplings", p.n_couplings);
      p.close_separation = pr.get_double("close_separation", p.close_separation);
      p.far_radius = pr.get_double("far_radius", p.far_radius);
      p.sample_radius = pr.get_double("sample_radius", p.sample_radius);
      p.n_hit_paths = pr.get_size("n_hit_paths", p.n_hit_paths);
      p.confidence = pr.get_double("confidence", p.confidence);
      p.quad_points = pr.get_size("quad_points", p.quad_points);
      cfg.n_starts = pr.get_size("n_starts", cfg.n_starts);
      pr.finish();
      p.validate();
      (void)p.region_radius(cfg.weights);
    }
  } else {
    Reader tr = r.child("testbed");
    const bool random = tr.has("random");
    if (random && (tr.has("P0") || tr.has("dP"))) throw ConfigError("testbed: give either random or P0/dP, not both");
    try {
      if (random) {
        Reader rr = tr.child("random");
        const std::size_t S = rr.get_size("states", 5);
        const std::uint64_t seed = rr.get_u64("seed", 1);
        rr.finish();
        cfg.testbed.family = testbed::random_family(S, seed);
      } else {
        const Eigen::MatrixXd P0 = tr.require_matrix("P0");
        const Eigen::MatrixXd dP = tr.require_matrix("dP");
        cfg.testbed.family.emplace(P0, dP);
      }
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      if (what.rfind("testbed", 0) == 0 || what.rfind("unknown key", 0) == 0 || what.rfind("missing", 0) == 0) throw;
      throw ConfigError("testbed." + what);
    }
    const auto S = static_cast<Eigen::Index>(cfg.testbed.family->states());
    Eigen::VectorXd phi_def = Eigen::VectorXd::LinSpaced(S, 0.0, static_cast<double>(S - 1));
    cfg.testbed.phi = tr.get_vector("phi", phi_def);
    if (cfg.testbed.phi.size() != S) throw ConfigError("testbed.phi must have one entry per state");
    cfg.testbed.powers = tr.get_sizes("powers", cfg.testbed.powers);
    for (std::size_t m : cfg.testbed.powers)
      if (m < 1) throw ConfigError("testbed.powers entries must be at least 1");
    cfg.testbed.weights = tr.get_vector("weights", Eigen::VectorXd::Ones(S));
    if (cfg.testbed.weights.size() != S) throw ConfigError("testbed.weights must have one entry per state");
    (void)testbed::ChainWeights(cfg.testbed.weights);
    cfg.testbed.a_list = tr.get_doubles("a_list", cfg.testbed.a_list);
    for (double a : cfg.testbed.a_list)
      if (!cfg.testbed.family->valid(a) || a == 0.0)
        throw ConfigError("testbed.a_list: " + std::to_string(a) + " is zero or outside the validity interval");
    tr.finish();
  }
  r.finish();
  return cfg;
}

}  // namespace fdtlab::cli
