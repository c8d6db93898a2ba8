#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/assumptions.hpp"
#include "fdtlab/ensemble.hpp"
#include "fdtlab/error.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/observable.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"
#include "fdtlab/statistics.hpp"

namespace fdtlab {

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

/// What an estimate refers to. System and direction are content
/// fingerprints so estimates of different targets cannot be mixed silently.
struct Target {
  std::string system;
  std::string direction;
  std::string observable;

  friend bool operator==(const Target&, const Target&) = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::string scheme;
  std::size_t n = 0;  ///< paths, or samples per side for finite differences
  double burn_in = 0.0;
  double horizon = 0.0;
  double delta_a = std::numeric_limits<double>::quiet_NaN();
  std::size_t batches = 0;
  bool crn = false;
};

struct ResponseEstimate {
  double value = 0.0;
  double stderr = 0.0;      ///< total: statistical and systematic in quadrature
  double stat_stderr = 0.0;
  double systematic = 0.0;
  std::string method;       ///< tangent | green-kubo | finite-difference
  Target target;
  Provenance provenance;
  std::vector<std::string> flags;
};

struct Plateau {
  double value = 0.0;
  double stderr = 0.0;
  double stat_stderr = 0.0;
  double systematic = 0.0;
  double drift = 0.0;  ///< change of the fitted line across the window
  double drift_stderr = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
  bool detected = false;
};

struct ResponseCurve {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<double> stderr;
  Plateau plateau;
  std::string method;
  Target target;
  Provenance provenance;

  ResponseEstimate estimate() const {
    ResponseEstimate e;
    e.value = plateau.value;
    e.stderr = plateau.stderr;
    e.stat_stderr = plateau.stat_stderr;
    e.systematic = plateau.systematic;
    e.method = method;
    e.target = target;
    e.provenance = provenance;
    if (!plateau.detected) e.flags.push_back("plateau_absent");
    return e;
  }
};

// ---------------------------------------------------------------------------
// Fingerprints
// ---------------------------------------------------------------------------

namespace detail {

inline void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
}

inline void fnv_matrix(std::uint64_t& h, const Eigen::MatrixXd& m) {
  const std::int64_t shape[2] = {m.rows(), m.cols()};
  fnv_bytes(h, shape, sizeof(shape));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m(i) == 0.0 ? 0.0 : m(i);  // fold -0 into +0
    fnv_bytes(h, &v, sizeof(v));
  }
}

inline std::string hex64(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
  return s;
}

}  // namespace detail

inline std::string fingerprint(const PolySystem& sys) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& m : sys.maps()) detail::fnv_matrix(h, m.coefficients());
  detail::fnv_matrix(h, sys.sigma());
  return detail::hex64(h);
}

inline std::string fingerprint(const ParamDirection& dir) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& m : dir.delta_maps) detail::fnv_matrix(h, m.coefficients());
  detail::fnv_matrix(h, dir.delta_sigma);
  return detail::hex64(h);
}

inline Target make_target(const PolySystem& sys, const ParamDirection& dir, const Observable& phi) {
  return {fingerprint(sys), fingerprint(dir), phi.name};
}

// ---------------------------------------------------------------------------
// Curve accumulation shared by the tangent and Green-Kubo estimators
// ---------------------------------------------------------------------------

struct ResponseConfig {
  std::size_t n_paths = 10000;
  double horizon = 5.0;
  double record_interval = 0.05;
  double window_begin = -1.0;  ///< negative: horizon / 2
  double window_end = -1.0;    ///< negative: horizon
  std::size_t batches = 20;
  double drift_rtol = 0.01;
  /// Generates the stationary start points; n_samples is set to n_paths.
  EnsembleConfig start{10.0, 0, 0.1, 20, {}};

  void validate(std::size_t dim) const {
    if (n_paths < 2) throw ConfigError("response.n_paths must be at least 2");
    if (!(horizon > 0.0)) throw ConfigError("response.horizon must be positive");
    if (!(record_interval > 0.0)) throw ConfigError("response.record_interval must be positive");
    if (batches < 2) throw ConfigError("response.batches must be at least 2");
    if (batches > n_paths) throw ConfigError("response.batches must not exceed n_paths");
    if (!(drift_rtol >= 0.0)) throw ConfigError("response.drift_rtol must be non-negative");
    const double b = begin(), e = end();
    if (!(b >= 0.0 && e > b && e <= horizon + 1e-12)) throw ConfigError("response window must satisfy 0 <= begin < end <= horizon");
    EnsembleConfig s = start;
    s.n_samples = n_paths;
    s.validate(dim);
  }
  double begin() const { return window_begin < 0.0 ? 0.5 * horizon : window_begin; }
  double end() const { return window_end < 0.0 ? horizon : window_end; }
};

namespace detail {

struct Grid {
  std::size_t stride = 1;  ///< integrator steps between records
  std::size_t points = 0;  ///< including t = 0
  double dt = 0.0;
  double time(std::size_t k) const { return static_cast<double>(k * stride) * dt; }
};

inline Grid make_grid(const ResponseConfig& rc, const SchemeConfig& cfg) {
  Grid g;
  g.dt = cfg.dt;
  g.stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rc.record_interval / cfg.dt)));
  const std::size_t steps = cfg.steps_for(rc.horizon);
  g.points = (steps + g.stride - 1) / g.stride + 1;
  return g;
}

inline double batch_stderr(std::span<const double> per_path, std::size_t batches) {
  return batch_means(per_path, batches).stderr;
}

/// Runs `path(i, out)` for every path, where `out` receives R_i at the grid
/// points, and reduces into a curve with batch-means errors and a plateau fit.
/// Paths are processed in contiguous chunks (one chunk per batch) and the
/// chunks are reduced in order, so the result is independent of worker count.
template <typename PathFn>
ResponseCurve accumulate_curve(const ResponseConfig& rc, const Grid& grid, PathFn&& path) {
  const std::size_t n = rc.n_paths;
  const std::size_t B = rc.batches;
  const std::size_t K = grid.points;

  std::vector<std::size_t> w_idx;
  for (std::size_t k = 0; k < K; ++k) {
    const double t = grid.time(k);
    if (t >= rc.begin() - 1e-9 && t <= rc.end() + 1e-9) w_idx.push_back(k);
  }
  if (w_idx.size() < 2) throw ConfigError("response window contains fewer than two grid points; lower record_interval");
  double t_bar = 0.0;
  for (std::size_t k : w_idx) t_bar += grid.time(k);
  t_bar /= static_cast<double>(w_idx.size());
  double sxx = 0.0;
  for (std::size_t k : w_idx) sxx += (grid.time(k) - t_bar) * (grid.time(k) - t_bar);

  std::vector<double> chunk_sums(B * K, 0.0);
  std::vector<double> window_mean(n), window_slope(n);
  parallel_for(B, [&](std::size_t b) {
    const std::size_t lo = b * n / B, hi = (b + 1) * n / B;
    std::vector<double> buf(K);
    for (std::size_t i = lo; i < hi; ++i) {
      path(i, std::span<double>(buf));
      for (std::size_t k = 0; k < K; ++k) chunk_sums[b * K + k] += buf[k];
      double m = 0.0, s = 0.0;
      for (std::size_t k : w_idx) {
        m += buf[k];
        s += (grid.time(k) - t_bar) * buf[k];
      }
      window_mean[i] = m / static_cast<double>(w_idx.size());
      window_slope[i] = s / sxx;
    }
  });

  ResponseCurve c;
  c.t.resize(K);
  c.value.resize(K);
  c.stderr.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    c.t[k] = grid.time(k);
    RunningStats means;
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double cnt = static_cast<double>((b + 1) * n / B - b * n / B);
      total += chunk_sums[b * K + k];
      means.add(chunk_sums[b * K + k] / cnt);
    }
    c.value[k] = total / static_cast<double>(n);
    c.stderr[k] = means.stderr_of_mean();
  }

  Plateau& p = c.plateau;
  p.t_begin = grid.time(w_idx.front());
  p.t_end = grid.time(w_idx.back());
  const double width = p.t_end - p.t_begin;
  const auto wm = batch_means(window_mean, B);
  const auto ws = batch_means(window_slope, B);
  p.value = wm.mean;
  p.stat_stderr = wm.stderr;
  p.drift = ws.mean * width;
  p.drift_stderr = ws.stderr * width;
  const bool flat = std::abs(p.drift) <= 2.0 * p.drift_stderr;
  p.detected = flat || std::abs(p.drift) <= rc.drift_rtol * std::abs(p.value);
  // A significant residual drift is carried as a systematic error.
  p.systematic = flat ? 0.0 : std::abs(p.drift);
  p.stderr = std::hypot(p.stat_stderr, p.systematic);
  return c;
}

inline Ensemble start_ensemble(const PolySystem& sys, const ResponseConfig& rc, const SchemeConfig& cfg,
                               std::uint64_t seed, const Ensemble* given) {
  if (given) {
    if (given->size() < rc.n_paths)
      throw ConfigError("response: start ensemble has " + std::to_string(given->size()) + " samples, need " +
                        std::to_string(rc.n_paths));
    if (given->samples.cols() != static_cast<Eigen::Index>(sys.dim()))
      throw ConfigError("response: start ensemble has the wrong dimension");
    return *given;
  }
  EnsembleConfig ec = rc.start;
  ec.n_samples = rc.n_paths;
  return sample_stationary(sys, cfg, ec, derive_seed(seed, "start"));
}

inline Provenance curve_provenance(const ResponseConfig& rc, const SchemeConfig& cfg, std::uint64_t seed,
                                   const Ensemble& start) {
  Provenance p;
  p.seed = seed;
  p.dt = cfg.dt;
  p.scheme = scheme_name(cfg.scheme);
  p.n = rc.n_paths;
  p.burn_in = start.burn_in;
  p.horizon = rc.horizon;
  p.batches = rc.batches;
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tangent (variation of constants) estimator
// ---------------------------------------------------------------------------

/// R(t) = E[grad phi(x_t) . S_t] from stationary starts with S_0 = 0.
/// Path i starts at row i of the start ensemble and uses
/// RngStream(derive_seed(seed, "tangent"), i).
inline ResponseCurve tangent_response(const PolySystem& sys, const ParamDirection& dir, const Observable& phi,
                                      const ResponseConfig& rc, const SchemeConfig& cfg, std::uint64_t seed,
                                      const Ensemble* start = nullptr) {
  cfg.validate();
  rc.validate(sys.dim());
  dir.check_against(sys);
  if (!phi.has_gradient()) throw ConfigError("tangent_response: observable '" + phi.name + "' has no gradient");
  const Ensemble ens = detail::start_ensemble(sys, rc, cfg, seed, start);
  SchemeConfig c = cfg;
  c.track_tangent = true;
  c.track_jacobian = c.track_second_variation = c.track_malliavin = false;
  const auto grid = detail::make_grid(rc, c);
  const std::uint64_t path_seed = derive_seed(seed, "tangent");

  auto path = [&](std::size_t i, std::span<double> out) {
    Stepper stepper(sys, &dir, c);
    const RngStream rng(path_seed, i);
    AugmentedState st = AugmentedState::initial(ens.row(i), c);
    out[0] = 0.0;
    try {
      for (std::size_t k = 1; k < grid.points; ++k) {
        for (std::size_t j = 0; j < grid.stride; ++j) stepper.advance(st, rng);
        out[k] = phi.gradient(st.x).dot(st.S);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("tangent_response: path " + std::to_string(i) + " diverged", e.last_finite_state(),
                            e.step(), i);
    }
  };
  ResponseCurve curve = detail::accumulate_curve(rc, grid, path);
  curve.method = "tangent";
  curve.target = make_target(sys, dir, phi);
  curve.provenance = detail::curve_provenance(rc, c, seed, ens);
  return curve;
}

// ---------------------------------------------------------------------------
// Green-Kubo estimator
// ---------------------------------------------------------------------------

/// How grad H is obtained for the conjugate current J = F . grad H - div F.
struct CurrentSpec {
  enum class Mode { exact, quasi_gaussian };
  Mode mode = Mode::quasi_gaussian;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_H;  ///< exact mode only
  std::string description = "quasi-gaussian";

  static CurrentSpec quasi_gaussian() { return {}; }

  static CurrentSpec exact(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_H, std::string description) {
    CurrentSpec c;
    c.mode = Mode::exact;
    c.grad_H = std::move(grad_H);
    c.description = std::move(description);
    return c;
  }

  /// H(x) = (x - m)^T C^{-1} (x - m) / 2.
  static CurrentSpec gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::string description) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size()) throw ConfigError("gaussian current: shape mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("gaussian current: covariance is not positive definite");
    const Eigen::MatrixXd P = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    return exact([P, mean](const Eigen::VectorXd& x) -> Eigen::VectorXd { return P * (x - mean); },
                 std::move(description));
  }
};

/// Exact H for gradient drift with isotropic noise, N = -grad U and
/// Sigma = s I: the invariant density is exp(-2 U / s^2), so grad H = -2 N / s^2.
/// Every 1-d system qualifies. Refuses when the Jacobian is visibly
/// non-symmetric or the noise is not isotropic.
inline CurrentSpec gradient_system_current(const PolySystem& sys) {
  const auto d = static_cast<Eigen::Index>(sys.dim());
  const Eigen::MatrixXd& S = sys.sigma();
  if (S.cols() != d) throw UnsupportedMethodError("exact current: noise matrix must be square and isotropic");
  const double s = S(0, 0);
  if (!(s != 0.0) || !(S - s * Eigen::MatrixXd::Identity(d, d)).isZero(1e-14 * std::abs(s)))
    throw UnsupportedMethodError("exact current: noise matrix must be a nonzero multiple of the identity");
  const auto dirs = sphere_directions(sys.dim(), 16);
  for (const auto& u : dirs) {
    const auto der = eval_derivatives(sys, u, u, u);
    if (!(der.jacobian - der.jacobian.transpose()).isZero(1e-12 * (1.0 + der.jacobian.norm())))
      throw UnsupportedMethodError("exact current: drift is not a gradient field");
  }
  auto kernel = std::make_shared<DriftKernel>(sys.maps());
  const double scale = -2.0 / (s * s);
  return CurrentSpec::exact(
      [kernel, scale](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd n;
        kernel->drift(x, n);
        return scale * n;
      },
      "exact gradient-system potential");
}

/// R(t) = int_0^t E[(J(x_0) - <J>) (phi(x_s) - <phi>)] ds by the trapezoidal
/// rule on the integrator grid. Path i uses
/// RngStream(derive_seed(seed, "green-kubo"), i).
inline ResponseCurve green_kubo_response(const PolySystem& sys, const ParamDirection& dir, const Observable& phi,
                                         const CurrentSpec& current, const ResponseConfig& rc,
                                         const SchemeConfig& cfg, std::uint64_t seed, const Ensemble* start = nullptr) {
  dir.check_against(sys);
  if (dir.perturbs_noise())
    throw UnsupportedMethodError(
        "green_kubo_response: the direction perturbs the noise matrix; the conjugate current only covers drift "
        "perturbations (use tangent or finite-difference)");
  cfg.validate();
  rc.validate(sys.dim());
  if (current.mode == CurrentSpec::Mode::exact && !current.grad_H)
    throw ConfigError("green_kubo_response: exact current needs grad H");
  const Ensemble ens = detail::start_ensemble(sys, rc, cfg, seed, start);
  const auto d = static_cast<Eigen::Index>(sys.dim());
  const std::size_t n = rc.n_paths;

  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_H = current.grad_H;
  if (current.mode == CurrentSpec::Mode::quasi_gaussian) {
    const Eigen::MatrixXd X = ens.samples.topRows(static_cast<Eigen::Index>(n));
    const Eigen::VectorXd m = X.colwise().mean().transpose();
    const Eigen::MatrixXd Xc = X.rowwise() - m.transpose();
    const Eigen::MatrixXd C = (Xc.transpose() * Xc) / static_cast<double>(n - 1);
    grad_H = CurrentSpec::gaussian(m, C, "quasi-gaussian").grad_H;
  }

  const DriftKernel F(dir.delta_maps);
  std::vector<double> J(n), phi0(n);
  parallel_for(n, [&](std::size_t i) {
    const Eigen::VectorXd x = ens.row(i);
    Eigen::VectorXd f;
    Eigen::MatrixXd DF;
    F.evaluate(x, &f, &DF, nullptr);
    if (f.size() == 0) {
      f = Eigen::VectorXd::Zero(d);
      DF = Eigen::MatrixXd::Zero(d, d);
    }
    J[i] = f.dot(grad_H(x)) - DF.trace();
    phi0[i] = phi.value(x);
  });
  double J_bar = 0.0, phi_bar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    J_bar += J[i];
    phi_bar += phi0[i];
  }
  J_bar /= static_cast<double>(n);
  phi_bar /= static_cast<double>(n);

  SchemeConfig c = cfg;
  c.track_jacobian = c.track_second_variation = c.track_malliavin = c.track_tangent = false;
  const auto grid = detail::make_grid(rc, c);
  const std::uint64_t path_seed = derive_seed(seed, "green-kubo");
  const double dt = c.dt;

  auto path = [&](std::size_t i, std::span<double> out) {
    Stepper stepper(sys, nullptr, c);
    const RngStream rng(path_seed, i);
    AugmentedState st = AugmentedState::initial(ens.row(i), c);
    const double j0 = J[i] - J_bar;
    double prev = phi0[i] - phi_bar;
    double integral = 0.0;
    out[0] = 0.0;
    try {
      for (std::size_t k = 1; k < grid.points; ++k) {
        for (std::size_t s = 0; s < grid.stride; ++s) {
          stepper.advance(st, rng);
          const double cur = phi.value(st.x) - phi_bar;
          integral += 0.5 * dt * (prev + cur);
          prev = cur;
        }
        out[k] = j0 * integral;
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("green_kubo_response: path " + std::to_string(i) + " diverged", e.last_finite_state(),
                            e.step(), i);
    }
  };
  ResponseCurve curve = detail::accumulate_curve(rc, grid, path);
  curve.method = "green-kubo";
  curve.target = make_target(sys, dir, phi);
  curve.provenance = detail::curve_provenance(rc, c, seed, ens);
  return curve;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

struct FdConfig {
  double delta_a = 0.0;  ///< must be set; see default_delta_a
  bool crn = true;
  bool richardson = true;  ///< repeat at delta_a / 2 and flag nonlinearity
  EnsembleConfig ensemble{10.0, 100000, 0.05, 40, {}};
  std::size_t coercivity_directions = 64;
  std::vector<double> coercivity_radii{0.5, 1.0, 2.0, 4.0, 8.0};
  double coercivity_tol = 1e-10;
};

/// 0.1 divided by the largest coefficient of the direction.
inline double default_delta_a(const ParamDirection& dir) {
  double m = dir.delta_sigma.size() > 0 ? dir.delta_sigma.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& k : dir.delta_maps)
    if (k.coefficients().size() > 0) m = std::max(m, k.coefficients().cwiseAbs().maxCoeff());
  if (!(m > 0.0)) throw ConfigError("default_delta_a: direction is zero");
  return 0.1 / m;
}

namespace detail {

struct StreamMeans {
  std::vector<double> all, first, second;
};

inline StreamMeans stream_means(const Ensemble& e, const Observable& phi) {
  StreamMeans out;
  for (std::size_t s = 0; s < e.n_streams(); ++s) {
    const std::size_t lo = e.stream_offsets[s], cnt = e.stream_counts[s];
    double a = 0.0, f = 0.0, g = 0.0;
    const std::size_t half = cnt / 2;
    for (std::size_t k = 0; k < cnt; ++k) {
      const double v = phi.value(e.row(lo + k));
      a += v;
      (k < half ? f : g) += v;
    }
    out.all.push_back(cnt ? a / static_cast<double>(cnt) : 0.0);
    out.first.push_back(half ? f / static_cast<double>(half) : 0.0);
    out.second.push_back(cnt - half ? g / static_cast<double>(cnt - half) : 0.0);
  }
  return out;
}

/// Per-stream central differences at step h.
struct FdPass {
  std::vector<double> diff;   ///< per stream
  std::vector<double> drift;  ///< per stream: second-half minus first-half difference
  double value = 0.0;
};

inline FdPass fd_pass(const PolySystem& sys, const ParamDirection& dir, const Observable& phi, double h,
                      const FdConfig& fc, const SchemeConfig& cfg, std::uint64_t seed_plus,
                      std::uint64_t seed_minus) {
  const PolySystem plus = apply_direction(sys, dir, h);
  const PolySystem minus = apply_direction(sys, dir, -h);
  const auto mp = stream_means(sample_stationary(plus, cfg, fc.ensemble, seed_plus), phi);
  const auto mm = stream_means(sample_stationary(minus, cfg, fc.ensemble, seed_minus), phi);
  FdPass out;
  RunningStats v;
  for (std::size_t s = 0; s < mp.all.size(); ++s) {
    const double dv = (mp.all[s] - mm.all[s]) / (2.0 * h);
    out.diff.push_back(dv);
    out.drift.push_back(((mp.second[s] - mm.second[s]) - (mp.first[s] - mm.first[s])) / (2.0 * h));
    v.add(dv);
  }
  out.value = v.mean;
  return out;
}

}  // namespace detail

/// Central difference of stationary averages at a_0 +- delta_a. Stream s of
/// the plus run and stream s of the minus run form a pair; under CRN both use
/// the same noise. Errors come from the spread of per-stream differences.
inline ResponseEstimate finite_difference_oracle(const PolySystem& sys, const ParamDirection& dir,
                                                 const Observable& phi, const FdConfig& fc, const SchemeConfig& cfg,
                                                 std::uint64_t seed) {
  cfg.validate();
  dir.check_against(sys);
  if (fc.delta_a == 0.0 || !std::isfinite(fc.delta_a))
    throw ConfigError("finite_difference_oracle: delta_a must be finite and nonzero");
  if (fc.ensemble.n_streams < 2) throw ConfigError("finite_difference_oracle: need at least 2 streams for errors");
  if (fc.ensemble.n_samples < 2 * fc.ensemble.n_streams)
    throw ConfigError("finite_difference_oracle: need at least 2 samples per stream");
  const double h = std::abs(fc.delta_a);
  for (double a : {h, -h}) {
    const auto rep = coercivity_probe(apply_direction(sys, dir, a), fc.coercivity_directions, fc.coercivity_radii,
                                      fc.coercivity_tol);
    if (!rep.pass)
      throw AssumptionError("finite_difference_oracle: coercivity fails at a = " + std::to_string(a) +
                            " (top-degree radial value " + std::to_string(rep.top_degree_radial) + ")");
  }

  const std::uint64_t seed_plus = derive_seed(seed, "fd-plus");
  const std::uint64_t seed_minus = fc.crn ? seed_plus : derive_seed(seed, "fd-minus");
  const auto main = detail::fd_pass(sys, dir, phi, h, fc, cfg, seed_plus, seed_minus);

  ResponseEstimate est;
  est.method = "finite-difference";
  est.target = make_target(sys, dir, phi);
  est.value = main.value;
  est.stat_stderr = mean_and_stderr(main.diff).stderr;

  double sys2 = 0.0;
  const auto drift = mean_and_stderr(main.drift);
  if (std::abs(drift.mean) > 2.0 * drift.stderr) {
    est.flags.push_back("burn_in_drift");
    sys2 += drift.mean * drift.mean;
  }
  if (fc.richardson) {
    const auto half = detail::fd_pass(sys, dir, phi, 0.5 * h, fc, cfg, seed_plus, seed_minus);
    std::vector<double> gap(main.diff.size());
    for (std::size_t s = 0; s < gap.size(); ++s) gap[s] = main.diff[s] - half.diff[s];
    const auto g = mean_and_stderr(gap);
    if (std::abs(g.mean) > 2.0 * g.stderr) {
      est.flags.push_back("nonlinear");
      // The O(h^2) bias at h is 4/3 of the observed gap between h and h/2.
      const double bias = 4.0 * std::abs(g.mean) / 3.0;
      sys2 += bias * bias;
    }
  }
  est.systematic = std::sqrt(sys2);
  est.stderr = std::hypot(est.stat_stderr, est.systematic);

  Provenance& p = est.provenance;
  p.seed = seed;
  p.dt = cfg.dt;
  p.scheme = scheme_name(cfg.scheme);
  p.n = fc.ensemble.n_samples;
  p.burn_in = fc.ensemble.burn_in;
  p.delta_a = h;
  p.crn = fc.crn;
  p.batches = fc.ensemble.n_streams;
  return est;
}

// ---------------------------------------------------------------------------
// Cross-estimator comparison
// ---------------------------------------------------------------------------

struct Comparison {
  std::vector<ResponseEstimate> estimates;
  Eigen::MatrixXd z;  ///< (v_i - v_j) / sqrt(s_i^2 + s_j^2)
  double max_abs_z = 0.0;
  bool consensus = false;
  std::optional<std::size_t> outlier;  ///< set when consensus fails and one estimate stands out
};

inline Comparison compare_estimates(const std::vector<ResponseEstimate>& estimates, double threshold = 3.0) {
  if (estimates.size() < 2) throw ConfigError("compare_estimates: need at least two estimates");
  for (std::size_t i = 1; i < estimates.size(); ++i)
    if (!(estimates[i].target == estimates[0].target))
      throw ConfigError("compare_estimates: estimate " + std::to_string(i) +
                        " refers to a different system, direction or observable");
  Comparison c;
  c.estimates = estimates;
  const auto n = static_cast<Eigen::Index>(estimates.size());
  c.z = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = estimates[static_cast<std::size_t>(i)];
      const auto& b = estimates[static_cast<std::size_t>(j)];
      const double s = std::hypot(a.stderr, b.stderr);
      const double diff = a.value - b.value;
      c.z(i, j) = s > 0.0 ? diff / s : (diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff));
      c.max_abs_z = std::max(c.max_abs_z, std::abs(c.z(i, j)));
    }
  c.consensus = c.max_abs_z < threshold;
  if (!c.consensus && n >= 3) {
    const Eigen::VectorXd score = c.z.cwiseAbs().rowwise().sum();
    Eigen::Index best = 0;
    score.maxCoeff(&best);
    std::size_t ties = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (score[i] == score[best]) ++ties;
    if (ties == 1) c.outlier = static_cast<std::size_t>(best);
  }
  return c;
}

}  // namespace fdtlab
