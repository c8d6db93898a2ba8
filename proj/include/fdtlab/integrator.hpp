#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"

namespace fdtlab {

enum class Scheme {
  tamed_euler,  ///< x + dt N(x) / (1 + dt |N(x)|) + Sigma dW
  euler,        ///< plain Euler-Maruyama; only safe for globally Lipschitz drift
};

inline const char* scheme_name(Scheme s) { return s == Scheme::tamed_euler ? "tamed-euler" : "euler"; }

struct SchemeConfig {
  double dt = 1e-3;
  Scheme scheme = Scheme::tamed_euler;
  bool track_jacobian = false;
  bool track_second_variation = false;
  bool track_malliavin = false;
  bool track_tangent = false;
  double divergence_ceiling = 1e8;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("scheme.dt must be positive");
    if (dt > 0.5) throw ConfigError("scheme.dt must not exceed 0.5");
    if (track_second_variation && !track_jacobian)
      throw ConfigError("scheme: tracking the second variation requires tracking the Jacobian");
    if (!(divergence_ceiling > 0.0)) throw ConfigError("scheme.divergence_ceiling must be positive");
  }

  std::size_t steps_for(double duration) const {
    if (duration <= 0.0) return 0;
    return static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
  }
};

/// State co-propagated along one path. Untracked members are left empty.
struct AugmentedState {
  double t = 0.0;
  std::uint64_t step = 0;
  Eigen::VectorXd x;
  Eigen::MatrixXd J;   ///< J_{0,t}
  Eigen::MatrixXd J2;  ///< d x d^2, column a*d+b = J^(2)_{0,t}(e_a, e_b)
  Eigen::VectorXd S;   ///< d x_t / d a along the active ParamDirection
  Eigen::MatrixXd M;   ///< Malliavin matrix

  static AugmentedState initial(const Eigen::VectorXd& x0, const SchemeConfig& cfg) {
    AugmentedState st;
    st.x = x0;
    const Eigen::Index d = x0.size();
    if (cfg.track_jacobian) st.J = Eigen::MatrixXd::Identity(d, d);
    if (cfg.track_second_variation) st.J2 = Eigen::MatrixXd::Zero(d, d * d);
    if (cfg.track_tangent) st.S = Eigen::VectorXd::Zero(d);
    if (cfg.track_malliavin) st.M = Eigen::MatrixXd::Zero(d, d);
    return st;
  }
};

/// Advances AugmentedStates in place with preallocated workspace.
///
/// J, J2 and S are propagated with the exact derivative of the discrete
/// update map (including the taming factor), so they coincide with finite
/// differences of the numerical flow under common noise. M follows
/// M <- G (M + dt Sigma Sigma^T) G^T with G = I + dt Df(x).
class Stepper {
 public:
  Stepper(const PolySystem& sys, const ParamDirection* dir, const SchemeConfig& cfg)
      : cfg_(cfg), kernel_(sys.maps()), sigma_(sys.sigma()) {
    cfg_.validate();
    const auto d = static_cast<Eigen::Index>(sys.dim());
    if (dir) {
      dir->check_against(sys);
      dir_kernel_ = DriftKernel(dir->delta_maps);
      dsigma_ = dir->delta_sigma;
    } else if (cfg_.track_tangent) {
      throw ConfigError("scheme: tracking the tangent requires a ParamDirection");
    }
    noise_cov_ = sigma_ * sigma_.transpose();
    n_.resize(d);
    dn_.resize(d);
    Dn_.resize(d, d);
    Df_.resize(d, d);
    G_.resize(d, d);
    dW_.resize(sigma_.cols());
    dh_.resize(d);
    dr_.resize(d);
    xnew_.resize(d);
  }

  const SchemeConfig& config() const { return cfg_; }
  std::size_t dim() const { return static_cast<std::size_t>(sigma_.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(sigma_.cols()); }

  /// Brownian increments for the given step: sqrt(dt) * N(0, I_M).
  void draw_noise(const RngStream& rng, std::uint64_t step, Eigen::VectorXd& dW) const {
    const double sdt = std::sqrt(cfg_.dt);
    dW.resize(sigma_.cols());
    const Eigen::Index m = sigma_.cols();
    for (Eigen::Index c = 0; c + 1 < m; c += 2) {
      const auto z = rng.normal_pair(step, static_cast<std::uint32_t>(c >> 1));
      dW[c] = sdt * z[0];
      dW[c + 1] = sdt * z[1];
    }
    if (m % 2 == 1) dW[m - 1] = sdt * rng.normal(step, static_cast<std::uint32_t>(m - 1));
  }

  void advance(AugmentedState& st, const RngStream& rng) {
    draw_noise(rng, st.step, dW_);
    advance(st, dW_);
  }

  /// One step with explicitly supplied Brownian increments.
  void advance(AugmentedState& st, const Eigen::VectorXd& dW) {
    const double dt = cfg_.dt;
    const bool need_jac = cfg_.track_jacobian || cfg_.track_malliavin || cfg_.track_tangent;
    const bool need_hess = cfg_.track_second_variation;
    kernel_.evaluate(st.x, &n_, need_jac ? &Dn_ : nullptr, need_hess ? &H_ : nullptr);

    const double r = n_.norm();
    double h = 1.0;
    bool smooth = false;  // taming factor differentiable here
    if (cfg_.scheme == Scheme::tamed_euler) {
      h = 1.0 / (1.0 + dt * r);
      smooth = r > 0.0;
    }

    if (need_jac) {
      Df_.noalias() = h * Dn_;
      if (smooth) {
        dr_.noalias() = Dn_.transpose() * n_ / r;  // gradient of |N(x)|
        dh_ = (-dt * h * h) * dr_;
        Df_.noalias() += n_ * dh_.transpose();
      }
      G_.setIdentity();
      G_.noalias() += dt * Df_;
    }

    xnew_ = st.x;
    xnew_.noalias() += (dt * h) * n_;
    xnew_.noalias() += sigma_ * dW;
    if (!xnew_.allFinite() || xnew_.norm() > cfg_.divergence_ceiling) {
      throw DivergenceError("trajectory diverged at step " + std::to_string(st.step + 1), st.x, st.step + 1);
    }

    if (cfg_.track_tangent) {
      Eigen::VectorXd& S = st.S;
      tmp_vec_.noalias() = G_ * S;
      S = tmp_vec_;
      if (!dir_kernel_.empty()) {
        dir_kernel_.drift(st.x, dn_);
        double dfda_n = 0.0;
        if (smooth) dfda_n = -dt * h * h * n_.dot(dn_) / r;
        S.noalias() += (dt * h) * dn_;
        S.noalias() += (dt * dfda_n) * n_;
      }
      if (dsigma_.size() > 0) S.noalias() += dsigma_ * dW;
    }

    if (cfg_.track_second_variation) advance_second_variation(st, h, r, smooth);
    if (cfg_.track_jacobian) {
      tmp_mat_.noalias() = G_ * st.J;
      st.J = tmp_mat_;
    }
    if (cfg_.track_malliavin) {
      tmp_mat_ = st.M + dt * noise_cov_;
      st.M.noalias() = G_ * tmp_mat_ * G_.transpose();
      tmp_mat_ = 0.5 * (st.M + st.M.transpose());
      st.M = tmp_mat_;
    }

    st.x.swap(xnew_);
    ++st.step;
    st.t = static_cast<double>(st.step) * dt;
  }

 private:
  // J2'(a, b) = G J2(a, b) + dt D^2 f(J e_a, J e_b), f = h(x) N(x).
  void advance_second_variation(AugmentedState& st, double h, double r, bool smooth) {
    const double dt = cfg_.dt;
    const Eigen::Index d = st.x.size();
    const Eigen::MatrixXd& J = st.J;
    Eigen::MatrixXd DnJ = Dn_ * J;  // columns Dn xi_a
    Eigen::VectorXd drJ;             // Dr . xi_a
    if (smooth) drJ = DnJ.transpose() * n_ / r;
    Eigen::MatrixXd next(d, d * d);
    Eigen::VectorXd d2n(d);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        d2n.setZero();
        for (Eigen::Index p = 0; p < d; ++p) {
          const double jpa = J(p, a);
          if (jpa == 0.0) continue;
          for (Eigen::Index q = 0; q < d; ++q) {
            const double w = jpa * J(q, b);
            if (w != 0.0) d2n.noalias() += w * H_.col(p * d + q);
          }
        }
        Eigen::VectorXd d2f = h * d2n;
        if (smooth) {
          const double dh_a = -dt * h * h * drJ[a];
          const double dh_b = -dt * h * h * drJ[b];
          const double d2r = (DnJ.col(a).dot(DnJ.col(b)) + n_.dot(d2n)) / r - drJ[a] * drJ[b] / r;
          const double d2h = 2.0 * dt * dt * h * h * h * drJ[a] * drJ[b] - dt * h * h * d2r;
          d2f += dh_b * DnJ.col(a) + dh_a * DnJ.col(b) + d2h * n_;
        }
        next.col(a * d + b) = G_ * st.J2.col(a * d + b) + dt * d2f;
      }
    }
    st.J2 = std::move(next);
  }

  SchemeConfig cfg_;
  DriftKernel kernel_;
  DriftKernel dir_kernel_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd dsigma_;
  Eigen::MatrixXd noise_cov_;

  Eigen::VectorXd n_, dn_, dW_, dh_, dr_, xnew_, tmp_vec_;
  Eigen::MatrixXd Dn_, Df_, G_, H_, tmp_mat_;
};

/// Single step returning a new state. Convenience wrapper; loops should hold a Stepper.
inline AugmentedState step(const PolySystem& sys, const AugmentedState& st, const ParamDirection* dir,
                           const SchemeConfig& cfg, const RngStream& rng) {
  if (!st.x.allFinite()) throw ConfigError("step: state is not finite");
  Stepper stepper(sys, dir, cfg);
  AugmentedState next = st;
  stepper.advance(next, rng);
  return next;
}

// ---------------------------------------------------------------------------
// Observers
// ---------------------------------------------------------------------------

class PathObserver {
 public:
  virtual ~PathObserver() = default;
  virtual void observe(const AugmentedState& st) = 0;
};

struct MomentReport {
  double eta = 0.0;
  double sup_log_weight = 0.0;   ///< sup over path of eta |x|^2
  double sup_weight = 1.0;       ///< exp(sup_log_weight), +inf on overflow
  double time_integral_norm_pow = 0.0;  ///< int_0^t |x|^N ds (left-point rule)
  double max_norm = 0.0;
  bool diverged = false;

  void merge(const MomentReport& other) {
    sup_log_weight = std::max(sup_log_weight, other.sup_log_weight);
    sup_weight = std::exp(sup_log_weight);
    time_integral_norm_pow = std::max(time_integral_norm_pow, other.time_integral_norm_pow);
    max_norm = std::max(max_norm, other.max_norm);
    diverged = diverged || other.diverged;
  }
};

/// Tracks the quantities bounded by the exponential moment estimate.
class MomentMonitor : public PathObserver {
 public:
  MomentMonitor(double eta, std::size_t degree, double ceiling = 1e8)
      : degree_(static_cast<double>(degree)), ceiling_(ceiling) {
    report_.eta = eta;
  }

  void observe(const AugmentedState& st) override {
    const double norm = st.x.norm();
    if (have_prev_) report_.time_integral_norm_pow += (st.t - prev_t_) * std::pow(prev_norm_, degree_);
    have_prev_ = true;
    prev_t_ = st.t;
    prev_norm_ = norm;
    report_.max_norm = std::max(report_.max_norm, norm);
    report_.sup_log_weight = std::max(report_.sup_log_weight, report_.eta * norm * norm);
    report_.sup_weight = std::exp(report_.sup_log_weight);
    if (!std::isfinite(norm) || norm > ceiling_ || !std::isfinite(report_.time_integral_norm_pow))
      report_.diverged = true;
  }

  const MomentReport& report() const { return report_; }

 private:
  double degree_;
  double ceiling_;
  MomentReport report_;
  bool have_prev_ = false;
  double prev_t_ = 0.0;
  double prev_norm_ = 0.0;
};

struct Snapshot {
  double t = 0.0;
  AugmentedState state;
};

/// Records the state at the first step reaching each requested time.
class SnapshotRecorder : public PathObserver {
 public:
  explicit SnapshotRecorder(std::vector<double> times) : times_(std::move(times)) {
    std::sort(times_.begin(), times_.end());
  }

  void observe(const AugmentedState& st) override {
    while (next_ < times_.size() && st.t >= times_[next_] - 1e-12) {
      snapshots_.push_back({times_[next_], st});
      ++next_;
    }
  }

  const std::vector<Snapshot>& snapshots() const { return snapshots_; }

 private:
  std::vector<double> times_;
  std::size_t next_ = 0;
  std::vector<Snapshot> snapshots_;
};

struct PathRecord {
  AugmentedState final_state;
  std::size_t steps = 0;
};

/// Iterates ceil(T/dt) steps from x0. Observers see the initial state and
/// every subsequent state.
inline PathRecord simulate_path(const PolySystem& sys, const Eigen::VectorXd& x0, double T, const ParamDirection* dir,
                                const SchemeConfig& cfg, const RngStream& rng,
                                std::span<PathObserver* const> observers = {}) {
  check_state(sys, x0, "simulate_path(x0)");
  if (T < 0.0) throw ConfigError("simulate_path: T must be non-negative");
  if (!x0.allFinite()) throw ConfigError("simulate_path: x0 is not finite");
  Stepper stepper(sys, dir, cfg);
  PathRecord rec;
  rec.final_state = AugmentedState::initial(x0, cfg);
  for (auto* o : observers) o->observe(rec.final_state);
  const std::size_t n = cfg.steps_for(T);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      stepper.advance(rec.final_state, rng);
      for (auto* o : observers) o->observe(rec.final_state);
    }
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " (stream " + std::to_string(rng.stream_id()) + ")",
                          e.last_finite_state(), e.step(), rng.stream_id());
  }
  rec.steps = n;
  return rec;
}

}  // namespace fdtlab
