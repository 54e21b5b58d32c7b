#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rollersim/plan.hpp"
#include "rollersim/simulator.hpp"

namespace rollersim {

struct PlannerOptions {
  double theta_ok = 2.0 * std::numbers::pi / 180.0;  // rad
  double tol_angle = 1e-3;                           // rad
  int segment_budget = 64;
  double progress_min = 1e-9;  // rad per planner iteration
  double greedy_gain = 0.75;   // accept a greedy step that leaves at most this fraction of the error

  int synth_starts = 8;
  double fd_step = 1e-4;     // relative to the speed limit
  double lambda_reg = 1e-12;
  int synth_iters = 100;

  int reach_samples = 1024;
  int coverage_directions = 2000;
  std::uint64_t seed = 0;

  double drift_weight = 0.1;  // plan_pose: rotation synthesis weight on |v| / contact radius
  double rot_weight = 1.0;    // translation objective weight on |omega|
  double tol_dir = std::numbers::pi / 180.0;   // rad
  double tol_position = 1e-6;                  // m
  int refine_rounds = 3;
};

/// Rotation-only forward model: object center held at `position`. With a
/// positive drift weight, synthesis also penalizes the free-translation
/// drift of a command, scaled by 1 / (largest contact radius).
class RotationModel {
 public:
  explicit RotationModel(const Scenario& s, const Vec3& position = Vec3::Zero(), double drift_weight = 0.0)
      : scenario_(&s), position_(position), contacts_(s.contacts_at(position)) {
    double reach = 0.0;
    for (const auto& c : contacts_) reach = std::max(reach, c.position.norm());
    drift_scale_ = reach > 0.0 ? drift_weight / reach : 0.0;
  }

  std::size_t dims() const { return contacts_.size(); }
  double speed_limit() const { return scenario_->speed_limit; }
  bool penalizes_drift() const { return drift_scale_ > 0.0; }

  Vec3 omega(std::span<const double> speeds) const {
    return solve_rotation(scenario_->shape, scenario_->radius_mode, contacts_, speeds, scenario_->solver)
        .solution.omega;
  }

  /// Weighted drift velocity (zero when drift is not penalized).
  Vec3 weighted_drift(std::span<const double> speeds) const {
    if (!penalizes_drift()) return Vec3::Zero();
    return drift_scale_ * solve_twist(*scenario_, speeds, position_, true).v_obj;
  }

 private:
  const Scenario* scenario_;
  Vec3 position_;
  std::vector<RollerContact> contacts_;
  double drift_scale_ = 0.0;
};

namespace detail {

inline double radical_inverse(std::uint64_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

/// Halton point `index` in [-limit, limit]^dims.
inline std::vector<double> halton_command(std::uint64_t index, std::size_t dims, double limit) {
  static constexpr std::array<unsigned, 12> primes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  std::vector<double> s(dims);
  for (std::size_t d = 0; d < dims; ++d) s[d] = limit * (2.0 * radical_inverse(index, primes[d % primes.size()]) - 1.0);
  return s;
}

/// Near-uniform directions on the unit sphere (golden-angle spiral).
inline std::vector<Vec3> fibonacci_sphere(int n) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return out;
}

inline double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

inline std::vector<double> scaled(std::vector<double> s, double c) {
  for (double& x : s) x *= c;
  return s;
}

}  // namespace detail

struct ReachSample {
  std::vector<double> speeds;
  Vec3 omega = Vec3::Zero();
};

struct AxisSample {
  Vec3 axis = Vec3::UnitX();
  double max_rate = 0.0;  // rad/s
};

struct ReachabilityReport {
  std::vector<AxisSample> sampled_axes;  // covered reference directions
  double coverage = 0.0;
  double coverage_stderr = 0.0;
  bool has_two_noncolinear = false;
  std::vector<ReachSample> samples;  // raw command/omega pairs with omega != 0
};

/// Samples the command box with a Halton sequence (offset by the seed) and
/// bins the resulting rotation axes onto reference directions. Commands are
/// odd in omega, so each sample also covers its negation.
template <class Model>
ReachabilityReport reachable_set(const Model& model, int n_samples, const PlannerOptions& opts = {}) {
  if (model.dims() == 0) throw Error(ErrorCode::NoContacts, "at least one contact is required");
  if (n_samples < 100) throw Error(ErrorCode::ValidationError, "n_samples must be >= 100");
  ReachabilityReport rep;
  const double limit = model.speed_limit();
  double rate_scale = 0.0;
  const std::uint64_t offset = 1 + opts.seed * static_cast<std::uint64_t>(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    auto s = detail::halton_command(offset + static_cast<std::uint64_t>(k), model.dims(), limit);
    const Vec3 w = model.omega(s);
    rate_scale = std::max(rate_scale, w.norm());
    rep.samples.push_back({std::move(s), w});
  }
  std::erase_if(rep.samples, [&](const ReachSample& r) { return !(r.omega.norm() > 1e-9 * rate_scale); });

  const double sin_ok = std::sin(opts.theta_ok);
  for (std::size_t i = 0; i < rep.samples.size() && !rep.has_two_noncolinear; ++i) {
    const Vec3 a = rep.samples.front().omega.normalized();
    if (a.cross(rep.samples[i].omega.normalized()).norm() > sin_ok) rep.has_two_noncolinear = true;
  }

  const auto refs = detail::fibonacci_sphere(opts.coverage_directions);
  const double cos_ok = std::cos(opts.theta_ok);
  std::vector<Vec3> axes;
  std::vector<double> rates;
  for (const auto& r : rep.samples) {
    axes.push_back(r.omega.normalized());
    rates.push_back(r.omega.norm());
  }
  for (const auto& d : refs) {
    double best = -1.0;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (std::abs(axes[i].dot(d)) >= cos_ok) best = std::max(best, rates[i]);
    }
    if (best > 0.0) rep.sampled_axes.push_back({d, best});
  }
  const double m = static_cast<double>(refs.size());
  rep.coverage = static_cast<double>(rep.sampled_axes.size()) / m;
  rep.coverage_stderr = std::sqrt(rep.coverage * (1.0 - rep.coverage) / m);
  return rep;
}

inline ReachabilityReport reachable_set(const Scenario& s, int n_samples, const PlannerOptions& opts = {}) {
  return reachable_set(RotationModel(s), n_samples, opts);
}

struct Synthesis {
  std::vector<double> speeds;
  Vec3 achieved = Vec3::Zero();
  double residual = std::numeric_limits<double>::infinity();  // |achieved - desired|
};

namespace detail {

/// Box-constrained Levenberg-Marquardt on a residual vector with central
/// finite-difference Jacobians. `normalize` rescales each iterate so its
/// largest speed sits on the limit (for scale-free objectives).
template <class Residual>
std::pair<std::vector<double>, double> lm_minimize(const Residual& residual, std::vector<double> s, double limit,
                                                   const PlannerOptions& opts, bool normalize, double stop_cost) {
  const auto n = static_cast<Eigen::Index>(s.size());
  auto clip = [&](std::vector<double>& v) {
    for (double& x : v) x = std::clamp(x, -limit, limit);
    if (normalize) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      if (m > 0.0)
        for (double& x : v) x *= limit / m;
    }
  };
  clip(s);
  Eigen::VectorXd r = residual(s);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  const double h = opts.fd_step * std::max(limit, 1e-300);
  for (int it = 0; it < opts.synth_iters && cost > stop_cost; ++it) {
    Eigen::MatrixXd jac(r.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      auto sp = s, sm = s;
      sp[static_cast<std::size_t>(j)] += h;
      sm[static_cast<std::size_t>(j)] -= h;
      jac.col(j) = (residual(sp) - residual(sm)) / (2.0 * h);
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += mu * (jtj.diagonal().array() + 1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
      const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
      auto trial = s;
      for (Eigen::Index j = 0; j < n; ++j) trial[static_cast<std::size_t>(j)] += delta(j);
      clip(trial);
      const Eigen::VectorXd rt = residual(trial);
      const double ct = rt.squaredNorm();
      if (ct < cost) {
        double moved = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) moved = std::max(moved, std::abs(trial[j] - s[j]));
        s = std::move(trial);
        r = rt;
        const double gain = cost - ct;
        cost = ct;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        // Stalled on a non-zero local minimum.
        if (moved <= 1e-14 * limit || gain <= 1e-15 * cost || gain <= 1e-4 * (cost + gain)) it = opts.synth_iters;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) break;
  }
  return {s, cost};
}

inline std::vector<std::vector<double>> start_commands(std::size_t dims, double limit, int count, std::uint64_t seed,
                                                       const std::vector<std::vector<double>>& warm) {
  std::vector<std::vector<double>> starts = warm;
  const std::size_t target = warm.size() + static_cast<std::size_t>(std::max(count, 0));
  std::vector<std::vector<double>> patterns;
  for (std::size_t i = 0; i < dims; ++i) {
    for (double sign : {1.0, -1.0}) {
      std::vector<double> s(dims, 0.0);
      s[i] = 0.5 * sign * limit;
      patterns.push_back(std::move(s));
    }
  }
  patterns.push_back(std::vector<double>(dims, 0.5 * limit));
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-limit, limit);
  // Half axis-aligned patterns, the rest random.
  const std::size_t n_patterns = std::min(patterns.size(), static_cast<std::size_t>((count + 1) / 2));
  for (std::size_t i = 0; i < n_patterns; ++i) starts.push_back(patterns[i]);
  while (starts.size() < target) {
    std::vector<double> s(dims);
    for (double& x : s) x = u(gen);
    starts.push_back(std::move(s));
  }
  return starts;
}

}  // namespace detail

/// Best command for a desired angular velocity: multi-start local search on
/// |omega(s) - omega_d|^2 + lambda_reg |s|^2 within the speed box. Never
/// throws for an unreachable target; check `residual`.
template <class Model>
Synthesis synthesize_rotation_best(const Model& model, const Vec3& omega_desired, const PlannerOptions& opts = {},
                                   const std::vector<std::vector<double>>& warm_starts = {}) {
  const double wd = omega_desired.norm();
  if (!(wd > 0.0)) throw Error(ErrorCode::ValidationError, "desired angular velocity must be non-zero");
  if (model.dims() == 0) throw Error(ErrorCode::NoContacts, "at least one contact is required");
  const double limit = model.speed_limit();
  Synthesis best;
  if (!(limit > 0.0)) {
    best.speeds.assign(model.dims(), 0.0);
    best.residual = wd;
    return best;
  }
  const double reg = std::sqrt(opts.lambda_reg);
  bool drift = false;
  if constexpr (requires { model.penalizes_drift(); }) drift = model.penalizes_drift();
  const Eigen::Index extra = drift ? 3 : 0;
  auto residual = [&](const std::vector<double>& s) {
    Eigen::VectorXd r(3 + extra + static_cast<Eigen::Index>(s.size()));
    const Vec3 w = model.omega(s);
    r.head<3>() = w - omega_desired;
    if constexpr (requires { model.weighted_drift(s); }) {
      if (drift) r.segment<3>(3) = wd * model.weighted_drift(s) / std::max(w.norm(), 1e-300);
    }
    for (std::size_t i = 0; i < s.size(); ++i) r(3 + extra + static_cast<Eigen::Index>(i)) = reg * s[i];
    return r;
  };
  const double stop = std::pow(1e-10 * wd, 2);
  for (const auto& start : detail::start_commands(model.dims(), limit, opts.synth_starts, opts.seed, warm_starts)) {
    auto [s, cost] = detail::lm_minimize(residual, start, limit, opts, false, stop);
    const Vec3 w = model.omega(s);
    const double res = (w - omega_desired).norm();
    if (res < best.residual) best = {std::move(s), w, res};
    if (best.residual <= 1e-9 * wd) break;
  }
  return best;
}

/// As above, but throws Unreachable when the residual exceeds
/// sin(theta_ok) * |omega_d|.
template <class Model>
Synthesis synthesize_rotation(const Model& model, const Vec3& omega_desired, const PlannerOptions& opts = {}) {
  auto best = synthesize_rotation_best(model, omega_desired, opts);
  if (best.residual > std::sin(opts.theta_ok) * omega_desired.norm()) {
    throw Error(ErrorCode::Unreachable, "no command within the speed limit reaches the requested angular velocity");
  }
  return best;
}

inline Synthesis synthesize_rotation(const Scenario& s, const Vec3& omega_desired, const PlannerOptions& opts = {}) {
  return synthesize_rotation(RotationModel(s), omega_desired, opts);
}

namespace detail {

struct AxisCommand {
  std::vector<double> speeds;
  Vec3 omega;
};

/// Finds a command whose omega is orthogonal to `a` by bisecting a . omega
/// along straight lines between sampled commands of opposite sign.
template <class Model>
std::optional<AxisCommand> orthogonal_command(const Model& model, const Vec3& a,
                                              const std::vector<ReachSample>& samples) {
  double rate_scale = 0.0;
  for (const auto& r : samples) rate_scale = std::max(rate_scale, r.omega.norm());
  const double min_rate = 0.05 * rate_scale;
  for (const auto& r : samples) {
    const double n = r.omega.norm();
    if (n >= min_rate && std::abs(a.dot(r.omega)) <= 1e-12 * n) return AxisCommand{r.speeds, r.omega};
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].omega.norm() < min_rate) continue;
    (a.dot(samples[i].omega) > 0.0 ? pos : neg).push_back(i);
  }
  // Pair strongly positive with strongly negative samples first.
  auto by_rate = [&](std::size_t x, std::size_t y) { return samples[x].omega.norm() > samples[y].omega.norm(); };
  std::sort(pos.begin(), pos.end(), by_rate);
  std::sort(neg.begin(), neg.end(), by_rate);
  int tries = 0;
  for (std::size_t ip = 0; ip < pos.size() && tries < 64; ++ip) {
    for (std::size_t in = 0; in < neg.size() && tries < 64; ++in, ++tries) {
      const auto& sp = samples[pos[ip]].speeds;
      const auto& sn = samples[neg[in]].speeds;
      auto at = [&](double t) {
        std::vector<double> s(sp.size());
        for (std::size_t k = 0; k < s.size(); ++k) s[k] = (1.0 - t) * sp[k] + t * sn[k];
        return s;
      };
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (a.dot(model.omega(at(mid))) > 0.0 ? lo : hi) = mid;
      }
      for (double t : {lo, hi}) {
        auto s = at(t);
        const Vec3 w = model.omega(s);
        if (w.norm() >= min_rate && std::abs(a.dot(w.normalized())) <= 1e-6) return AxisCommand{std::move(s), w};
      }
    }
  }
  return std::nullopt;
}

/// Proper Euler angles R = R_a(alpha) R_b(beta) R_a(gamma) for orthonormal
/// a, b; among equivalent triples the smallest total angle wins, and in the
/// singular case the free angle is split evenly.
inline std::array<double, 3> aba_angles(const Orientation& r, const Vec3& a, const Vec3& b) {
  Mat3 frame;
  frame.col(0) = b;
  frame.col(1) = a.cross(b);
  frame.col(2) = a;
  const Mat3 m = frame.transpose() * r.quaternion().toRotationMatrix() * frame;
  const double pi = std::numbers::pi;
  auto wrap = [&](double x) {
    while (x > pi) x -= 2 * pi;
    while (x <= -pi) x += 2 * pi;
    return x;
  };
  const double s = std::hypot(m(0, 2), m(1, 2));
  const double beta = std::atan2(s, m(2, 2));
  if (s > 1e-9) {
    const double alpha = std::atan2(m(0, 2), -m(1, 2));
    const double gamma = std::atan2(m(2, 0), m(2, 1));
    std::array<double, 3> p = {wrap(alpha), beta, wrap(gamma)};
    std::array<double, 3> q = {wrap(alpha + pi), -beta, wrap(gamma + pi)};
    auto total = [](const std::array<double, 3>& x) { return std::abs(x[0]) + std::abs(x[1]) + std::abs(x[2]); };
    return total(q) < total(p) - 1e-12 ? q : p;
  }
  if (m(2, 2) > 0.0) {
    const double d = std::atan2(m(1, 0), m(0, 0));
    return {0.5 * d, 0.0, 0.5 * d};
  }
  const double d = std::atan2(m(1, 0), m(0, 0));
  return {0.5 * d, pi, -0.5 * d};
}

}  // namespace detail

/// Greedy geodesic descent on orientations with exact a-b-a blocks when the
/// requested axis is out of reach. The object center is held fixed.
template <class Model>
Plan plan_rotation(const Model& model, const Orientation& start, const Orientation& goal,
                   const PlannerOptions& opts = {}) {
  const auto reach = reachable_set(model, opts.reach_samples, opts);
  if (!reach.has_two_noncolinear) {
    throw Error(ErrorCode::PlanInfeasible, "reachable axes are all colinear; reorientation is not controllable");
  }
  Plan plan;
  plan.start_pose.orientation = start;
  plan.goal_pose.orientation = goal;
  Orientation current = start;
  const double geodesic = geodesic_distance(start, goal);

  double rate_ref = 0.0;
  for (const auto& r : reach.samples) rate_ref = std::max(rate_ref, r.omega.norm());
  rate_ref *= 0.25;

  std::optional<std::pair<detail::AxisCommand, detail::AxisCommand>> pair;
  bool pair_searched = false;

  auto add_segment = [&](std::vector<double> speeds, Vec3 omega, double angle) {
    if (angle < 0.0) {
      speeds = detail::scaled(std::move(speeds), -1.0);
      omega = -omega;
      angle = -angle;
    }
    if (angle == 0.0) return;
    PlanSegment seg;
    seg.command = BeltCommand(std::move(speeds), model.speed_limit());
    seg.expected_omega = omega;
    seg.duration = angle / omega.norm();
    current = Orientation::exp(omega * seg.duration) * current;
    plan.segments.push_back(std::move(seg));
  };
  // Optimal angle about unit axis u toward the residual rotation err.
  auto best_angle = [](const Orientation& err, const Vec3& u) { return 2.0 * std::atan2(u.dot(err.vec()), err.w()); };
  auto error_after = [](const Orientation& err, const Vec3& u) {
    const double c = std::sqrt(err.w() * err.w() + std::pow(u.dot(err.vec()), 2));
    return 2.0 * std::acos(std::min(1.0, c));
  };

  double theta = geodesic;
  while (theta > opts.tol_angle) {
    const Orientation err = goal * current.inverse();
    const Vec3 e = err.axis();
    const std::size_t before = plan.segments.size();
    auto need = [&](std::size_t k) {
      if (plan.segments.size() + k > static_cast<std::size_t>(opts.segment_budget))
        throw Error(ErrorCode::BudgetExhausted, "segment budget exhausted before reaching the goal");
    };

    // Warm starts: sampled commands whose axes lie closest to e.
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t i = 0; i < reach.samples.size(); ++i)
      near.push_back({-reach.samples[i].omega.normalized().dot(e), i});
    std::partial_sort(near.begin(), near.begin() + std::min<std::size_t>(2, near.size()), near.end());
    std::vector<std::vector<double>> warm;
    for (std::size_t k = 0; k < std::min<std::size_t>(2, near.size()); ++k) {
      const auto& smp = reach.samples[near[k].second];
      warm.push_back(detail::scaled(smp.speeds, rate_ref / smp.omega.norm()));
    }
    const auto syn = synthesize_rotation_best(model, e * rate_ref, opts, warm);

    if (syn.achieved.norm() > 0.0 && detail::angle_between(syn.achieved, e) <= opts.theta_ok) {
      need(1);
      add_segment(syn.speeds, syn.achieved, best_angle(err, syn.achieved.normalized()));
    } else {
      // Greedy: the reachable axis best aligned with the residual axis.
      std::vector<double> g_speeds;
      Vec3 g_omega = Vec3::Zero();
      double g_align = -1.0;
      auto consider = [&](const std::vector<double>& s, const Vec3& w) {
        const double n = w.norm();
        if (!(n > 0.0)) return;
        const double al = std::abs(w.dot(e)) / n;
        if (al > g_align) {
          g_align = al;
          g_speeds = s;
          g_omega = w;
        }
      };
      consider(syn.speeds, syn.achieved);
      for (const auto& r : reach.samples) consider(r.speeds, r.omega);
      const double theta_greedy = g_align > 0.0 ? error_after(err, g_omega.normalized()) : theta;

      if (theta_greedy <= opts.greedy_gain * theta) {
        need(1);
        add_segment(g_speeds, g_omega, best_angle(err, g_omega.normalized()));
      } else {
        if (!pair_searched) {
          pair_searched = true;
          const auto& first = *std::max_element(reach.samples.begin(), reach.samples.end(),
                                                [](const ReachSample& x, const ReachSample& y) {
                                                  return x.omega.norm() < y.omega.norm();
                                                });
          const detail::AxisCommand a{first.speeds, model.omega(first.speeds)};
          if (auto b = detail::orthogonal_command(model, a.omega.normalized(), reach.samples)) pair.emplace(a, *b);
        }
        if (pair) {
          const auto& [a, b] = *pair;
          const Vec3 ua = a.omega.normalized();
          const Vec3 ub = (b.omega - b.omega.dot(ua) * ua).normalized();
          const auto ang = detail::aba_angles(err, ua, ub);
          need(static_cast<std::size_t>(std::count_if(ang.begin(), ang.end(), [](double x) { return x != 0.0; })));
          add_segment(a.speeds, a.omega, ang[2]);
          add_segment(b.speeds, b.omega, ang[1]);
          add_segment(a.speeds, a.omega, ang[0]);
        } else if (theta_greedy < theta - opts.progress_min) {
          need(1);
          add_segment(g_speeds, g_omega, best_angle(err, g_omega.normalized()));
        } else {
          throw Error(ErrorCode::BudgetExhausted, "no reachable axis makes progress toward the goal");
        }
      }
    }
    const double next = geodesic_distance(current, goal);
    if (plan.segments.size() == before || !(next < theta - opts.progress_min)) {
      throw Error(ErrorCode::BudgetExhausted, "planner iteration failed to reduce the orientation error");
    }
    theta = next;
  }
  plan.expected_final_pose.orientation = current;
  plan.expected_final_pose.position = plan.start_pose.position;
  plan.goal_pose.position = plan.start_pose.position;
  plan.detour_ratio = geodesic > 0.0 ? std::max(1.0, plan.rotation_travel() / geodesic) : 1.0;
  return plan;
}

inline Plan plan_rotation(const Scenario& s, const Orientation& start, const Orientation& goal,
                          const PlannerOptions& opts = {}, const Vec3& position = Vec3::Zero()) {
  auto plan = plan_rotation(RotationModel(s, position), start, goal, opts);
  plan.start_pose.position = plan.goal_pose.position = plan.expected_final_pose.position = position;
  return plan;
}

/// Pure translation: find a command whose rotation cancels and whose drift
/// points along `direction`, scale it to the speed limit, hold it for
/// distance / |v|.
inline Plan plan_translation(const Scenario& s, const Vec3& direction, double distance,
                             const PlannerOptions& opts = {}, const Vec3& position = Vec3::Zero(),
                             const Orientation& orientation = Orientation::identity()) {
  if (!(distance >= 0.0) || !std::isfinite(distance))
    throw Error(ErrorCode::ValidationError, "distance must be finite and >= 0");
  Plan plan;
  plan.start_pose = {orientation, position};
  plan.expected_final_pose = plan.start_pose;
  plan.goal_pose = plan.start_pose;
  if (distance == 0.0) return plan;
  const double dn = direction.norm();
  if (!(dn > 0.0)) throw Error(ErrorCode::ValidationError, "translation direction must be non-zero");
  const Vec3 d = direction / dn;
  plan.goal_pose.position = position + distance * d;
  if (s.contact_count() < 2) throw Error(ErrorCode::Unreachable, "a single contact cannot translate without rotating");
  const double limit = s.speed_limit;
  if (!(limit > 0.0)) throw Error(ErrorCode::Unreachable, "speed limit is zero");

  auto twist = [&](const std::vector<double>& sp) { return solve_twist(s, sp, position, true); };
  const double w_rot = std::sqrt(opts.rot_weight);
  auto residual = [&](const std::vector<double>& sp) {
    const auto sol = twist(sp);
    Eigen::VectorXd r(6);
    const double vn = sol.v_obj.norm();
    if (!(vn > 1e-12 * limit)) {
      r << 1e3, 1e3, 1e3, 2.0, 2.0, 2.0;
      return r;
    }
    r.head<3>() = w_rot * sol.omega / vn;
    r.tail<3>() = sol.v_obj / vn - d;
    return r;
  };
  std::vector<std::vector<double>> warm = {std::vector<double>(s.contact_count(), limit),
                                           std::vector<double>(s.contact_count(), -limit)};
  std::vector<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& start : detail::start_commands(s.contact_count(), limit, opts.synth_starts, opts.seed, warm)) {
    auto [sp, cost] = detail::lm_minimize(residual, start, limit, opts, true, 1e-26);
    if (cost < best_cost) {
      best_cost = cost;
      best = std::move(sp);
    }
    if (best_cost <= 1e-26) break;
  }
  const auto sol = twist(best);
  const double vn = sol.v_obj.norm();
  if (!(vn > 0.0) || sol.omega.norm() > s.solver.tol_omega || detail::angle_between(sol.v_obj, d) > opts.tol_dir) {
    throw Error(ErrorCode::Unreachable, "no command translates along the requested direction without rotating");
  }
  PlanSegment seg;
  seg.command = BeltCommand(best, limit);
  seg.duration = distance / vn;
  seg.expected_omega = sol.omega;
  seg.expected_v = sol.v_obj;
  plan.segments.push_back(seg);
  plan.expected_final_pose.position = position + sol.v_obj * seg.duration;
  plan.expected_final_pose.orientation = Orientation::exp(sol.omega * seg.duration) * orientation;
  plan.detour_ratio = 1.0;
  return plan;
}

namespace detail {

inline Plan plan_pose_ordered(const Scenario& s, const Pose& start, const Pose& goal, const PlannerOptions& opts,
                              bool translate_first) {
  Plan out;
  out.start_pose = start;
  out.goal_pose = goal;
  Pose current = start;
  double rotation_travel = 0.0, translation_travel = 0.0;
  auto simulate = [&](const Plan& p) {
    ObjectState st{current.orientation, current.position, 0.0};
    const auto traj = run(s, to_schedule(p), s.sim, st);
    if (traj.escaped) throw Error(ErrorCode::Escaped, "plan leaves the workspace");
    const auto& last = traj.back().state;
    current = {last.orientation, last.position};
    for (const auto& seg : p.segments) out.segments.push_back(seg);
  };
  auto reached = [&] {
    return geodesic_distance(current.orientation, goal.orientation) <= opts.tol_angle &&
           (goal.position - current.position).norm() <= opts.tol_position;
  };
  auto translate = [&] {
    const Vec3 offset = goal.position - current.position;
    if (offset.norm() <= opts.tol_position) return;
    const auto tp = plan_translation(s, offset, offset.norm(), opts, current.position, current.orientation);
    translation_travel += offset.norm();
    simulate(tp);
  };
  auto rotate = [&] {
    if (geodesic_distance(current.orientation, goal.orientation) <= opts.tol_angle) return;
    const double dw = s.sim.allow_translation ? opts.drift_weight : 0.0;
    auto rp = plan_rotation(RotationModel(s, current.position, dw), current.orientation, goal.orientation, opts);
    rotation_travel += rp.rotation_travel();
    simulate(rp);
  };
  for (int round = 0; round < opts.refine_rounds && !reached(); ++round) {
    if (translate_first) {
      translate();
      rotate();
    } else {
      rotate();
      translate();
    }
  }
  out.expected_final_pose = current;
  out.status = reached() ? PlanStatus::Success : PlanStatus::Partial;
  const double geo = geodesic_distance(start.orientation, goal.orientation);
  const double straight = (goal.position - start.position).norm();
  if (geo > 0.0)
    out.detour_ratio = std::max(1.0, rotation_travel / geo);
  else if (straight > 0.0)
    out.detour_ratio = std::max(1.0, translation_travel / straight);
  return out;
}

}  // namespace detail

/// Translate, rotate, then re-translate drift picked up while rotating, for
/// up to refine_rounds rounds, each phase checked by simulation with the
/// scenario's sim config. When that ordering cannot finish, the goal is
/// retried rotating first.
inline Plan plan_pose(const Scenario& s, const Pose& start, const Pose& goal, const PlannerOptions& opts = {}) {
  std::optional<Plan> first;
  try {
    first = detail::plan_pose_ordered(s, start, goal, opts, true);
    if (first->status == PlanStatus::Success) return *first;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Unreachable && e.code() != ErrorCode::Escaped &&
        e.code() != ErrorCode::BudgetExhausted)
      throw;
  }
  try {
    auto second = detail::plan_pose_ordered(s, start, goal, opts, false);
    if (second.status == PlanStatus::Success || !first) return second;
  } catch (const Error&) {
    if (!first) throw;
  }
  return *first;
}

}  // namespace rollersim
