#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "rollersim/plan.hpp"
#include "rollersim/scenario.hpp"

namespace rollersim {

struct ObjectState {
  Orientation orientation;
  Vec3 position = Vec3::Zero();  // object center, hand frame
  double t = 0.0;                // s

  bool operator==(const ObjectState&) const = default;
};

/// State at `state.t` together with the twist, slip speeds and dissipation
/// of the step that produced it (all zero for an initial sample).
struct Sample {
  ObjectState state;
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  std::vector<double> slip;
  double dissipation = 0.0;

  bool operator==(const Sample&) const = default;
};

struct Trajectory {
  std::vector<Sample> samples;
  bool escaped = false;

  std::size_t contact_count() const { return samples.empty() ? 0 : samples.front().slip.size(); }
  const Sample& back() const { return samples.back(); }
  bool operator==(const Trajectory&) const = default;
};

inline Sample initial_sample(const ObjectState& s, std::size_t contacts) {
  Sample out;
  out.state = s;
  out.slip.assign(contacts, 0.0);
  return out;
}

namespace detail {

inline std::string at_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << " (t = " << t << " s)";
  return os.str();
}

}  // namespace detail

/// Advances object states under one scenario. Equilibrium solutions are
/// cached on (position, speeds), so constant commands at a fixed center are
/// solved once.
class Stepper {
 public:
  Stepper(const Scenario& scenario, const SimConfig& config) : scenario_(scenario), config_(config) {
    validate(config_);
  }

  const EquilibriumSolution& solve(const ObjectState& state, std::span<const double> speeds) {
    if (cache_ && cache_position_ == state.position && std::equal(speeds.begin(), speeds.end(),
                                                                   cache_speeds_.begin(), cache_speeds_.end())) {
      return *cache_;
    }
    try {
      cache_ = solve_twist(scenario_, speeds, state.position, config_.allow_translation);
    } catch (const Error& e) {
      cache_.reset();
      if (e.code() == ErrorCode::NonConvergence || e.code() == ErrorCode::SolverFailure)
        throw Error(ErrorCode::SolverFailure, std::string(e.what()) + detail::at_time(state.t));
      throw;
    }
    cache_position_ = state.position;
    cache_speeds_.assign(speeds.begin(), speeds.end());
    return *cache_;
  }

  /// One step of length h; the returned sample is stamped `t_next`.
  Sample advance(const ObjectState& state, std::span<const double> speeds, double h, double t_next) {
    const auto& sol = solve(state, speeds);
    Sample out;
    out.state.orientation = Orientation::exp(sol.omega * h) * state.orientation;
    out.state.position = state.position + sol.v_obj * h;
    out.state.t = t_next;
    out.omega = sol.omega;
    out.v = sol.v_obj;
    out.slip.reserve(sol.per_contact.size());
    for (const auto& k : sol.per_contact) out.slip.push_back(k.slip_speed);
    out.dissipation = sol.dissipation;
    return out;
  }

  bool outside(const ObjectState& s) const { return s.position.norm() > config_.workspace_radius; }

  const SimConfig& config() const { return config_; }

 private:
  const Scenario& scenario_;
  SimConfig config_;
  std::optional<EquilibriumSolution> cache_;
  Vec3 cache_position_ = Vec3::Zero();
  std::vector<double> cache_speeds_;
};

struct StepResult {
  ObjectState state;
  Sample record;
};

/// Single step of length config.dt. Throws Escaped when the new center
/// leaves the workspace.
inline StepResult step(const ObjectState& state, const Scenario& scenario, const BeltCommand& command,
                       const SimConfig& config) {
  validate_command(scenario, command);
  Stepper stepper(scenario, config);
  auto rec = stepper.advance(state, command.speeds, config.dt, state.t + config.dt);
  if (stepper.outside(rec.state)) {
    throw Error(ErrorCode::Escaped, "object left the workspace" + detail::at_time(rec.state.t));
  }
  return {rec.state, std::move(rec)};
}

inline void validate_schedule(const Scenario& scenario, const Schedule& schedule) {
  for (const auto& e : schedule) {
    if (!(e.duration > 0.0) || !std::isfinite(e.duration))
      throw Error(ErrorCode::ValidationError, "schedule durations must be positive");
    validate_command(scenario, BeltCommand(e.speeds, scenario.speed_limit));
  }
}

/// Applies each entry for its duration in steps of config.dt; the last step
/// of an entry is shortened to end exactly on the entry boundary.
inline Trajectory run(const Scenario& scenario, const Schedule& schedule, const SimConfig& config,
                      const ObjectState& initial = {}) {
  validate_schedule(scenario, schedule);
  Stepper stepper(scenario, config);
  Trajectory traj;
  traj.samples.push_back(initial_sample(initial, scenario.contact_count()));
  ObjectState state = initial;
  for (const auto& entry : schedule) {
    const double t0 = state.t;
    const double dt = config.dt;
    for (long k = 0;; ++k) {
      const double done = static_cast<double>(k) * dt;
      const double remaining = entry.duration - done;
      if (remaining <= 1e-12 * entry.duration) break;
      const bool last = remaining <= dt * (1.0 + 1e-12);
      const double h = last ? remaining : dt;
      const double t_next = last ? t0 + entry.duration : t0 + done + dt;
      auto rec = stepper.advance(state, entry.speeds, h, t_next);
      state = rec.state;
      traj.samples.push_back(std::move(rec));
      if (stepper.outside(state)) {
        traj.escaped = true;
        return traj;
      }
      if (last) break;
    }
  }
  return traj;
}

inline Trajectory run(const Scenario& scenario, const Schedule& schedule) { return run(scenario, schedule, scenario.sim); }

inline Trajectory run(const Scenario& scenario, const Plan& plan, const SimConfig& config) {
  ObjectState init;
  init.orientation = plan.start_pose.orientation;
  init.position = plan.start_pose.position;
  return run(scenario, to_schedule(plan), config, init);
}

struct SuccessReport {
  bool achieved = false;
  std::optional<double> time_to_success;  // s
};

/// Success once the orientation stays within success_tol of the target for
/// success_hold seconds; the time is the first sample that completes the
/// hold window.
inline SuccessReport success_check(const Trajectory& traj, const Orientation& target, const SimConfig& config) {
  if (traj.samples.empty()) throw Error(ErrorCode::ValidationError, "trajectory is empty");
  std::optional<double> window_start;
  for (const auto& s : traj.samples) {
    if (geodesic_distance(s.state.orientation, target) <= config.success_tol) {
      if (!window_start) window_start = s.state.t;
      if (s.state.t - *window_start >= config.success_hold - 1e-12) return {true, s.state.t};
    } else {
      window_start.reset();
    }
  }
  return {};
}

}  // namespace rollersim
