#pragma once

#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "rollersim/shapes.hpp"

namespace rollersim {

struct SimConfig {
  double dt = 1.0 / 240.0;          // s
  double workspace_radius = 10.0;   // m
  bool allow_translation = true;
  double success_tol = 0.05;        // rad
  double success_hold = 0.5;        // s

  bool operator==(const SimConfig&) const = default;
};

inline void validate(const SimConfig& c) {
  if (!(c.dt > 0.0)) throw Error(ErrorCode::ValidationError, "sim dt must be positive");
  if (!(c.workspace_radius > 0.0)) throw Error(ErrorCode::ValidationError, "workspace_radius must be positive");
  if (!(c.success_tol >= 0.0)) throw Error(ErrorCode::ValidationError, "success_tol must be >= 0");
  if (!(c.success_hold >= 0.0)) throw Error(ErrorCode::ValidationError, "success_hold must be >= 0");
}

/// A manipulation problem: object, the contact set (hand frame, relative to
/// the nominal object center), limits and tolerances.
struct Scenario {
  std::string name;
  ObjectShape shape;
  std::vector<RollerContact> contacts;
  double speed_limit = 1.0;  // m/s
  RadiusMode radius_mode = RadiusMode::AxisDistance;
  SolverOptions solver;
  SimConfig sim;

  std::size_t contact_count() const { return contacts.size(); }

  BeltCommand command(std::vector<double> speeds) const { return BeltCommand(std::move(speeds), speed_limit); }
  BeltCommand zero_command() const { return command(std::vector<double>(contacts.size(), 0.0)); }

  /// Contacts as seen from an object whose center sits at `position`.
  std::vector<RollerContact> contacts_at(const Vec3& position) const {
    std::vector<RollerContact> out = contacts;
    for (auto& c : out) c.position -= position;
    return out;
  }

  bool operator==(const Scenario&) const = default;
};

inline void validate(const Scenario& s) {
  validate(s.shape);
  if (s.contacts.empty()) throw Error(ErrorCode::ValidationError, "scenario needs at least one contact");
  for (const auto& c : s.contacts) {
    if (!(c.position.norm() > 0.0)) throw Error(ErrorCode::ValidationError, "contact position norm must be positive");
    validate(c, outward_normal(s.shape, c.position));
  }
  if (!(s.speed_limit >= 0.0) || !std::isfinite(s.speed_limit))
    throw Error(ErrorCode::ValidationError, "speed_limit must be finite and >= 0");
  validate(s.solver);
  validate(s.sim);
}

inline void validate_command(const Scenario& s, const BeltCommand& cmd) {
  if (cmd.size() != s.contact_count())
    throw Error(ErrorCode::BadLength, "command has " + std::to_string(cmd.size()) + " speeds, scenario has " +
                                          std::to_string(s.contact_count()) + " contacts");
  if (!cmd.within_limit()) throw Error(ErrorCode::ValidationError, "command exceeds the speed limit");
}

/// Rotation solve for the object centered at `position`.
inline EquilibriumSolution solve_rotation(const Scenario& s, std::span<const double> speeds,
                                          const Vec3& position = Vec3::Zero()) {
  const auto contacts = s.contacts_at(position);
  return solve_rotation(s.shape, s.radius_mode, contacts, speeds, s.solver).solution;
}

/// Rotation solve followed by the translational drift that balances the
/// remaining tangential friction forces.
inline EquilibriumSolution solve_twist(const Scenario& s, std::span<const double> speeds,
                                       const Vec3& position = Vec3::Zero(), bool allow_translation = true) {
  const auto contacts = s.contacts_at(position);
  auto rot = solve_rotation(s.shape, s.radius_mode, contacts, speeds, s.solver);
  if (!allow_translation) return rot.solution;
  const Vec3 v = drift_velocity(contacts, speeds, rot.solution.omega, s.solver);
  auto sol = detail::assemble(contacts, speeds, rot.solution.radius_weights, rot.solution.omega, v,
                              s.solver.eps_slip);
  sol.iterations = rot.solution.iterations;
  sol.converged = true;
  return sol;
}

namespace presets {

inline Scenario sphere_4rr() {
  Scenario s;
  s.name = "sphere-4rr";
  s.shape.kind = Sphere{1.0};
  for (const Vec3& p : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0)}) {
    s.contacts.push_back({p, Vec3::UnitZ(), 1.0, 1.0});
  }
  s.speed_limit = 1.0;
  return s;
}

/// Two contacts at x and y with belts along z: every command is a rigid
/// rotation about an axis in the xy-plane.
inline Scenario sphere_2rr() {
  Scenario s;
  s.name = "sphere-2rr";
  s.shape.kind = Sphere{1.0};
  s.contacts.push_back({Vec3::UnitX(), Vec3::UnitZ(), 1.0, 1.0});
  s.contacts.push_back({Vec3::UnitY(), Vec3::UnitZ(), 1.0, 1.0});
  return s;
}

/// Reachable axes span the xz-plane; rotations about y need detours.
inline Scenario orthogonal_2rr() {
  Scenario s;
  s.name = "orthogonal-2rr";
  s.shape.kind = Sphere{1.0};
  s.contacts.push_back({Vec3::UnitX(), Vec3::UnitY(), 1.0, 1.0});
  s.contacts.push_back({Vec3::UnitZ(), Vec3::UnitY(), 1.0, 1.0});
  return s;
}

/// Antipodal pair driven in opposition spins the object about z.
inline Scenario spin_2rr() {
  Scenario s;
  s.name = "spin-2rr";
  s.shape.kind = Sphere{1.0};
  s.contacts.push_back({Vec3::UnitX(), Vec3::UnitY(), 1.0, 1.0});
  s.contacts.push_back({-Vec3::UnitX(), -Vec3::UnitY(), 1.0, 1.0});
  s.speed_limit = 2.0;
  return s;
}

inline Scenario sphere_1rr() {
  Scenario s;
  s.name = "sphere-1rr";
  s.shape.kind = Sphere{1.0};
  s.contacts.push_back({Vec3::UnitX(), Vec3::UnitZ(), 1.0, 1.0});
  return s;
}

/// Angled roller rings on parallel fingers (finger axis +z) gripping a
/// sphere on its equator at the given azimuths (degrees).
inline Scenario angled_ring(const std::string& name, double radius, const std::vector<double>& azimuths_deg,
                            double surface_angle = std::numbers::pi / 6.0) {
  Scenario s;
  s.name = name;
  s.shape.kind = Sphere{radius};
  for (double az : azimuths_deg) {
    const double a = az * std::numbers::pi / 180.0;
    MountSpec m;
    m.finger_axis = Vec3::UnitZ();
    m.contact_point = radius * Vec3(std::cos(a), std::sin(a), 0.0);
    m.surface_angle = surface_angle;
    s.contacts.push_back(rr_contact_from_mount(m, s.shape, 2.0, 0.8));
  }
  s.speed_limit = 0.05;
  s.sim.workspace_radius = 0.2;
  return s;
}

inline Scenario human_2rr() { return angled_ring("human-2rr", 0.03, {0.0, 135.0}); }

inline Scenario model_o_3rr() { return angled_ring("model-o-3rr", 0.035, {45.0, -45.0, 180.0}); }

inline const std::map<std::string, Scenario (*)()>& registry() {
  static const std::map<std::string, Scenario (*)()> r = {
      {"sphere-4rr", &sphere_4rr},       {"sphere-2rr", &sphere_2rr}, {"orthogonal-2rr", &orthogonal_2rr},
      {"spin-2rr", &spin_2rr},           {"sphere-1rr", &sphere_1rr}, {"human-2rr", &human_2rr},
      {"model-o-3rr", &model_o_3rr},
  };
  return r;
}

inline std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

inline Scenario by_name(const std::string& name) {
  const auto& r = registry();
  const auto it = r.find(name);
  if (it == r.end()) throw Error(ErrorCode::ValidationError, "unknown preset \"" + name + "\"");
  return it->second();
}

}  // namespace presets

}  // namespace rollersim
