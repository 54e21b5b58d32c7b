#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rollersim/equilibrium.hpp"

namespace rollersim {

struct Sphere {
  double radius = 1.0;
  bool operator==(const Sphere&) const = default;
};

struct Box {
  Vec3 half_extents = Vec3::Ones();
  bool operator==(const Box&) const = default;
};

/// Axis along z in the object frame.
struct Cylinder {
  double radius = 1.0;
  double half_height = 1.0;
  bool operator==(const Cylinder&) const = default;
};

struct ObjectShape {
  std::variant<Sphere, Box, Cylinder> kind = Sphere{};
  Vec3 center_offset = Vec3::Zero();

  bool is_sphere() const { return std::holds_alternative<Sphere>(kind); }
  bool operator==(const ObjectShape&) const = default;
};

inline void validate(const ObjectShape& s) {
  const bool ok = std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sphere>) return k.radius > 0.0;
        if constexpr (std::is_same_v<K, Box>) return (k.half_extents.array() > 0.0).all();
        if constexpr (std::is_same_v<K, Cylinder>) return k.radius > 0.0 && k.half_height > 0.0;
      },
      s.kind);
  if (!ok) throw Error(ErrorCode::ValidationError, "shape dimensions must be positive");
  if (!is_finite(s.center_offset)) throw Error(ErrorCode::ValidationError, "shape center_offset must be finite");
}

/// Signed distance from a point (relative to the object center) to the surface.
inline double signed_distance(const ObjectShape& shape, const Vec3& p) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sphere>) {
          return p.norm() - k.radius;
        } else if constexpr (std::is_same_v<K, Box>) {
          const Vec3 q = p.cwiseAbs() - k.half_extents;
          return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        } else {
          const double dr = std::hypot(p.x(), p.y()) - k.radius;
          const double dz = std::abs(p.z()) - k.half_height;
          return std::hypot(std::max(dr, 0.0), std::max(dz, 0.0)) + std::min(std::max(dr, dz), 0.0);
        }
      },
      shape.kind);
}

/// Outward unit normal at a surface point (relative to the object center).
/// On box edges and cylinder rims the face with the largest penetration
/// coordinate wins.
inline Vec3 outward_normal(const ObjectShape& shape, const Vec3& p) {
  return std::visit(
      [&](const auto& k) -> Vec3 {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sphere>) {
          return p.normalized();
        } else if constexpr (std::is_same_v<K, Box>) {
          const Vec3 q = p.cwiseAbs() - k.half_extents;
          Eigen::Index axis = 0;
          q.maxCoeff(&axis);
          Vec3 n = Vec3::Zero();
          n(axis) = p(axis) >= 0.0 ? 1.0 : -1.0;
          return n;
        } else {
          const double dr = std::hypot(p.x(), p.y()) - k.radius;
          const double dz = std::abs(p.z()) - k.half_height;
          if (dz > dr) return Vec3(0.0, 0.0, p.z() >= 0.0 ? 1.0 : -1.0);
          return Vec3(p.x(), p.y(), 0.0).normalized();
        }
      },
      shape.kind);
}

struct MountSpec {
  Vec3 finger_axis = Vec3::UnitZ();
  Vec3 contact_point = Vec3::Zero();  // hand frame
  double surface_angle = std::numbers::pi / 6.0;  // rad

  bool operator==(const MountSpec&) const = default;
};

/// Belt direction at an angled roller ring: the finger axis projected into
/// the tangent plane, then turned by the surface angle counterclockwise as
/// seen from outside the object (right-handed about the outward normal).
inline RollerContact rr_contact_from_mount(const MountSpec& mount, const ObjectShape& shape, double normal_force,
                                           double friction) {
  if (!(mount.surface_angle >= 0.0) || !(mount.surface_angle < std::numbers::pi / 2.0)) {
    throw Error(ErrorCode::ValidationError, "surface_angle must lie in [0, pi/2)");
  }
  const Vec3 p = mount.contact_point - shape.center_offset;
  if (std::abs(signed_distance(shape, p)) > 1e-6) {
    throw Error(ErrorCode::SurfaceMismatch, "mount contact point is not on the object surface");
  }
  const Vec3 n = outward_normal(shape, p);
  const double axis_norm = mount.finger_axis.norm();
  if (!(axis_norm > 0.0)) throw Error(ErrorCode::ParallelAxis, "finger axis is zero");
  const Vec3 axis = mount.finger_axis / axis_norm;
  const Vec3 tangent = axis - axis.dot(n) * n;
  if (tangent.norm() < 1e-9) throw Error(ErrorCode::ParallelAxis, "finger axis is parallel to the surface normal");
  const Vec3 t = tangent.normalized();
  const double b = mount.surface_angle;
  Vec3 belt = std::cos(b) * t + std::sin(b) * n.cross(t);
  belt -= belt.dot(n) * n;
  RollerContact c;
  c.position = p;
  c.belt_dir = belt.normalized();
  c.normal_force = normal_force;
  c.friction = friction;
  return c;
}

/// Perpendicular distance from a contact to the rotation axis through the
/// object center.
inline double contact_radius(const Vec3& p, const Vec3& axis) {
  if (!is_unit(axis, 1e-6)) throw Error(ErrorCode::ValidationError, "rotation axis must be a unit vector");
  return (p - p.dot(axis) * axis).norm();
}

enum class RadiusMode { AxisDistance, ContactNorm };

struct RotationSolve {
  EquilibriumSolution solution;
  std::vector<bool> degenerate;  // contact on the rotation axis (zero weight)
  int outer_iterations = 0;
};

/// Rotation solve with multi-sphere radius weighting. Spheres use the
/// contact norm (every contact acts on the same sphere). Other shapes in
/// AxisDistance mode iterate: weights from the previous omega direction,
/// starting at |p_i|, until max |dr| <= 1e-9 or 50 outer passes.
inline RotationSolve solve_rotation(const ObjectShape& shape, RadiusMode mode, std::span<const RollerContact> contacts,
                                    std::span<const double> speeds, const SolverOptions& opts = {}) {
  RotationSolve out;
  std::vector<double> r(contacts.size());
  for (std::size_t i = 0; i < contacts.size(); ++i) r[i] = contacts[i].position.norm();
  out.degenerate.assign(contacts.size(), false);
  out.solution = equilibrium_omega(contacts, speeds, r, opts);
  out.outer_iterations = 1;
  if (shape.is_sphere() || mode == RadiusMode::ContactNorm) return out;

  for (int outer = 1; outer < 50; ++outer) {
    const double wn = out.solution.omega.norm();
    if (!(wn > 0.0)) break;
    const Vec3 axis = out.solution.omega / wn;
    double change = 0.0;
    for (std::size_t i = 0; i < contacts.size(); ++i) {
      const double next = contact_radius(contacts[i].position, axis);
      change = std::max(change, std::abs(next - r[i]));
      r[i] = next;
      out.degenerate[i] = next <= 1e-12;
    }
    if (change <= 1e-9) break;
    out.solution = equilibrium_omega(contacts, speeds, r, opts);
    out.outer_iterations = outer + 1;
  }
  return out;
}

struct CasmSpec {
  double outer_width = 17.0;    // mm
  double inner_width = 12.0;    // mm
  double fin_thickness = 1.0;   // mm
};

struct CasmCheckItem {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double bound = 0.0;
};

struct CasmReport {
  std::vector<CasmCheckItem> items;
  bool all_pass() const {
    for (const auto& i : items)
      if (!i.pass) return false;
    return true;
  }
};

/// Sleeve sizing rules (all in mm): outer width at least 2 over the widest
/// attachment, fins at least 1 thick, inner width at least 2 under the
/// attachment.
inline CasmReport casm_check(double attachment_width, const CasmSpec& spec) {
  if (!(attachment_width > 0.0) || !(spec.outer_width > 0.0) || !(spec.inner_width > 0.0) ||
      !(spec.fin_thickness > 0.0)) {
    throw Error(ErrorCode::ValidationError, "CASM dimensions must be positive");
  }
  CasmReport r;
  r.items.push_back({"outer_width", spec.outer_width >= attachment_width + 2.0, spec.outer_width,
                     attachment_width + 2.0});
  r.items.push_back({"fin_thickness", spec.fin_thickness >= 1.0, spec.fin_thickness, 1.0});
  r.items.push_back({"inner_width", spec.inner_width <= attachment_width - 2.0, spec.inner_width,
                     attachment_width - 2.0});
  return r;
}

}  // namespace rollersim
