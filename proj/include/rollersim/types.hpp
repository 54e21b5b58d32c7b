#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "rollersim/errors.hpp"

namespace rollersim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kUnitTolerance = 1e-9;
inline constexpr double kTangentTolerance = 1e-6;
inline constexpr double kDefaultSlipEpsilon = 1e-7;  // m/s

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

inline bool is_unit(const Vec3& v, double tol = kUnitTolerance) {
  return std::abs(v.norm() - 1.0) <= tol;
}

/// Skew-symmetric matrix with skew(p) * x == p.cross(x).
inline Mat3 skew(const Vec3& p) {
  Mat3 m;
  m << 0.0, -p.z(), p.y(),
       p.z(), 0.0, -p.x(),
       -p.y(), p.x(), 0.0;
  return m;
}

/// Unit quaternion, scalar-first, kept in canonical form (w >= 0).
class Orientation {
 public:
  Orientation() : q_(Eigen::Quaterniond::Identity()) {}

  Orientation(double w, double x, double y, double z) : q_(w, x, y, z) { normalize(); }

  explicit Orientation(const Eigen::Quaterniond& q) : q_(q) { normalize(); }

  static Orientation identity() { return {}; }

  /// Keeps the coefficients bit-for-bit when they are already a unit
  /// quaternion with w >= 0 (to rounding); normalizes otherwise.
  static Orientation from_unit(double w, double x, double y, double z) {
    const double n2 = w * w + x * x + y * y + z * z;
    if (w >= 0.0 && std::abs(n2 - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) {
      Orientation o;
      o.q_ = Eigen::Quaterniond(w, x, y, z);
      return o;
    }
    return Orientation(w, x, y, z);
  }

  static Orientation from_axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0 || angle == 0.0) return {};
    return Orientation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis / n)));
  }

  /// Exact exponential map of a rotation vector (axis * angle).
  static Orientation exp(const Vec3& rotation_vector) {
    const double angle = rotation_vector.norm();
    if (angle == 0.0) return {};
    const double half = 0.5 * angle;
    const Vec3 xyz = rotation_vector * (std::sin(half) / angle);
    return Orientation(std::cos(half), xyz.x(), xyz.y(), xyz.z());
  }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }
  Vec3 vec() const { return q_.vec(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }
  double norm() const { return q_.norm(); }

  Orientation inverse() const { return Orientation(q_.conjugate()); }

  /// this * other: apply `other` first, then `this` (hand-frame composition).
  Orientation operator*(const Orientation& other) const { return Orientation(q_ * other.q_); }

  Vec3 rotate(const Vec3& v) const { return q_ * v; }

  /// Rotation angle in [0, pi].
  double angle() const { return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w())); }

  /// Rotation axis; x-axis for the identity.
  Vec3 axis() const {
    const Vec3 v = q_.vec();
    const double n = v.norm();
    if (n == 0.0) return Vec3::UnitX();
    return v / n;
  }

  /// Rotation vector (axis * angle) with angle in [0, pi].
  Vec3 log() const {
    const double n = q_.vec().norm();
    if (n == 0.0) return Vec3::Zero();
    return q_.vec() / n * (2.0 * std::atan2(n, q_.w()));
  }

  bool operator==(const Orientation& o) const {
    return q_.w() == o.q_.w() && q_.x() == o.q_.x() && q_.y() == o.q_.y() && q_.z() == o.q_.z();
  }

 private:
  void normalize() {
    const double n = q_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::ValidationError, "orientation quaternion must be finite and non-zero");
    }
    q_.coeffs() /= n;
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
  }

  Eigen::Quaterniond q_;
};

/// Minimal rotation angle between two orientations, in [0, pi].
inline double geodesic_distance(const Orientation& a, const Orientation& b) {
  const Eigen::Quaterniond d = a.quaternion().conjugate() * b.quaternion();
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

struct Pose {
  Orientation orientation;
  Vec3 position = Vec3::Zero();
};

/// One active-surface contact. Position is in the hand frame, measured from
/// the nominal object center; belt_dir is the direction of positive belt
/// travel at the contact.
struct RollerContact {
  Vec3 position = Vec3::Zero();
  Vec3 belt_dir = Vec3::UnitZ();
  double normal_force = 1.0;  // N
  double friction = 1.0;      // mu

  double friction_limit() const { return friction * normal_force; }

  bool operator==(const RollerContact&) const = default;
};

/// Throws ValidationError naming the violated invariant. `normal` is the
/// surface normal at the contact.
inline void validate(const RollerContact& c, const Vec3& normal) {
  if (!is_finite(c.position) || !is_finite(c.belt_dir) || !std::isfinite(c.normal_force) ||
      !std::isfinite(c.friction)) {
    throw Error(ErrorCode::ValidationError, "contact fields must be finite");
  }
  if (!(c.position.norm() > 0.0)) throw Error(ErrorCode::ValidationError, "contact position norm must be positive");
  if (!is_unit(c.belt_dir)) throw Error(ErrorCode::ValidationError, "belt_dir must be a unit vector");
  if (std::abs(c.belt_dir.dot(normal.normalized())) > kTangentTolerance) {
    throw Error(ErrorCode::ValidationError, "belt_dir orthogonality violated (belt not tangent at contact)");
  }
  if (c.normal_force < 0.0) throw Error(ErrorCode::ValidationError, "normal_force must be >= 0");
  if (c.friction < 0.0) throw Error(ErrorCode::ValidationError, "friction must be >= 0");
}

/// Spherical contact: the normal is along the position.
inline void validate(const RollerContact& c) {
  const double r = c.position.norm();
  validate(c, r > 0.0 && std::isfinite(r) ? Vec3(c.position / r) : Vec3(Vec3::UnitX()));
}

/// Signed belt speeds, one per contact.
struct BeltCommand {
  std::vector<double> speeds;
  double speed_limit = 1.0;

  BeltCommand() = default;
  BeltCommand(std::vector<double> s, double limit) : speeds(std::move(s)), speed_limit(limit) {}

  std::size_t size() const { return speeds.size(); }

  bool within_limit(double slack = 1e-12) const {
    return std::all_of(speeds.begin(), speeds.end(),
                       [&](double s) { return std::abs(s) <= speed_limit * (1.0 + slack); });
  }

  /// Clamp every speed into [-limit, limit]; returns true if anything changed.
  bool clamp() {
    bool changed = false;
    for (double& s : speeds) {
      const double c = std::clamp(s, -speed_limit, speed_limit);
      if (c != s) {
        s = c;
        changed = true;
      }
    }
    return changed;
  }

  bool operator==(const BeltCommand&) const = default;
};

enum class SlipState { Sticking, Slipping };

struct ContactKinematics {
  Vec3 belt_velocity = Vec3::Zero();
  Vec3 surface_velocity = Vec3::Zero();
  Vec3 slip = Vec3::Zero();
  double slip_speed = 0.0;
  SlipState state = SlipState::Sticking;
};

}  // namespace rollersim
