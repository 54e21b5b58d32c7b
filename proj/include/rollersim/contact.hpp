#pragma once

#include <span>
#include <vector>

#include "rollersim/types.hpp"

namespace rollersim {

/// Angular velocity a single contact imparts when its belt moves at `speed`
/// and the object rolls without slip. Of the family of solutions to
/// v = omega x p this is the one with no spin about the contact normal,
/// omega = (p x v) / |p|^2.
inline Vec3 induced_omega(const RollerContact& contact, double speed) {
  const double r2 = contact.position.squaredNorm();
  if (!(r2 > 0.0)) throw Error(ErrorCode::DegenerateContact, "contact position is at the object center");
  const Vec3 v = speed * contact.belt_dir;
  const double normal_component = v.dot(contact.position) / std::sqrt(r2);
  if (std::abs(normal_component) > kTangentTolerance) {
    throw Error(ErrorCode::NonTangentVelocity, "belt velocity has a component along the contact normal");
  }
  return contact.position.cross(v) / r2;
}

inline ContactKinematics contact_kinematics(const RollerContact& contact, double speed, const Vec3& omega,
                                            const Vec3& v_obj, double eps_slip = kDefaultSlipEpsilon) {
  ContactKinematics k;
  k.belt_velocity = speed * contact.belt_dir;
  k.surface_velocity = v_obj + omega.cross(contact.position);
  k.slip = k.belt_velocity - k.surface_velocity;
  k.slip_speed = k.slip.norm();
  k.state = k.slip_speed <= eps_slip ? SlipState::Sticking : SlipState::Slipping;
  return k;
}

struct ContactTorque {
  Vec3 torque = Vec3::Zero();
  // Sticking contact: static friction inside the cone, magnitude not
  // determined by kinematics alone.
  bool indeterminate = false;
};

/// Coulomb friction torque about the object center, scaled by the
/// multi-sphere radius weight.
inline ContactTorque contact_torque(const RollerContact& contact, const ContactKinematics& kin,
                                    double radius_weight) {
  if (kin.state == SlipState::Sticking || kin.slip_speed == 0.0) return {Vec3::Zero(), true};
  const Vec3 force = contact.friction_limit() * kin.slip / kin.slip_speed;
  return {radius_weight * contact.position.cross(force), false};
}

/// Weighted slip power D = sum r_i mu_i |F_i^n| |v_i - (v_obj + omega x p_i)|.
/// Convex in (omega, v_obj); its stationary points are exactly the friction
/// torque balance.
inline double dissipation(std::span<const RollerContact> contacts, std::span<const double> speeds,
                          const Vec3& omega, const Vec3& v_obj, std::span<const double> radius_weights) {
  if (contacts.size() != speeds.size() || contacts.size() != radius_weights.size()) {
    throw Error(ErrorCode::BadLength, "contacts, speeds and radius weights must have equal length");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Vec3 slip = speeds[i] * contacts[i].belt_dir - (v_obj + omega.cross(contacts[i].position));
    d += radius_weights[i] * contacts[i].friction_limit() * slip.norm();
  }
  return d;
}

inline double dissipation(std::span<const RollerContact> contacts, const BeltCommand& command, const Vec3& omega,
                          const Vec3& v_obj, std::span<const double> radius_weights) {
  return dissipation(contacts, std::span<const double>(command.speeds), omega, v_obj, radius_weights);
}

inline std::vector<double> unit_weights(std::size_t n) { return std::vector<double>(n, 1.0); }

}  // namespace rollersim
