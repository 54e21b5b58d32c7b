#include <gtest/gtest.h>

#include "rollersim/contact.hpp"
#include "test_support.hpp"

using namespace rollersim;
using rollersim::testing::Rng;

namespace {

RollerContact make_contact(const Vec3& p, const Vec3& belt, double force = 1.0, double mu = 1.0) {
  return RollerContact{p, belt, force, mu};
}

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

}  // namespace

TEST(InducedOmega, UnitContact) {
  const auto c = make_contact(Vec3(1, 0, 0), Vec3(0, 0, 1));
  const Vec3 w = induced_omega(c, 1.0);
  expect_vec_near(w, Vec3(0, -1, 0), 1e-15);
  expect_vec_near(w.cross(c.position), Vec3(0, 0, 1), 1e-15);
}

TEST(InducedOmega, ScalesWithInverseRadius) {
  const auto c = make_contact(Vec3(0, 0, 2), Vec3(1, 0, 0));
  const Vec3 w = induced_omega(c, 1.0);
  expect_vec_near(w, Vec3(0, 0.5, 0), 1e-15);
  expect_vec_near(w.cross(c.position), Vec3(1, 0, 0), 1e-15);
}

TEST(InducedOmega, RejectsNormalVelocity) {
  // Bypass contact validation: belt parallel to the position.
  const auto c = make_contact(Vec3(1, 0, 0), Vec3(1, 0, 0));
  try {
    induced_omega(c, 0.5);
    FAIL() << "expected NonTangentVelocity";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonTangentVelocity);
  }
}

TEST(InducedOmega, RejectsDegenerateContact) {
  const auto c = make_contact(Vec3::Zero(), Vec3(1, 0, 0));
  try {
    induced_omega(c, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateContact);
  }
}

TEST(InducedOmega, AlwaysOrthogonalToPosition) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    RollerContact c;
    c.position = rng.unit_vector() * rng.uniform(0.1, 3.0);
    c.belt_dir = rng.tangent_at(c.position);
    const double s = rng.uniform(-2.0, 2.0);
    const Vec3 w = induced_omega(c, s);
    EXPECT_LE(std::abs(w.dot(c.position.normalized())), 1e-9);
    expect_vec_near(w.cross(c.position), s * c.belt_dir, 1e-12);
  }
}

TEST(ContactKinematics, Examples) {
  const auto c = make_contact(Vec3(1, 0, 0), Vec3(0, 0, 1));
  auto k = contact_kinematics(c, 1.0, Vec3::Zero(), Vec3::Zero());
  expect_vec_near(k.slip, Vec3(0, 0, 1), 0.0);
  EXPECT_EQ(k.state, SlipState::Slipping);

  k = contact_kinematics(c, 1.0, Vec3(1, -1, 0), Vec3::Zero());
  expect_vec_near(k.slip, Vec3::Zero(), 0.0);
  EXPECT_EQ(k.state, SlipState::Sticking);

  k = contact_kinematics(c, 1.0, Vec3(0.5, -0.5, 0), Vec3::Zero());
  expect_vec_near(k.slip, Vec3(0, 0, 0.5), 1e-15);
  EXPECT_EQ(k.state, SlipState::Slipping);
}

TEST(ContactKinematics, ThresholdIsConfigurable) {
  const auto c = make_contact(Vec3(1, 0, 0), Vec3(0, 0, 1));
  const auto k = contact_kinematics(c, 1e-5, Vec3::Zero(), Vec3::Zero(), 1e-4);
  EXPECT_EQ(k.state, SlipState::Sticking);
  EXPECT_EQ(contact_kinematics(c, 1e-5, Vec3::Zero(), Vec3::Zero()).state, SlipState::Slipping);
}

TEST(ContactTorque, Examples) {
  auto c = make_contact(Vec3(1, 0, 0), Vec3(0, 0, 1));
  auto k = contact_kinematics(c, 1.0, Vec3(0.5, -0.5, 0), Vec3::Zero());
  auto t = contact_torque(c, k, 1.0);
  expect_vec_near(t.torque, Vec3(0, -1, 0), 1e-15);
  EXPECT_FALSE(t.indeterminate);

  c = make_contact(Vec3(0, 1, 0), Vec3(0, 0, 1));
  k = contact_kinematics(c, 0.5, Vec3::Zero(), Vec3::Zero());
  t = contact_torque(c, k, 1.0);
  expect_vec_near(t.torque, Vec3(1, 0, 0), 1e-15);

  k = contact_kinematics(c, 0.0, Vec3::Zero(), Vec3::Zero());
  t = contact_torque(c, k, 1.0);
  EXPECT_TRUE(t.indeterminate);
  expect_vec_near(t.torque, Vec3::Zero(), 0.0);
}

TEST(ContactTorque, MagnitudeLaw) {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    RollerContact c;
    c.position = rng.unit_vector() * rng.uniform(0.2, 2.0);
    c.belt_dir = rng.tangent_at(c.position);
    c.normal_force = rng.uniform(0.1, 3.0);
    c.friction = rng.uniform(0.1, 1.0);
    const double r = rng.uniform(0.1, 2.0);
    const auto k = contact_kinematics(c, rng.uniform(-1, 1), rng.unit_vector() * rng.uniform(0, 2),
                                      rng.unit_vector() * rng.uniform(0, 1));
    const auto t = contact_torque(c, k, r);
    ASSERT_EQ(k.state, SlipState::Slipping);
    const double expected = r * c.friction_limit() * c.position.normalized().cross(k.slip.normalized()).norm() *
                            c.position.norm();
    EXPECT_NEAR(t.torque.norm(), expected, 1e-12);
  }
}

TEST(Dissipation, Examples) {
  const std::vector<RollerContact> e1 = {make_contact(Vec3(1, 0, 0), Vec3(0, 0, 1)),
                                         make_contact(Vec3(0, 1, 0), Vec3(0, 0, 1))};
  const std::vector<double> speeds = {1.0, 1.0};
  const std::vector<double> w = {1.0, 1.0};
  EXPECT_NEAR(dissipation(e1, speeds, Vec3(1, -1, 0), Vec3::Zero(), w), 0.0, 1e-15);
  EXPECT_NEAR(dissipation(e1, speeds, Vec3(0.5, -0.5, 0), Vec3::Zero(), w), 1.0, 1e-15);
  EXPECT_EQ(dissipation({}, std::span<const double>{}, Vec3(1, 2, 3), Vec3::Zero(), std::span<const double>{}), 0.0);
}

TEST(Dissipation, Convexity) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RollerContact> cs;
    std::vector<double> s, w;
    const int n = rng.integer(1, 5);
    for (int i = 0; i < n; ++i) {
      RollerContact c;
      c.position = rng.unit_vector() * rng.uniform(0.2, 2.0);
      c.belt_dir = rng.tangent_at(c.position);
      c.normal_force = rng.uniform(0.1, 2.0);
      c.friction = rng.uniform(0.1, 1.0);
      cs.push_back(c);
      s.push_back(rng.uniform(-1, 1));
      w.push_back(rng.uniform(0.1, 2.0));
    }
    const Vec3 wa = rng.unit_vector() * rng.uniform(0, 3), wb = rng.unit_vector() * rng.uniform(0, 3);
    const Vec3 va = rng.unit_vector() * rng.uniform(0, 1), vb = rng.unit_vector() * rng.uniform(0, 1);
    const double lam = rng.uniform(0, 1);
    const double lhs = dissipation(cs, s, lam * wa + (1 - lam) * wb, lam * va + (1 - lam) * vb, w);
    const double rhs = lam * dissipation(cs, s, wa, va, w) + (1 - lam) * dissipation(cs, s, wb, vb, w);
    EXPECT_LE(lhs, rhs + 1e-9);
  }
}

TEST(Dissipation, GradientIsNegativeTorqueSum) {
  Rng rng(5);
  int checked = 0;
  while (checked < 200) {
    std::vector<RollerContact> cs;
    std::vector<double> s, w;
    const int n = rng.integer(1, 4);
    for (int i = 0; i < n; ++i) {
      RollerContact c;
      c.position = rng.unit_vector();
      c.belt_dir = rng.tangent_at(c.position);
      c.normal_force = rng.uniform(0.5, 2.0);
      c.friction = rng.uniform(0.3, 1.0);
      cs.push_back(c);
      s.push_back(rng.uniform(-1, 1));
      w.push_back(rng.uniform(0.5, 1.5));
    }
    const Vec3 omega = rng.unit_vector() * rng.uniform(0, 2);
    Vec3 torque = Vec3::Zero();
    bool all_slip = true;
    for (int i = 0; i < n; ++i) {
      const auto k = contact_kinematics(cs[i], s[i], omega, Vec3::Zero());
      if (k.slip_speed <= 1e-3) all_slip = false;
      torque += contact_torque(cs[i], k, w[i]).torque;
    }
    if (!all_slip) continue;
    const double h = 1e-6;
    Vec3 grad;
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e(a) = h;
      grad(a) = (dissipation(cs, s, omega + e, Vec3::Zero(), w) - dissipation(cs, s, omega - e, Vec3::Zero(), w)) /
                (2 * h);
    }
    EXPECT_LE((grad + torque).norm(), 1e-4);
    ++checked;
  }
}
