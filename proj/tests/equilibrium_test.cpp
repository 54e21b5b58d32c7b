#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "rollersim/equilibrium.hpp"
#include "test_support.hpp"

using namespace rollersim;
using rollersim::testing::RandomCase;
using rollersim::testing::Rng;

namespace {

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_LE((a - b).norm(), tol) << "got (" << a.transpose() << ") expected (" << b.transpose() << ")";
}

std::vector<RollerContact> e1_contacts() {
  return {{Vec3(1, 0, 0), Vec3(0, 0, 1), 1.0, 1.0}, {Vec3(0, 1, 0), Vec3(0, 0, 1), 1.0, 1.0}};
}

std::vector<RollerContact> sphere4() {
  return {{Vec3(1, 0, 0), Vec3(0, 0, 1), 1.0, 1.0},
          {Vec3(0, 1, 0), Vec3(0, 0, 1), 1.0, 1.0},
          {Vec3(-1, 0, 0), Vec3(0, 0, 1), 1.0, 1.0},
          {Vec3(0, -1, 0), Vec3(0, 0, 1), 1.0, 1.0}};
}

// Independent convex-hull membership oracle: enumerate supports, solve the
// affine least-squares problem on each, accept a non-negative exact fit.
bool in_convex_hull(const std::vector<Vec3>& pts, const Vec3& q, double tol) {
  const int n = static_cast<int>(pts.size());
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) idx.push_back(i);
    const int k = static_cast<int>(idx.size());
    const Vec3 base = pts[idx.back()];
    if (k == 1) {
      if ((q - base).norm() <= tol) return true;
      continue;
    }
    Eigen::MatrixXd a(3, k - 1);
    for (int j = 0; j < k - 1; ++j) a.col(j) = pts[idx[j]] - base;
    const Eigen::VectorXd alpha = a.completeOrthogonalDecomposition().solve(q - base);
    const double last = 1.0 - alpha.sum();
    if ((a * alpha + base - q).norm() <= tol && alpha.minCoeff() >= -1e-9 && last >= -1e-9) return true;
  }
  return false;
}

}  // namespace

TEST(EquilibriumOmega, SingleContactRollsWithoutSlip) {
  const std::vector<RollerContact> c = {{Vec3(0, 0, -1), Vec3(1, 0, 0), 1.0, 1.0}};
  const std::vector<double> s = {1.0}, w = {1.0};
  const auto sol = equilibrium_omega(c, s, w);
  expect_vec_near(sol.omega, Vec3(0, -1, 0), 1e-12);
  EXPECT_NEAR(sol.dissipation, 0.0, 1e-12);
  EXPECT_EQ(sol.per_contact[0].state, SlipState::Sticking);
  EXPECT_TRUE(sol.converged);
}

TEST(EquilibriumOmega, TwoContactsBothStick) {
  const auto c = e1_contacts();
  const std::vector<double> s = {1.0, 1.0}, w = {1.0, 1.0};
  const auto sol = equilibrium_omega(c, s, w);
  expect_vec_near(sol.omega, Vec3(1, -1, 0), 1e-12);
  EXPECT_NEAR(sol.dissipation, 0.0, 1e-12);
  EXPECT_EQ(sol.per_contact[0].state, SlipState::Sticking);
  EXPECT_EQ(sol.per_contact[1].state, SlipState::Sticking);
  // Grid oracle agrees.
  expect_vec_near(brute_force_omega(c, s, w, 2.0, 41), Vec3(1, -1, 0), 1e-4);
}

TEST(EquilibriumOmega, AntipodalFamilyReturnsMinimalNorm) {
  const std::vector<RollerContact> c = {{Vec3(1, 0, 0), Vec3(0, 1, 0), 1.0, 1.0},
                                        {Vec3(-1, 0, 0), Vec3(0, -1, 0), 1.0, 1.0}};
  const std::vector<double> s = {1.0, 1.0}, w = {1.0, 1.0};
  const auto sol = equilibrium_omega(c, s, w);
  expect_vec_near(sol.omega, Vec3(0, 0, 1), 1e-12);
  // Every member of (t, 0, 1) is slip-free.
  for (double t : {-2.0, 0.3, 5.0}) EXPECT_NEAR(dissipation(c, s, Vec3(t, 0, 1), Vec3::Zero(), w), 0.0, 1e-12);
}

TEST(EquilibriumOmega, Errors) {
  const std::vector<RollerContact> none;
  try {
    equilibrium_omega(none, std::span<const double>{}, std::span<const double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoContacts);
  }
  const auto c = e1_contacts();
  const std::vector<double> s = {1.0}, w = {1.0, 1.0};
  EXPECT_THROW(equilibrium_omega(c, s, w), Error);
}

TEST(EquilibriumOmega, SolutionInvariants) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomCase rc = rollersim::testing::random_unit_sphere_case(rng);
    const auto sol = equilibrium_omega(rc.contacts, rc.speeds, rc.weights);
    EXPECT_NEAR(sol.dissipation, dissipation(rc.contacts, rc.speeds, sol.omega, Vec3::Zero(), rc.weights), 1e-15);
    if (sol.all_slipping()) {
      EXPECT_LE(sol.torque_residual.norm(), 1e-8);
      // Summed torques match -grad D.
      const double h = 1e-6;
      Vec3 grad;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e(a) = h;
        grad(a) = (dissipation(rc.contacts, rc.speeds, sol.omega + e, Vec3::Zero(), rc.weights) -
                   dissipation(rc.contacts, rc.speeds, sol.omega - e, Vec3::Zero(), rc.weights)) /
                  (2 * h);
      }
      EXPECT_LE((grad + sol.torque_residual).norm(), 1e-4);
    }
  }
}

TEST(EquilibriumOmega, MatchesBruteForceOracle) {
  Rng rng(1234);
  for (int trial = 0; trial < 40; ++trial) {
    const RandomCase rc = rollersim::testing::random_unit_sphere_case(rng, 1, 4);
    const Vec3 w = equilibrium_omega(rc.contacts, rc.speeds, rc.weights).omega;
    const Vec3 b = brute_force_omega(rc.contacts, rc.speeds, rc.weights, 4.0, 21);
    const double dw = dissipation(rc.contacts, rc.speeds, w, Vec3::Zero(), rc.weights);
    const double db = dissipation(rc.contacts, rc.speeds, b, Vec3::Zero(), rc.weights);
    EXPECT_LE(dw, db + 1e-9);
    EXPECT_LE((w - b).norm(), 1e-3) << "trial " << trial << ", " << rc.contacts.size() << " contacts";
  }
}

TEST(BruteForceOracle, SingleContactGivesMinimalNormSpin) {
  const std::vector<RollerContact> c = {{Vec3(0, 0, 1), Vec3(1, 0, 0), 1.0, 0.7}};
  const std::vector<double> s = {0.8}, w = {1.0};
  expect_vec_near(brute_force_omega(c, s, w), induced_omega(c[0], 0.8), 1e-5);
}

TEST(EquilibriumOmega, ScalingLaws) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    RandomCase rc = rollersim::testing::random_unit_sphere_case(rng, 2, 4);
    const Vec3 base = equilibrium_omega(rc.contacts, rc.speeds, rc.weights).omega;
    const double c = rng.uniform(0.1, 10.0);
    auto scaled_force = rc.contacts;
    for (auto& k : scaled_force) k.normal_force *= c;
    expect_vec_near(equilibrium_omega(scaled_force, rc.speeds, rc.weights).omega, base, 1e-9);
    auto scaled_speed = rc.speeds;
    for (auto& s : scaled_speed) s *= c;
    expect_vec_near(equilibrium_omega(rc.contacts, scaled_speed, rc.weights).omega, c * base, 1e-9 * (1 + c));
  }
}

TEST(EquilibriumOmega, ColinearConsistency) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 omega_c = rng.unit_vector() * rng.uniform(0.2, 2.0);
    const Vec3 axis = omega_c.normalized();
    const Vec3 u = rng.tangent_at(axis);
    const Vec3 v = axis.cross(u);
    const int n = rng.integer(2, 4);
    std::vector<RollerContact> cs;
    std::vector<double> speeds, w(n, 1.0);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    for (int i = 0; i < n; ++i) {
      const double a = phase + (i + rng.uniform(0.1, 0.6)) * 2 * std::numbers::pi / n;
      RollerContact k;
      k.position = std::cos(a) * u + std::sin(a) * v;
      const Vec3 vel = omega_c.cross(k.position);
      k.belt_dir = vel.normalized();
      k.normal_force = rng.uniform(0.5, 2.0);
      k.friction = rng.uniform(0.3, 1.0);
      cs.push_back(k);
      speeds.push_back(vel.norm());
    }
    const auto sol = equilibrium_omega(cs, speeds, w);
    expect_vec_near(sol.omega, omega_c, 1e-9);
    EXPECT_LE(sol.dissipation, 1e-12);
    expect_vec_near(paper_weighted_omega(cs, speeds, w), omega_c, 1e-9);
  }
}

TEST(WeightedSumOmega, SingleContactIsInducedOmega) {
  const std::vector<RollerContact> c = {{Vec3(0, 0, -1), Vec3(1, 0, 0), 1.0, 1.0}};
  const std::vector<double> s = {0.7}, w = {1.0};
  expect_vec_near(paper_weighted_omega(c, s, w), induced_omega(c[0], 0.7), 0.0);
}

TEST(WeightedSumOmega, TwoContactCaseIsTheMean) {
  const auto c = e1_contacts();
  const std::vector<double> s = {1.0, 1.0}, w = {1.0, 1.0};
  expect_vec_near(paper_weighted_omega(c, s, w), Vec3(0.5, -0.5, 0), 1e-12);
  // The torque-balance solver disagrees here: both contacts can stick.
  const auto cmp = compare_solvers(c, s, w);
  EXPECT_NEAR(cmp.divergence, std::sqrt(0.5), 1e-9);
}

TEST(WeightedSumOmega, StaysInConvexHull) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomCase rc = rollersim::testing::random_unit_sphere_case(rng);
    const auto res = paper_weighted_solve(rc.contacts, rc.speeds, rc.weights);
    double sum = 0.0;
    for (double c : res.coefficients) {
      EXPECT_GE(c, 0.0);
      sum += c;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_TRUE(in_convex_hull(res.induced, res.omega, 1e-9));
  }
}

TEST(TranslationEquilibrium, SymmetricLift) {
  const auto c = sphere4();
  const BeltCommand cmd({1, 1, 1, 1}, 1.0);
  SolverOptions o;
  o.mode = SolveMode::FreeTranslation;
  const auto sol = translation_equilibrium(c, cmd, o);
  expect_vec_near(sol.omega, Vec3::Zero(), 1e-12);
  expect_vec_near(sol.v_obj, Vec3(0, 0, 1), 1e-12);
  EXPECT_NEAR(sol.dissipation, 0.0, 1e-12);
  EXPECT_NEAR(eq9_residual(c, cmd, sol.v_obj), 0.0, 1e-12);
}

TEST(TranslationEquilibrium, OpposedPairsRotateInstead) {
  const auto c = sphere4();
  const BeltCommand cmd({1, 1, -1, -1}, 1.0);
  // Oracle: the rotation solve gives a rigid roll about (1,-1,0).
  expect_vec_near(brute_force_omega(c, cmd.speeds, unit_weights(4), 2.0, 21), Vec3(1, -1, 0), 1e-4);
  try {
    translation_equilibrium(c, cmd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RotationNotCancelled);
  }
}

TEST(TranslationEquilibrium, SingleContactMedian) {
  const std::vector<RollerContact> c = {{Vec3(1, 0, 0), Vec3(0, 0, 1), 1.0, 1.0}};
  // A single contact cannot cancel rotation unless it is idle; check the
  // drift solve directly.
  const std::vector<double> s = {1.0};
  expect_vec_near(drift_velocity(c, s, Vec3::Zero()), Vec3(0, 0, 1), 1e-12);
}

TEST(TranslationEquilibrium, WeightedMedianBalancesForces) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomCase rc = rollersim::testing::random_unit_sphere_case(rng, 2, 5);
    const Vec3 v = drift_velocity(rc.contacts, rc.speeds, Vec3::Zero());
    Vec3 force = Vec3::Zero();
    bool sticking = false;
    for (std::size_t i = 0; i < rc.contacts.size(); ++i) {
      const Vec3 slip = rc.speeds[i] * rc.contacts[i].belt_dir - v;
      if (slip.norm() <= 1e-7) {
        sticking = true;
        continue;
      }
      force += rc.contacts[i].friction_limit() * slip.normalized();
    }
    if (!sticking) {
      EXPECT_LE(force.norm(), 1e-8);
    }
  }
}

TEST(Eq9Residual, Examples) {
  const std::vector<RollerContact> c = {{Vec3(1, 0, 0), Vec3(0, 1, 1).normalized(), 1.0, 1.0},
                                        {Vec3(-1, 0, 0), Vec3(0, -1, 1).normalized(), 1.0, 1.0}};
  const std::vector<double> s = {std::sqrt(2.0), std::sqrt(2.0)};
  EXPECT_NEAR(eq9_residual(c, s, Vec3(0, 0, 1)), 0.0, 1e-12);

  const std::vector<RollerContact> one = {{Vec3(1, 0, 0), Vec3(0, 1, 0), 1.0, 1.0}};
  const std::vector<double> s1 = {1.0};
  EXPECT_GT(eq9_residual(one, s1, Vec3(0, 0, 1)), 0.1);

  try {
    const std::vector<RollerContact> par = {{Vec3(1, 0, 0), Vec3(0, 0, 1), 1.0, 1.0}};
    const std::vector<double> s2 = {2.0};
    eq9_residual(par, s2, Vec3(0, 0, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateDirection);
  }
}

TEST(BruteForceOmega, Examples) {
  const auto c = e1_contacts();
  const std::vector<double> w = {1.0, 1.0};
  const std::vector<double> zero = {0.0, 0.0};
  expect_vec_near(brute_force_omega(c, zero, w, 2.0, 11), Vec3::Zero(), 1e-12);
  const std::vector<RollerContact> single = {{Vec3(0, 0, -1), Vec3(1, 0, 0), 1.0, 1.0}};
  const std::vector<double> s = {1.0}, w1 = {1.0};
  // The single-contact minimizer is a line; grid ties resolve to the
  // smallest-norm point, matching the solver's zero-spin choice.
  const Vec3 b = brute_force_omega(single, s, w1, 2.0, 21);
  expect_vec_near(b, equilibrium_omega(single, s, w1).omega, 1e-4);
  EXPECT_THROW(brute_force_omega(c, zero, w, 2.0, 5), Error);
}
