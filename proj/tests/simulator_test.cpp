#include <gtest/gtest.h>

#include <numbers>

#include "rollersim/simulator.hpp"
#include "test_support.hpp"

using namespace rollersim;

namespace {

constexpr double kPi = std::numbers::pi;

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_LE((a - b).norm(), tol) << "got (" << a.transpose() << ") expected (" << b.transpose() << ")";
}

Scenario spin() { return presets::spin_2rr(); }

const Schedule kQuarterTurn = {{{kPi / 2, kPi / 2}, 1.0}};

}  // namespace

TEST(Step, ExactExponentialMap) {
  const auto s = spin();
  const auto traj = run(s, kQuarterTurn, s.sim);
  const auto& q = traj.back().state.orientation;
  EXPECT_NEAR(q.w(), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(q.x(), 0.0, 1e-12);
  EXPECT_NEAR(q.y(), 0.0, 1e-12);
  EXPECT_NEAR(q.z(), std::sqrt(0.5), 1e-12);
  EXPECT_DOUBLE_EQ(traj.back().state.t, 1.0);
  expect_vec_near(traj.back().omega, Vec3(0, 0, kPi / 2), 1e-12);
}

TEST(Step, ZeroCommandOnlyAdvancesTime) {
  const auto s = presets::sphere_4rr();
  ObjectState st;
  st.orientation = Orientation(0.9, 0.1, -0.2, 0.3);
  st.position = Vec3(0.01, 0.02, -0.03);
  const auto r = step(st, s, s.zero_command(), s.sim);
  EXPECT_EQ(r.state.orientation, st.orientation);
  EXPECT_EQ(r.state.position, st.position);
  EXPECT_DOUBLE_EQ(r.state.t, s.sim.dt);
  EXPECT_EQ(r.record.dissipation, 0.0);
}

TEST(Step, TwoContactSingleStep) {
  const auto s = presets::sphere_2rr();
  SimConfig cfg = s.sim;
  cfg.dt = 0.1;
  const auto r = step(ObjectState{}, s, s.command({1, 1}), cfg);
  EXPECT_NEAR(r.state.orientation.angle(), 0.1 * std::sqrt(2.0), 1e-12);
  expect_vec_near(r.state.orientation.axis(), Vec3(1, -1, 0).normalized(), 1e-12);
  expect_vec_near(r.record.omega, Vec3(1, -1, 0), 1e-12);
  expect_vec_near(r.state.position, Vec3::Zero(), 1e-12);
}

TEST(Step, Errors) {
  const auto s = presets::sphere_2rr();
  auto code = [&](const BeltCommand& c) {
    try {
      step(ObjectState{}, s, c, s.sim);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::SolverFailure;
  };
  EXPECT_EQ(code(s.command({1, 1, 1})), ErrorCode::BadLength);
  EXPECT_EQ(code(s.command({2, 0})), ErrorCode::ValidationError);

  auto lift = presets::sphere_4rr();
  SimConfig tight = lift.sim;
  tight.workspace_radius = 1e-3;
  tight.dt = 0.01;
  try {
    step(ObjectState{}, lift, lift.command({1, 1, 1, 1}), tight);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Escaped);
  }
}

TEST(Run, EmptyScheduleGivesInitialSample) {
  const auto s = presets::sphere_4rr();
  const auto traj = run(s, Schedule{}, s.sim);
  ASSERT_EQ(traj.samples.size(), 1u);
  EXPECT_EQ(traj.samples[0].state, ObjectState{});
  EXPECT_EQ(traj.contact_count(), 4u);
  EXPECT_FALSE(traj.escaped);
}

TEST(Run, SymmetricLiftEscapes) {
  const auto s = presets::sphere_4rr();
  SimConfig cfg = s.sim;
  cfg.dt = 0.05;
  const auto traj = run(s, Schedule{{{1, 1, 1, 1}, 20.0}}, cfg);
  EXPECT_TRUE(traj.escaped);
  const auto& last = traj.back();
  EXPECT_GT(last.state.position.norm(), cfg.workspace_radius);
  EXPECT_GE(last.state.t, 10.0 - 1e-9);
  EXPECT_LE(last.state.t, 10.05 + 1e-9);
  double prev = -1.0;
  for (const auto& smp : traj.samples) {
    EXPECT_GT(smp.state.position.z(), prev);
    prev = smp.state.position.z();
    EXPECT_EQ(smp.state.orientation, Orientation::identity());
  }
}

TEST(Run, TimesStrictlyIncreaseAndSegmentsEndExactly) {
  const auto s = presets::sphere_2rr();
  SimConfig cfg = s.sim;
  cfg.dt = 0.03;
  const Schedule sched = {{{1, 0.5}, 0.1}, {{-0.2, 0.3}, 0.25}};
  const auto traj = run(s, sched, cfg);
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    EXPECT_GT(traj.samples[i].state.t, traj.samples[i - 1].state.t);
  EXPECT_DOUBLE_EQ(traj.back().state.t, 0.35);
  // 0.1 / 0.03 -> 4 steps, 0.25 / 0.03 -> 9 steps.
  EXPECT_EQ(traj.samples.size(), 1u + 4u + 9u);
}

TEST(Run, RejectsBadSchedule) {
  const auto s = presets::sphere_2rr();
  EXPECT_THROW(run(s, Schedule{{{1, 1}, 0.0}}, s.sim), Error);
  EXPECT_THROW(run(s, Schedule{{{1}, 1.0}}, s.sim), Error);
}

TEST(Run, SingleSegmentIsDtInvariant) {
  const auto s = presets::sphere_2rr();
  const Schedule sched = {{{0.7, -0.4}, 1.3}};
  SimConfig a = s.sim, b = s.sim, c = s.sim;
  b.dt = a.dt / 2;
  c.dt = 0.37;
  const auto qa = run(s, sched, a).back().state.orientation;
  const auto qb = run(s, sched, b).back().state.orientation;
  const auto qc = run(s, sched, c).back().state.orientation;
  EXPECT_LE(geodesic_distance(qa, qb), 1e-12);
  EXPECT_LE(geodesic_distance(qa, qc), 1e-12);
}

TEST(Run, TimeReversalReturnsToStart) {
  const std::vector<std::pair<Scenario, std::vector<double>>> cases = {{presets::sphere_2rr(), {0.8, 0.6}},
                                                                        {presets::spin_2rr(), {1.1, 1.1}}};
  for (const auto& [s, speeds] : cases) {
    const Schedule sched = {{speeds, 1.7}, {{-speeds[0], -speeds[1]}, 1.7}};
    const auto traj = run(s, sched, s.sim);
    EXPECT_LE(geodesic_distance(traj.back().state.orientation, Orientation::identity()), 1e-6) << s.name;
    expect_vec_near(traj.back().state.position, Vec3::Zero(), 1e-9);
  }
}

TEST(Run, Deterministic) {
  const auto s = presets::model_o_3rr();
  const Schedule sched = {{{0.05, -0.02, 0.01}, 0.4}, {{-0.01, 0.03, 0.05}, 0.3}};
  const auto a = run(s, sched, s.sim);
  const auto b = run(s, sched, s.sim);
  EXPECT_TRUE(a == b);
}

TEST(Run, OrientationNormDrift) {
  const auto s = spin();
  Stepper stepper(s, s.sim);
  ObjectState st;
  const std::vector<double> speeds = {1.3, 1.3};
  double worst = 0.0;
  for (long k = 0; k < 1'000'000; ++k) {
    st = stepper.advance(st, speeds, s.sim.dt, st.t + s.sim.dt).state;
    worst = std::max(worst, std::abs(st.orientation.norm() - 1.0));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(SuccessCheck, HoldAtTarget) {
  const auto s = presets::sphere_4rr();
  SimConfig cfg = s.sim;
  cfg.success_tol = 0.1;
  const auto traj = run(s, Schedule{{{0, 0, 0, 0}, 1.0}}, cfg);
  const auto r = success_check(traj, Orientation::identity(), cfg);
  EXPECT_TRUE(r.achieved);
  ASSERT_TRUE(r.time_to_success.has_value());
  EXPECT_NEAR(*r.time_to_success, cfg.success_hold, 1e-12);
}

TEST(SuccessCheck, NeverApproached) {
  const auto s = presets::sphere_4rr();
  const auto traj = run(s, Schedule{{{0, 0, 0, 0}, 1.0}}, s.sim);
  const auto r = success_check(traj, Orientation::from_axis_angle(Vec3::UnitX(), 1.0), s.sim);
  EXPECT_FALSE(r.achieved);
  EXPECT_FALSE(r.time_to_success.has_value());
}

TEST(SuccessCheck, QuarterTurnTiming) {
  const auto s = spin();
  SimConfig cfg = s.sim;
  cfg.success_tol = 1e-3;
  cfg.success_hold = 0.0;
  const auto traj = run(s, Schedule{{{kPi / 2, kPi / 2}, 2.0}}, cfg);
  const auto r = success_check(traj, Orientation::from_axis_angle(Vec3::UnitZ(), kPi / 2), cfg);
  ASSERT_TRUE(r.achieved);
  EXPECT_NEAR(*r.time_to_success, 1.0, cfg.dt);
}

TEST(SuccessCheck, WindowResetsWhenLeavingTolerance) {
  const auto s = spin();
  SimConfig cfg = s.sim;
  cfg.success_tol = 0.05;
  cfg.success_hold = 0.2;
  // Pass through the target without stopping, then come back and stay.
  const Schedule sched = {{{1.0, 1.0}, 1.0}, {{-1.0, -1.0}, 0.5}, {{0, 0}, 1.0}};
  const auto traj = run(s, sched, cfg);
  const auto target = Orientation::from_axis_angle(Vec3::UnitZ(), 0.5);
  const auto r = success_check(traj, target, cfg);
  ASSERT_TRUE(r.achieved);
  // Second approach reaches 0.55 rad at t = 1.45 s; the hold ends 0.2 s later.
  EXPECT_NEAR(*r.time_to_success, 1.45 + 0.2, 2 * cfg.dt);
}
