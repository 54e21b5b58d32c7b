#pragma once

#include <string>
#include <vector>

#include "rollersim/types.hpp"

namespace rollersim {

struct PlanSegment {
  BeltCommand command;
  double duration = 0.0;  // s
  Vec3 expected_omega = Vec3::Zero();
  Vec3 expected_v = Vec3::Zero();
};

enum class PlanStatus { Success, Partial };

struct Plan {
  std::vector<PlanSegment> segments;
  Pose start_pose;
  Pose goal_pose;
  Pose expected_final_pose;
  double detour_ratio = 1.0;
  PlanStatus status = PlanStatus::Success;

  double total_duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
  }

  /// Sum of |omega| * duration over all segments (rad).
  double rotation_travel() const {
    double a = 0.0;
    for (const auto& s : segments) a += s.expected_omega.norm() * s.duration;
    return a;
  }
};

/// One constant command held for `duration` seconds.
struct ScheduleEntry {
  std::vector<double> speeds;
  double duration = 0.0;  // s

  bool operator==(const ScheduleEntry&) const = default;
};

using Schedule = std::vector<ScheduleEntry>;

inline Schedule to_schedule(const Plan& plan) {
  Schedule s;
  s.reserve(plan.segments.size());
  for (const auto& seg : plan.segments) s.push_back({seg.command.speeds, seg.duration});
  return s;
}

inline std::string to_string(PlanStatus s) { return s == PlanStatus::Success ? "success" : "partial"; }

}  // namespace rollersim
