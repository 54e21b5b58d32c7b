#pragma once

#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rollersim/planner.hpp"

namespace rollersim {

/// Equatorial ring azimuths (degrees) for 2, 3 and 4 contacts.
inline std::vector<double> ring_azimuths(int contacts) {
  switch (contacts) {
    case 2: return {0.0, 135.0};
    case 3: return {45.0, -45.0, 180.0};
    case 4: return {45.0, -45.0, 135.0, -135.0};
    default: throw Error(ErrorCode::ValidationError, "ring scenarios have 2 to 4 contacts");
  }
}

inline Scenario ring_scenario(int contacts) {
  return presets::angled_ring("ring-" + std::to_string(contacts) + "rr", 0.035, ring_azimuths(contacts));
}

/// Uniformly distributed orientations, reproducible per seed.
inline std::vector<Orientation> random_goals(int count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Orientation> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  while (static_cast<int>(out.size()) < count) {
    const double w = n(gen), x = n(gen), y = n(gen), z = n(gen);
    if (w * w + x * x + y * y + z * z < 1e-12) continue;
    out.emplace_back(w, x, y, z);
  }
  return out;
}

struct SweepOptions {
  int min_contacts = 2;
  int max_contacts = 4;
  int goals = 50;
  std::uint64_t seed = 0;
  PlannerOptions planner;
};

struct SweepRow {
  int contact_count = 0;
  int goal_index = 0;
  double detour_ratio = 0.0;  // NaN when planning failed
  std::size_t segments = 0;
  double coverage = 0.0;
  std::string failure;  // empty on success
};

using SweepProgress = std::function<void(const SweepRow&)>;

/// Plans the same seeded goals on each ring scenario in the contact range.
inline std::vector<SweepRow> sweep(const SweepOptions& o, const SweepProgress& progress = {}) {
  if (o.goals < 1) throw Error(ErrorCode::ValidationError, "goals must be >= 1");
  if (o.min_contacts > o.max_contacts) throw Error(ErrorCode::ValidationError, "empty contact range");
  for (int n = o.min_contacts; n <= o.max_contacts; ++n) ring_azimuths(n);
  PlannerOptions po = o.planner;
  po.seed = o.seed;
  const auto goals = random_goals(o.goals, o.seed);
  std::vector<SweepRow> rows;
  for (int n = o.min_contacts; n <= o.max_contacts; ++n) {
    const auto s = ring_scenario(n);
    const double coverage = reachable_set(s, po.reach_samples, po).coverage;
    for (int g = 0; g < o.goals; ++g) {
      SweepRow row{n, g, std::numeric_limits<double>::quiet_NaN(), 0, coverage, {}};
      try {
        const auto plan = plan_rotation(s, Orientation::identity(), goals[static_cast<std::size_t>(g)], po);
        if (plan.status == PlanStatus::Success) {
          row.detour_ratio = plan.detour_ratio;
          row.segments = plan.segments.size();
        } else {
          row.failure = "partial plan";
        }
      } catch (const Error& e) {
        row.failure = e.what();
      }
      if (progress) progress(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "contact_count,goal_index,detour_ratio,segments,coverage\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%zu,%.17g\n", r.contact_count, r.goal_index, r.detour_ratio,
                  r.segments, r.coverage);
    out += buf;
  }
  return out;
}

/// Mean detour ratio over successful rows with the given contact count.
inline double mean_detour(const std::vector<SweepRow>& rows, int contacts) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.contact_count == contacts && r.failure.empty()) {
      sum += r.detour_ratio;
      ++n;
    }
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace rollersim
