#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "rollersim/io.hpp"
#include "rollersim/planner.hpp"
#include "rollersim/sweep.hpp"
#include "rollersim/teleop/server.hpp"

using namespace rollersim;

namespace {

enum Exit { kOk = 0, kValidation = 2 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("rollersim");
  logger->set_pattern("rollersim: %l: %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("ROLLERSIM_LOG")) {
    const std::string v = env;
    if (v == "error" || v == "warn" || v == "info" || v == "debug") {
      spdlog::set_level(spdlog::level::from_str(v));
    } else {
      spdlog::warn("ignoring ROLLERSIM_LOG={} (expected error, warn, info or debug)", v);
    }
  }
}

Scenario load(const std::string& spec, bool lenient) {
  auto loaded = io::load_scenario(spec, {.strict = !lenient});
  for (const auto& w : loaded.warnings) spdlog::warn("{}: {}", spec, w);
  spdlog::info("scenario {} with {} contacts", loaded.scenario.name, loaded.scenario.contact_count());
  return std::move(loaded.scenario);
}

/// Writes to `path`, or to stdout when it is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text << std::flush;
  } else {
    io::write_text_file(path, text);
    spdlog::info("wrote {}", path);
  }
}

std::string fmt_vec(const Vec3& v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "(%.9g, %.9g, %.9g)", v.x(), v.y(), v.z());
  return buf;
}

std::string fmt_quat(const Orientation& q) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "(%.9g, %.9g, %.9g, %.9g)", q.w(), q.x(), q.y(), q.z());
  return buf;
}

struct SimulateArgs {
  std::string scenario, schedule, out, format;
  std::optional<double> dt;
  std::vector<double> target;
  bool lenient = false;
};

int simulate(const SimulateArgs& a) {
  const auto s = load(a.scenario, a.lenient);
  const auto schedule = io::load_schedule_file(a.schedule);
  SimConfig cfg = s.sim;
  if (a.dt) cfg.dt = *a.dt;
  const auto traj = run(s, schedule, cfg);
  const auto format = a.format.empty() ? io::format_for(a.out)
                                       : (a.format == "jsonl" ? io::TrajectoryFormat::JsonLines : io::TrajectoryFormat::Csv);
  emit(a.out, io::export_trajectory(traj, format));

  double energy = 0.0;
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    energy += traj.samples[i].dissipation * (traj.samples[i].state.t - traj.samples[i - 1].state.t);
  std::ostream& os = a.out.empty() ? std::cerr : std::cout;
  const auto& last = traj.back().state;
  os << "samples: " << traj.samples.size() << "\n"
     << "final t: " << last.t << " s\n"
     << "final orientation (w, x, y, z): " << fmt_quat(last.orientation) << "\n"
     << "final position: " << fmt_vec(last.position) << " m\n"
     << "total dissipation: " << energy << " J\n";
  if (traj.escaped) {
    os << "escaped: yes\n";
    spdlog::warn("object left the workspace at t = {} s", last.t);
  }
  if (!a.target.empty()) {
    const Orientation target(a.target[0], a.target[1], a.target[2], a.target[3]);
    const auto r = success_check(traj, target, cfg);
    os << "target error: " << geodesic_distance(last.orientation, target) << " rad\n"
       << "success: " << (r.achieved ? "yes" : "no") << "\n";
    if (r.time_to_success) os << "time to success: " << *r.time_to_success << " s\n";
  }
  return kOk;
}

struct PlanArgs {
  std::string scenario, out;
  std::vector<double> goal_quat, translate;
  std::uint64_t seed = 0;
  int max_segments = 64;
  bool lenient = false;
};

int plan(const PlanArgs& a) {
  if (a.goal_quat.empty() && a.translate.empty())
    throw Error(ErrorCode::ValidationError, "give --goal-quat, --translate or both");
  const auto s = load(a.scenario, a.lenient);
  PlannerOptions opts;
  opts.seed = a.seed;
  opts.segment_budget = a.max_segments;
  Plan p;
  if (!a.translate.empty()) {
    const Vec3 d(a.translate[0], a.translate[1], a.translate[2]);
    if (!a.goal_quat.empty()) {
      const Pose goal{Orientation(a.goal_quat[0], a.goal_quat[1], a.goal_quat[2], a.goal_quat[3]), d};
      p = plan_pose(s, Pose{}, goal, opts);
    } else {
      const double dist = d.norm();
      p = plan_translation(s, dist > 0.0 ? Vec3(d / dist) : Vec3(Vec3::UnitX()), dist, opts);
    }
  } else {
    p = plan_rotation(s, Orientation::identity(),
                      Orientation(a.goal_quat[0], a.goal_quat[1], a.goal_quat[2], a.goal_quat[3]), opts);
  }
  emit(a.out, io::save_plan(p));
  std::ostream& os = a.out.empty() ? std::cerr : std::cout;
  os << "status: " << to_string(p.status) << "\n"
     << "segments: " << p.segments.size() << "\n"
     << "duration: " << p.total_duration() << " s\n"
     << "detour_ratio: " << p.detour_ratio << "\n"
     << "expected final orientation error: "
     << geodesic_distance(p.expected_final_pose.orientation, p.goal_pose.orientation) << " rad\n"
     << "expected final position error: "
     << (p.expected_final_pose.position - p.goal_pose.position).norm() << " m\n";
  return kOk;
}

struct SweepArgs {
  std::string contacts = "2..4";
  std::string out;
  int goals = 50;
  std::uint64_t seed = 0;
};

std::pair<int, int> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    std::size_t used = 0;
    if (dots == std::string::npos) {
      const int n = std::stoi(text, &used);
      if (used == text.size()) return {n, n};
    } else {
      const int lo = std::stoi(text.substr(0, dots), &used);
      if (used == dots) {
        const auto rest = text.substr(dots + 2);
        const int hi = std::stoi(rest, &used);
        if (used == rest.size()) return {lo, hi};
      }
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::ValidationError, "--contacts expects N or LO..HI, got \"" + text + "\"");
}

int sweep(const SweepArgs& a) {
  SweepOptions o;
  std::tie(o.min_contacts, o.max_contacts) = parse_range(a.contacts);
  o.goals = a.goals;
  o.seed = a.seed;
  const auto rows = rollersim::sweep(o, [](const SweepRow& r) {
    if (!r.failure.empty()) {
      spdlog::warn("{} contacts, goal {}: {}", r.contact_count, r.goal_index, r.failure);
    } else {
      spdlog::debug("{} contacts, goal {}: detour {:.4f} in {} segments", r.contact_count, r.goal_index, r.detour_ratio,
                    r.segments);
    }
  });
  emit(a.out, sweep_csv(rows));
  std::ostream& os = a.out.empty() ? std::cerr : std::cout;
  for (int n = o.min_contacts; n <= o.max_contacts; ++n) {
    double coverage = 0.0;
    int failed = 0;
    for (const auto& r : rows) {
      if (r.contact_count != n) continue;
      coverage = r.coverage;
      failed += !r.failure.empty();
    }
    os << n << " contacts: mean detour_ratio " << mean_detour(rows, n) << ", coverage " << coverage << ", failed "
       << failed << "/" << o.goals << "\n";
  }
  return kOk;
}

struct ServeArgs {
  teleop::ServerOptions server;
};

int serve(const ServeArgs& a) {
  teleop::Server server(a.server, [](const std::string& line) { spdlog::info("{}", line); });
  server.stop_on_signals();
  std::cout << "listening on http://" << a.server.address << ":" << server.port() << std::endl;
  server.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Active-surface in-hand manipulation: simulation, planning and teleoperation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rollersim 0.1.0");
  std::function<int()> action;

  SimulateArgs sim;
  auto* sc = app.add_subcommand("simulate", "Run a belt-speed schedule and write the trajectory");
  sc->add_option("-s,--scenario", sim.scenario, "Preset name or scenario JSON file")->required();
  sc->add_option("--schedule", sim.schedule, "Schedule JSON file")->required()->check(CLI::ExistingFile);
  sc->add_option("-o,--out", sim.out, "Trajectory output file (stdout when omitted)");
  sc->add_option("--format", sim.format, "Trajectory format; default from the --out extension")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  sc->add_option("--dt", sim.dt, "Integration step in seconds (overrides the scenario)")->check(CLI::PositiveNumber);
  sc->add_option("--target", sim.target, "Target orientation w x y z; reports success")->expected(4);
  sc->add_flag("--lenient", sim.lenient, "Warn about unknown scenario fields instead of failing");
  sc->callback([&] { action = [&] { return simulate(sim); }; });

  PlanArgs pl;
  auto* pc = app.add_subcommand("plan", "Plan belt commands that reach a goal pose");
  pc->add_option("-s,--scenario", pl.scenario, "Preset name or scenario JSON file")->required();
  pc->add_option("--goal-quat", pl.goal_quat, "Goal orientation w x y z")->expected(4);
  pc->add_option("--translate", pl.translate, "Goal displacement dx dy dz in meters")->expected(3);
  pc->add_option("-o,--out", pl.out, "Plan JSON output file (stdout when omitted)");
  pc->add_option("--seed", pl.seed, "Random seed")->capture_default_str();
  pc->add_option("--max-segments", pl.max_segments, "Segment budget")->capture_default_str()->check(CLI::PositiveNumber);
  pc->add_flag("--lenient", pl.lenient, "Warn about unknown scenario fields instead of failing");
  pc->callback([&] { action = [&] { return plan(pl); }; });

  SweepArgs sw;
  auto* wc = app.add_subcommand("sweep", "Detour ratio and coverage against contact count on ring scenarios");
  wc->add_option("--contacts", sw.contacts, "Contact counts, N or LO..HI within 2..4")->capture_default_str();
  wc->add_option("--goals", sw.goals, "Random goals per contact count")->capture_default_str()->check(CLI::PositiveNumber);
  wc->add_option("--seed", sw.seed, "Random seed")->capture_default_str();
  wc->add_option("-o,--out", sw.out, "CSV output file (stdout when omitted)");
  wc->callback([&] { action = [&] { return sweep(sw); }; });

  ServeArgs sv;
  auto* vc = app.add_subcommand("serve", "Start the teleoperation HTTP and WebSocket service");
  vc->add_option("--address", sv.server.address, "Listen address")->capture_default_str();
  vc->add_option("--port", sv.server.port, "Listen port (0 picks a free port)")->capture_default_str();
  vc->add_option("--tick-rate", sv.server.tick_rate, "Default session tick rate in Hz")
      ->capture_default_str()
      ->check(CLI::Range(teleop::kMinTickRate, teleop::kMaxTickRate));
  vc->add_option("--max-sessions", sv.server.max_sessions, "Maximum concurrent sessions")->capture_default_str();
  vc->add_option("--threads", sv.server.threads, "I/O threads")->capture_default_str()->check(CLI::PositiveNumber);
  vc->callback([&] { action = [&] { return serve(sv); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    return action();
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_status(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  }
}
