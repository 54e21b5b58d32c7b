#pragma once

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rollersim/plan.hpp"
#include "rollersim/scenario.hpp"
#include "rollersim/simulator.hpp"

namespace rollersim::io {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct LoadOptions {
  bool strict = true;  // unknown fields are errors; otherwise warnings
};

struct LoadedScenario {
  Scenario scenario;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
  return path + "/" + std::string(key);
}

inline std::string join(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

inline std::string shown(const std::string& path) { return path.empty() ? "/" : path; }

[[noreturn]] inline void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ValidationError, shown(path) + ": " + what);
}

/// Walks a document, tracking the JSON pointer of every value read.
class Reader {
 public:
  explicit Reader(LoadOptions opts) : opts_(opts) {}

  void expect_object(const json& j, const std::string& path) const {
    if (!j.is_object()) invalid(path, "expected an object");
  }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
      if (opts_.strict) invalid(join(path, key), "unknown field");
      warnings_.push_back(join(path, key) + ": unknown field ignored");
    }
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) invalid(path, "expected a number");
    return j.get<double>();
  }

  double number(const json& obj, std::string_view key, const std::string& path) const {
    if (!obj.contains(key)) invalid(join(path, key), "missing required field");
    return number(obj.at(std::string(key)), join(path, key));
  }

  std::optional<double> optional_number(const json& obj, std::string_view key, const std::string& path) const {
    if (!obj.contains(key)) return std::nullopt;
    return number(obj.at(std::string(key)), join(path, key));
  }

  /// Angle stored in radians under `key` or in degrees under `key_deg`.
  std::optional<double> optional_angle(const json& obj, std::string_view key, const std::string& path) const {
    const std::string deg = std::string(key) + "_deg";
    const auto rad = optional_number(obj, key, path);
    const auto d = optional_number(obj, deg, path);
    if (rad && d) invalid(join(path, deg), "give either " + std::string(key) + " or " + deg + ", not both");
    if (d) return *d * std::numbers::pi / 180.0;
    return rad;
  }

  std::vector<double> numbers(const json& j, const std::string& path) const {
    if (!j.is_array()) invalid(path, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], join(path, i)));
    return out;
  }

  Vec3 vec3(const json& j, const std::string& path) const {
    const auto v = numbers(j, path);
    if (v.size() != 3) invalid(path, "expected 3 numbers, got " + std::to_string(v.size()));
    return {v[0], v[1], v[2]};
  }

  Vec3 vec3(const json& obj, std::string_view key, const std::string& path) const {
    if (!obj.contains(key)) invalid(join(path, key), "missing required field");
    return vec3(obj.at(std::string(key)), join(path, key));
  }

  std::string string(const json& obj, std::string_view key, const std::string& path) const {
    if (!obj.contains(key)) invalid(join(path, key), "missing required field");
    const auto& j = obj.at(std::string(key));
    if (!j.is_string()) invalid(join(path, key), "expected a string");
    return j.get<std::string>();
  }

  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) invalid(path, "expected true or false");
    return j.get<bool>();
  }

  int integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) invalid(path, "expected an integer");
    return j.get<int>();
  }

  std::vector<std::string> take_warnings() { return std::move(warnings_); }

 private:
  LoadOptions opts_;
  std::vector<std::string> warnings_;
};

inline json parse(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError, "invalid JSON at byte " + std::to_string(e.byte) + " (line " +
                                           std::to_string(line) + ", column " + std::to_string(col) + "): " +
                                           e.what());
  }
}

inline void check_version(Reader& r, const json& doc) {
  if (!doc.contains("version")) invalid("/version", "missing required field");
  const int v = r.integer(doc.at("version"), "/version");
  if (v != kFormatVersion) invalid("/version", "unsupported version " + std::to_string(v));
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const Orientation& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

inline Orientation orientation(const Reader& r, const json& j, const std::string& path) {
  const auto v = r.numbers(j, path);
  if (v.size() != 4) invalid(path, "expected a quaternion [w, x, y, z]");
  try {
    return Orientation::from_unit(v[0], v[1], v[2], v[3]);
  } catch (const Error& e) {
    invalid(path, e.message());
  }
}

inline ObjectShape read_shape(Reader& r, const json& j, const std::string& path) {
  r.expect_object(j, path);
  ObjectShape shape;
  const std::string type = r.string(j, "type", path);
  if (type == "sphere") {
    r.check_keys(j, path, {"type", "radius", "center_offset"});
    shape.kind = Sphere{r.number(j, "radius", path)};
  } else if (type == "box") {
    r.check_keys(j, path, {"type", "half_extents", "center_offset"});
    shape.kind = Box{r.vec3(j, "half_extents", path)};
  } else if (type == "cylinder") {
    r.check_keys(j, path, {"type", "radius", "half_height", "center_offset"});
    shape.kind = Cylinder{r.number(j, "radius", path), r.number(j, "half_height", path)};
  } else {
    invalid(join(path, "type"), "unknown shape type \"" + type + "\" (sphere, box, cylinder)");
  }
  if (j.contains("center_offset")) shape.center_offset = r.vec3(j, "center_offset", path);
  try {
    validate(shape);
  } catch (const Error& e) {
    invalid(path, e.message());
  }
  return shape;
}

inline RollerContact read_contact(Reader& r, const json& j, const std::string& path, const ObjectShape& shape) {
  r.expect_object(j, path);
  r.check_keys(j, path, {"position", "belt_dir", "mount", "normal_force", "friction"});
  const double nf = r.optional_number(j, "normal_force", path).value_or(1.0);
  const double mu = r.optional_number(j, "friction", path).value_or(1.0);
  if (j.contains("mount")) {
    if (j.contains("position") || j.contains("belt_dir"))
      invalid(path, "give either mount or position/belt_dir, not both");
    const std::string mp = join(path, "mount");
    const json& m = j.at("mount");
    r.expect_object(m, mp);
    r.check_keys(m, mp, {"finger_axis", "contact_point", "surface_angle", "surface_angle_deg"});
    MountSpec spec;
    spec.finger_axis = r.vec3(m, "finger_axis", mp);
    spec.contact_point = r.vec3(m, "contact_point", mp);
    if (auto a = r.optional_angle(m, "surface_angle", mp)) spec.surface_angle = *a;
    try {
      return rr_contact_from_mount(spec, shape, nf, mu);
    } catch (const Error& e) {
      throw Error(e.code(), mp + ": " + e.message());
    }
  }
  RollerContact c;
  c.position = r.vec3(j, "position", path);
  c.belt_dir = r.vec3(j, "belt_dir", path);
  c.normal_force = nf;
  c.friction = mu;
  return c;
}

inline void read_solver(Reader& r, const json& j, const std::string& path, SolverOptions& o) {
  r.expect_object(j, path);
  r.check_keys(j, path, {"tol_torque", "tol_step", "max_iters", "damping", "eps_reg", "eps_slip", "tol_omega", "mode"});
  if (auto v = r.optional_number(j, "tol_torque", path)) o.tol_torque = *v;
  if (auto v = r.optional_number(j, "tol_step", path)) o.tol_step = *v;
  if (j.contains("max_iters")) o.max_iters = r.integer(j.at("max_iters"), join(path, "max_iters"));
  if (auto v = r.optional_number(j, "damping", path)) o.damping = *v;
  if (auto v = r.optional_number(j, "eps_reg", path)) o.eps_reg = *v;
  if (auto v = r.optional_number(j, "eps_slip", path)) o.eps_slip = *v;
  if (auto v = r.optional_number(j, "tol_omega", path)) o.tol_omega = *v;
  if (j.contains("mode")) {
    const auto m = r.string(j, "mode", path);
    if (m == "pinned_center") o.mode = SolveMode::PinnedCenter;
    else if (m == "free_translation") o.mode = SolveMode::FreeTranslation;
    else invalid(join(path, "mode"), "expected pinned_center or free_translation");
  }
}

inline void read_sim(Reader& r, const json& j, const std::string& path, SimConfig& c) {
  r.expect_object(j, path);
  r.check_keys(j, path,
               {"dt", "workspace_radius", "allow_translation", "success_tol", "success_tol_deg", "success_hold"});
  if (auto v = r.optional_number(j, "dt", path)) c.dt = *v;
  if (auto v = r.optional_number(j, "workspace_radius", path)) c.workspace_radius = *v;
  if (j.contains("allow_translation"))
    c.allow_translation = r.boolean(j.at("allow_translation"), join(path, "allow_translation"));
  if (auto v = r.optional_angle(j, "success_tol", path)) c.success_tol = *v;
  if (auto v = r.optional_number(j, "success_hold", path)) c.success_hold = *v;
}

inline std::string to_string(RadiusMode m) { return m == RadiusMode::AxisDistance ? "axis_distance" : "contact_norm"; }

inline std::string to_string(SolveMode m) { return m == SolveMode::PinnedCenter ? "pinned_center" : "free_translation"; }

/// Same checks as rollersim::validate(Scenario), with the offending field in
/// the message.
inline void validate_with_paths(const Scenario& s) {
  if (s.contacts.empty()) invalid("/contacts", "scenario needs at least one contact");
  for (std::size_t i = 0; i < s.contacts.size(); ++i) {
    const auto& c = s.contacts[i];
    try {
      if (!(c.position.norm() > 0.0)) throw Error(ErrorCode::ValidationError, "contact position norm must be positive");
      validate(c, outward_normal(s.shape, c.position));
    } catch (const Error& e) {
      invalid(join("/contacts", i), e.message());
    }
  }
  auto wrap = [](const char* path, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      invalid(path, e.message());
    }
  };
  wrap("/speed_limit", [&] {
    if (!(s.speed_limit >= 0.0) || !std::isfinite(s.speed_limit))
      throw Error(ErrorCode::ValidationError, "speed_limit must be finite and >= 0");
  });
  wrap("/solver", [&] { validate(s.solver); });
  wrap("/sim", [&] { validate(s.sim); });
}

}  // namespace detail

/// Parses and validates a scenario document. A "preset" field names a
/// built-in scenario that the remaining fields override.
inline LoadedScenario parse_scenario(std::string_view text, LoadOptions opts = {}) {
  using namespace detail;
  const json doc = parse(text);
  Reader r(opts);
  r.expect_object(doc, "");
  r.check_keys(doc, "", {"version", "preset", "name", "shape", "contacts", "speed_limit", "radius_mode", "solver", "sim"});
  check_version(r, doc);

  Scenario s;
  const bool has_preset = doc.contains("preset");
  if (has_preset) {
    const auto name = r.string(doc, "preset", "");
    if (!presets::registry().contains(name)) invalid("/preset", "unknown preset \"" + name + "\"");
    s = presets::by_name(name);
  } else {
    s.name = "custom";
    if (!doc.contains("shape")) invalid("/shape", "missing required field");
    if (!doc.contains("contacts")) invalid("/contacts", "missing required field");
  }
  if (doc.contains("name")) s.name = r.string(doc, "name", "");
  if (doc.contains("shape")) s.shape = read_shape(r, doc.at("shape"), "/shape");
  if (doc.contains("contacts")) {
    const json& cs = doc.at("contacts");
    if (!cs.is_array()) invalid("/contacts", "expected an array");
    s.contacts.clear();
    for (std::size_t i = 0; i < cs.size(); ++i) s.contacts.push_back(read_contact(r, cs[i], join("/contacts", i), s.shape));
  }
  if (auto v = r.optional_number(doc, "speed_limit", "")) s.speed_limit = *v;
  if (doc.contains("radius_mode")) {
    const auto m = r.string(doc, "radius_mode", "");
    if (m == "axis_distance") s.radius_mode = RadiusMode::AxisDistance;
    else if (m == "contact_norm") s.radius_mode = RadiusMode::ContactNorm;
    else invalid("/radius_mode", "expected axis_distance or contact_norm");
  }
  if (doc.contains("solver")) read_solver(r, doc.at("solver"), "/solver", s.solver);
  if (doc.contains("sim")) read_sim(r, doc.at("sim"), "/sim", s.sim);

  validate_with_paths(s);
  validate(s);
  return {std::move(s), r.take_warnings()};
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ValidationError, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ValidationError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::ValidationError, "write failed for " + path.string());
}

inline LoadedScenario load_scenario_file(const std::filesystem::path& path, LoadOptions opts = {}) {
  try {
    return parse_scenario(read_text_file(path), opts);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

/// Accepts a preset name or a path to a scenario file.
inline LoadedScenario load_scenario(const std::string& preset_or_path, LoadOptions opts = {}) {
  if (presets::registry().contains(preset_or_path)) return {presets::by_name(preset_or_path), {}};
  return load_scenario_file(preset_or_path, opts);
}

inline json scenario_to_json(const Scenario& s) {
  using detail::to_json;
  json shape = std::visit(
      [](const auto& k) -> json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sphere>) return {{"type", "sphere"}, {"radius", k.radius}};
        else if constexpr (std::is_same_v<K, Box>) return {{"type", "box"}, {"half_extents", to_json(k.half_extents)}};
        else return {{"type", "cylinder"}, {"radius", k.radius}, {"half_height", k.half_height}};
      },
      s.shape.kind);
  shape["center_offset"] = to_json(s.shape.center_offset);
  json contacts = json::array();
  for (const auto& c : s.contacts) {
    contacts.push_back({{"position", to_json(c.position)},
                        {"belt_dir", to_json(c.belt_dir)},
                        {"normal_force", c.normal_force},
                        {"friction", c.friction}});
  }
  const auto& o = s.solver;
  return {{"version", kFormatVersion},
          {"name", s.name},
          {"shape", shape},
          {"contacts", contacts},
          {"speed_limit", s.speed_limit},
          {"radius_mode", detail::to_string(s.radius_mode)},
          {"solver",
           {{"tol_torque", o.tol_torque},
            {"tol_step", o.tol_step},
            {"max_iters", o.max_iters},
            {"damping", o.damping},
            {"eps_reg", o.eps_reg},
            {"eps_slip", o.eps_slip},
            {"tol_omega", o.tol_omega},
            {"mode", detail::to_string(o.mode)}}},
          {"sim",
           {{"dt", s.sim.dt},
            {"workspace_radius", s.sim.workspace_radius},
            {"allow_translation", s.sim.allow_translation},
            {"success_tol", s.sim.success_tol},
            {"success_hold", s.sim.success_hold}}}};
}

inline std::string save_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

// Schedules

inline json schedule_to_json(const Schedule& schedule) {
  json entries = json::array();
  for (const auto& e : schedule) entries.push_back({{"speeds", e.speeds}, {"duration", e.duration}});
  return {{"version", kFormatVersion}, {"entries", entries}};
}

inline std::string save_schedule(const Schedule& schedule) { return schedule_to_json(schedule).dump(2) + "\n"; }

inline Schedule parse_schedule(std::string_view text, LoadOptions opts = {}) {
  using namespace detail;
  const json doc = parse(text);
  Reader r(opts);
  r.expect_object(doc, "");
  r.check_keys(doc, "", {"version", "entries"});
  check_version(r, doc);
  if (!doc.contains("entries")) invalid("/entries", "missing required field");
  const json& es = doc.at("entries");
  if (!es.is_array()) invalid("/entries", "expected an array");
  Schedule out;
  for (std::size_t i = 0; i < es.size(); ++i) {
    const auto path = join("/entries", i);
    r.expect_object(es[i], path);
    r.check_keys(es[i], path, {"speeds", "duration"});
    if (!es[i].contains("speeds")) invalid(join(path, "speeds"), "missing required field");
    ScheduleEntry e{r.numbers(es[i].at("speeds"), join(path, "speeds")), r.number(es[i], "duration", path)};
    if (!(e.duration > 0.0) || !std::isfinite(e.duration)) invalid(join(path, "duration"), "must be positive");
    out.push_back(std::move(e));
  }
  return out;
}

inline Schedule load_schedule_file(const std::filesystem::path& path, LoadOptions opts = {}) {
  try {
    return parse_schedule(read_text_file(path), opts);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

// Plans

inline json pose_to_json(const Pose& p) {
  return {{"orientation", detail::to_json(p.orientation)}, {"position", detail::to_json(p.position)}};
}

inline json plan_to_json(const Plan& plan) {
  json segments = json::array();
  for (const auto& s : plan.segments) {
    segments.push_back({{"speeds", s.command.speeds},
                        {"duration", s.duration},
                        {"expected_omega", detail::to_json(s.expected_omega)},
                        {"expected_v", detail::to_json(s.expected_v)}});
  }
  return {{"version", kFormatVersion},
          {"status", to_string(plan.status)},
          {"detour_ratio", plan.detour_ratio},
          {"total_duration", plan.total_duration()},
          {"start_pose", pose_to_json(plan.start_pose)},
          {"goal_pose", pose_to_json(plan.goal_pose)},
          {"expected_final_pose", pose_to_json(plan.expected_final_pose)},
          {"segments", segments}};
}

inline std::string save_plan(const Plan& plan) { return plan_to_json(plan).dump(2) + "\n"; }

/// `speed_limit` is attached to every segment command.
inline Plan parse_plan(std::string_view text, double speed_limit, LoadOptions opts = {}) {
  using namespace detail;
  const json doc = parse(text);
  Reader r(opts);
  r.expect_object(doc, "");
  r.check_keys(doc, "", {"version", "status", "detour_ratio", "total_duration", "start_pose", "goal_pose",
                         "expected_final_pose", "segments"});
  check_version(r, doc);
  Plan plan;
  const auto status = r.string(doc, "status", "");
  if (status == "success") plan.status = PlanStatus::Success;
  else if (status == "partial") plan.status = PlanStatus::Partial;
  else invalid("/status", "expected success or partial");
  plan.detour_ratio = r.number(doc, "detour_ratio", "");
  auto pose = [&](std::string_view key) {
    const auto path = join("", key);
    if (!doc.contains(key)) invalid(path, "missing required field");
    const json& j = doc.at(std::string(key));
    r.expect_object(j, path);
    r.check_keys(j, path, {"orientation", "position"});
    if (!j.contains("orientation")) invalid(join(path, "orientation"), "missing required field");
    return Pose{orientation(r, j.at("orientation"), join(path, "orientation")), r.vec3(j, "position", path)};
  };
  plan.start_pose = pose("start_pose");
  plan.goal_pose = pose("goal_pose");
  plan.expected_final_pose = pose("expected_final_pose");
  if (!doc.contains("segments") || !doc.at("segments").is_array()) invalid("/segments", "expected an array");
  const json& ss = doc.at("segments");
  for (std::size_t i = 0; i < ss.size(); ++i) {
    const auto path = join("/segments", i);
    r.expect_object(ss[i], path);
    r.check_keys(ss[i], path, {"speeds", "duration", "expected_omega", "expected_v"});
    if (!ss[i].contains("speeds")) invalid(join(path, "speeds"), "missing required field");
    PlanSegment seg;
    seg.command = BeltCommand(r.numbers(ss[i].at("speeds"), join(path, "speeds")), speed_limit);
    seg.duration = r.number(ss[i], "duration", path);
    seg.expected_omega = r.vec3(ss[i], "expected_omega", path);
    seg.expected_v = r.vec3(ss[i], "expected_v", path);
    plan.segments.push_back(std::move(seg));
  }
  return plan;
}

// Trajectories

enum class TrajectoryFormat { Csv, JsonLines };

namespace detail {

inline void append_real(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

inline double parse_real(std::string_view field, std::size_t line, std::size_t column) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                           ": not a number: \"" + std::string(field) + "\"");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline std::vector<std::string_view> lines(std::string_view text) {
  auto out = split(text, '\n');
  if (!out.empty() && out.back().empty()) out.pop_back();
  for (auto& l : out) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  return out;
}

}  // namespace detail

inline std::string csv_header(std::size_t contacts) {
  std::string h = "t,qw,qx,qy,qz,px,py,pz,wx,wy,wz,vx,vy,vz";
  for (std::size_t i = 0; i < contacts; ++i) h += ",slip_" + std::to_string(i);
  h += ",dissipation";
  return h;
}

inline void check_exportable(const Trajectory& traj) {
  if (traj.samples.empty()) throw Error(ErrorCode::ValidationError, "trajectory is empty");
  const auto n = traj.contact_count();
  for (const auto& s : traj.samples) {
    if (s.slip.size() != n) throw Error(ErrorCode::ValidationError, "samples disagree on the contact count");
  }
}

inline std::string trajectory_to_csv(const Trajectory& traj) {
  check_exportable(traj);
  std::string out = csv_header(traj.contact_count()) + "\n";
  for (const auto& s : traj.samples) {
    const auto& q = s.state.orientation;
    const double row[] = {s.state.t,          q.w(),         q.x(),         q.y(),         q.z(),
                          s.state.position.x(), s.state.position.y(), s.state.position.z(), s.omega.x(),
                          s.omega.y(),        s.omega.z(),   s.v.x(),       s.v.y(),       s.v.z()};
    bool first = true;
    auto put = [&](double v) {
      if (!first) out += ',';
      first = false;
      detail::append_real(out, v);
    };
    for (double v : row) put(v);
    for (double v : s.slip) put(v);
    put(s.dissipation);
    out += '\n';
  }
  return out;
}

inline json sample_to_json(const Sample& s) {
  using detail::to_json;
  return {{"t", s.state.t},
          {"quat", to_json(s.state.orientation)},
          {"pos", to_json(s.state.position)},
          {"omega", to_json(s.omega)},
          {"v", to_json(s.v)},
          {"slip", s.slip},
          {"dissipation", s.dissipation}};
}

inline std::string trajectory_to_jsonl(const Trajectory& traj) {
  check_exportable(traj);
  std::string out;
  for (const auto& s : traj.samples) out += sample_to_json(s).dump() + "\n";
  return out;
}

inline std::string export_trajectory(const Trajectory& traj, TrajectoryFormat format = TrajectoryFormat::Csv) {
  return format == TrajectoryFormat::Csv ? trajectory_to_csv(traj) : trajectory_to_jsonl(traj);
}

/// The escaped flag is not part of either format and comes back false.
inline Trajectory trajectory_from_csv(std::string_view text) {
  const auto rows = detail::lines(text);
  if (rows.empty()) throw Error(ErrorCode::ParseError, "line 1: missing header");
  const auto head = detail::split(rows[0], ',');
  if (head.size() < 15) throw Error(ErrorCode::ParseError, "line 1: header has too few columns");
  const std::size_t contacts = head.size() - 15;
  if (rows[0] != csv_header(contacts)) throw Error(ErrorCode::ParseError, "line 1: unexpected header");
  Trajectory traj;
  for (std::size_t li = 1; li < rows.size(); ++li) {
    const auto fields = detail::split(rows[li], ',');
    if (fields.size() != head.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(li + 1) + ": expected " +
                                             std::to_string(head.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    std::vector<double> v(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) v[k] = detail::parse_real(fields[k], li + 1, k + 1);
    Sample s;
    s.state.t = v[0];
    try {
      s.state.orientation = Orientation::from_unit(v[1], v[2], v[3], v[4]);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(li + 1) + ": " + e.message());
    }
    s.state.position = Vec3(v[5], v[6], v[7]);
    s.omega = Vec3(v[8], v[9], v[10]);
    s.v = Vec3(v[11], v[12], v[13]);
    s.slip.assign(v.begin() + 14, v.begin() + 14 + static_cast<std::ptrdiff_t>(contacts));
    s.dissipation = v.back();
    traj.samples.push_back(std::move(s));
  }
  return traj;
}

inline Trajectory trajectory_from_jsonl(std::string_view text) {
  const auto rows = detail::lines(text);
  Trajectory traj;
  detail::Reader r(LoadOptions{});
  for (std::size_t li = 0; li < rows.size(); ++li) {
    const std::string path = "line " + std::to_string(li + 1);
    json j;
    try {
      j = detail::parse(rows[li]);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.message());
    }
    try {
      r.expect_object(j, "");
      r.check_keys(j, "", {"t", "quat", "pos", "omega", "v", "slip", "dissipation"});
      Sample s;
      s.state.t = r.number(j, "t", "");
      if (!j.contains("quat")) detail::invalid("/quat", "missing required field");
      s.state.orientation = detail::orientation(r, j.at("quat"), "/quat");
      s.state.position = r.vec3(j, "pos", "");
      s.omega = r.vec3(j, "omega", "");
      s.v = r.vec3(j, "v", "");
      if (!j.contains("slip")) detail::invalid("/slip", "missing required field");
      s.slip = r.numbers(j.at("slip"), "/slip");
      s.dissipation = r.number(j, "dissipation", "");
      if (!traj.samples.empty() && s.slip.size() != traj.samples.front().slip.size())
        detail::invalid("/slip", "contact count changed between samples");
      traj.samples.push_back(std::move(s));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.message());
    }
  }
  return traj;
}

inline Trajectory import_trajectory(std::string_view text, TrajectoryFormat format = TrajectoryFormat::Csv) {
  return format == TrajectoryFormat::Csv ? trajectory_from_csv(text) : trajectory_from_jsonl(text);
}

/// Csv unless the path ends in .jsonl or .ndjson.
inline TrajectoryFormat format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".ndjson" ? TrajectoryFormat::JsonLines : TrajectoryFormat::Csv;
}

}  // namespace rollersim::io
