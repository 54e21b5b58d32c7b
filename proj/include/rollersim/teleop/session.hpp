#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rollersim/io.hpp"
#include "rollersim/simulator.hpp"

namespace rollersim::teleop {

using json = nlohmann::json;

inline constexpr double kMinTickRate = 10.0;   // Hz
inline constexpr double kMaxTickRate = 240.0;  // Hz

struct SessionOptions {
  double tick_rate = 60.0;  // Hz
  std::size_t max_samples = 1'000'000;
};

inline void validate(const SessionOptions& o) {
  if (!(o.tick_rate >= kMinTickRate && o.tick_rate <= kMaxTickRate))
    throw Error(ErrorCode::ValidationError, "tick_rate must lie in [10, 240] Hz");
  if (o.max_samples < 2) throw Error(ErrorCode::ValidationError, "max_samples must be >= 2");
}

inline json error_message(ErrorCode code, const std::string& message) {
  return {{"type", "error"}, {"code", std::string(to_string(code))}, {"message", message}};
}

inline json error_message(const Error& e) { return error_message(e.code(), e.message()); }

/// Client message together with the number of simulation ticks that had run
/// when it was handled.
struct LogEntry {
  std::uint64_t tick = 0;
  json message;
};

/// One live simulation. Not thread-safe: the owner serializes calls, and
/// messages handled between two ticks take effect at the next tick.
class Session {
 public:
  Session(std::string id, Scenario scenario, SessionOptions opts = {})
      : id_(std::move(id)), scenario_(std::move(scenario)), opts_(opts), config_(make_config(scenario_, opts_)),
        stepper_(scenario_, config_) {
    rollersim::validate(scenario_);
    clear();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const Scenario& scenario() const { return scenario_; }
  const SimConfig& config() const { return config_; }
  double tick_rate() const { return opts_.tick_rate; }
  bool paused() const { return paused_; }
  const std::vector<double>& speeds() const { return speeds_; }
  const ObjectState& state() const { return state_; }
  std::uint64_t ticks() const { return ticks_; }
  const Trajectory& trajectory() const { return trajectory_; }
  const std::vector<LogEntry>& log() const { return log_; }

  /// Returns an ack or an error message.
  json handle(const json& msg) {
    log_.push_back({ticks_, msg});
    try {
      if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string())
        throw Error(ErrorCode::ValidationError, "message needs a string \"type\"");
      const auto type = msg.at("type").get<std::string>();
      if (type == "set_speeds") return set_speeds(msg);
      if (type == "set_target") return set_target(msg);
      if (type == "reset") {
        only_type(msg);
        clear();
      } else if (type == "pause") {
        only_type(msg);
        paused_ = true;
      } else if (type == "resume") {
        only_type(msg);
        paused_ = false;
      } else {
        throw Error(ErrorCode::ValidationError, "unknown message type \"" + type + "\"");
      }
      return ack(type);
    } catch (const Error& e) {
      return error_message(e);
    }
  }

  json handle_text(std::string_view text) {
    json msg;
    try {
      msg = io::detail::parse(text);
    } catch (const Error& e) {
      return error_message(e);
    }
    return handle(msg);
  }

  /// Advances one tick unless paused. Emits the new state, followed by an
  /// error when the step failed or left the workspace (the session then
  /// pauses).
  std::vector<json> tick() {
    if (paused_) return {};
    Sample rec;
    try {
      rec = stepper_.advance(state_, speeds_, config_.dt, static_cast<double>(sim_ticks_ + 1) / opts_.tick_rate);
    } catch (const Error& e) {
      paused_ = true;
      return {error_message(e)};
    }
    ++ticks_;
    ++sim_ticks_;
    state_ = rec.state;
    last_ = rec;
    record(std::move(rec));
    update_task();
    std::vector<json> out{state_message()};
    if (stepper_.outside(state_)) {
      paused_ = true;
      out.push_back(error_message(ErrorCode::Escaped, "object left the workspace" + detail::at_time(state_.t)));
    }
    return out;
  }

  json state_message() const {
    json msg = {{"type", "state"},
                {"t", state_.t},
                {"quat", io::detail::to_json(state_.orientation)},
                {"pos", io::detail::to_json(state_.position)},
                {"omega", io::detail::to_json(last_.omega)},
                {"v", io::detail::to_json(last_.v)},
                {"slip", last_.slip},
                {"dissipation", last_.dissipation},
                {"speeds", speeds_},
                {"paused", paused_},
                {"task_done", task_done_}};
    if (target_) {
      msg["target_err_rad"] = geodesic_distance(state_.orientation, *target_);
      msg["task_elapsed_s"] = *task_elapsed();
    } else {
      msg["target_err_rad"] = nullptr;
      msg["task_elapsed_s"] = nullptr;
    }
    return msg;
  }

  std::optional<double> task_elapsed() const {
    if (!target_) return std::nullopt;
    return task_done_ ? *completed_after_ : state_.t - task_start_;
  }

  bool task_done() const { return task_done_; }

 private:
  static SimConfig make_config(const Scenario& s, const SessionOptions& o) {
    validate(o);
    SimConfig c = s.sim;
    c.dt = 1.0 / o.tick_rate;
    return c;
  }

  static void only_type(const json& msg) {
    for (const auto& [key, _] : msg.items()) {
      if (key != "type") throw Error(ErrorCode::ValidationError, "unexpected field \"" + key + "\"");
    }
  }

  static json ack(const std::string& of) { return {{"type", "ack"}, {"of", of}}; }

  json set_speeds(const json& msg) {
    for (const auto& [key, _] : msg.items()) {
      if (key != "type" && key != "speeds") throw Error(ErrorCode::ValidationError, "unexpected field \"" + key + "\"");
    }
    io::detail::Reader r(io::LoadOptions{});
    if (!msg.contains("speeds")) throw Error(ErrorCode::ValidationError, "set_speeds needs \"speeds\"");
    BeltCommand cmd(r.numbers(msg.at("speeds"), "/speeds"), scenario_.speed_limit);
    if (cmd.size() != scenario_.contact_count()) {
      throw Error(ErrorCode::BadLength, "got " + std::to_string(cmd.size()) + " speeds, scenario has " +
                                            std::to_string(scenario_.contact_count()) + " contacts");
    }
    const bool clamped = cmd.clamp();
    speeds_ = cmd.speeds;
    json out = ack("set_speeds");
    out["speeds"] = speeds_;
    out["clamped"] = clamped;
    return out;
  }

  json set_target(const json& msg) {
    for (const auto& [key, _] : msg.items()) {
      if (key != "type" && key != "quat") throw Error(ErrorCode::ValidationError, "unexpected field \"" + key + "\"");
    }
    if (!msg.contains("quat")) throw Error(ErrorCode::ValidationError, "set_target needs \"quat\"");
    io::detail::Reader r(io::LoadOptions{});
    const auto q = r.numbers(msg.at("quat"), "/quat");
    if (q.size() != 4) throw Error(ErrorCode::ValidationError, "quat must be [w, x, y, z]");
    target_ = Orientation(q[0], q[1], q[2], q[3]);
    task_start_ = state_.t;
    task_done_ = false;
    completed_after_.reset();
    window_start_.reset();
    update_task();
    json out = ack("set_target");
    out["quat"] = io::detail::to_json(*target_);
    return out;
  }

  void clear() {
    state_ = ObjectState{};
    speeds_.assign(scenario_.contact_count(), 0.0);
    last_ = initial_sample(state_, scenario_.contact_count());
    trajectory_ = Trajectory{};
    trajectory_.samples.push_back(last_);
    sim_ticks_ = 0;
    target_.reset();
    task_done_ = false;
    completed_after_.reset();
    window_start_.reset();
  }

  void record(Sample s) {
    if (trajectory_.samples.size() >= opts_.max_samples) {
      trajectory_.samples.erase(trajectory_.samples.begin(),
                                trajectory_.samples.begin() + static_cast<std::ptrdiff_t>(opts_.max_samples / 2));
    }
    trajectory_.samples.push_back(std::move(s));
  }

  void update_task() {
    if (!target_ || task_done_) return;
    if (geodesic_distance(state_.orientation, *target_) <= config_.success_tol) {
      if (!window_start_) window_start_ = state_.t;
      if (state_.t - *window_start_ >= config_.success_hold - 1e-12) {
        task_done_ = true;
        completed_after_ = state_.t - task_start_;
      }
    } else {
      window_start_.reset();
    }
  }

  std::string id_;
  Scenario scenario_;
  SessionOptions opts_;
  SimConfig config_;
  Stepper stepper_;

  ObjectState state_;
  Sample last_;
  std::vector<double> speeds_;
  bool paused_ = true;
  std::uint64_t ticks_ = 0;      // advancing ticks since creation
  std::uint64_t sim_ticks_ = 0;  // since the last reset
  Trajectory trajectory_;
  std::vector<LogEntry> log_;

  std::optional<Orientation> target_;
  double task_start_ = 0.0;
  bool task_done_ = false;
  std::optional<double> completed_after_;
  std::optional<double> window_start_;
};

/// Replays a message log against a fresh session and returns every message
/// the session emits (acks, errors and states), ticking `total_ticks` times
/// in all.
inline std::vector<json> replay(const Scenario& scenario, const SessionOptions& opts, const std::vector<LogEntry>& log,
                                std::uint64_t total_ticks) {
  Session s("replay", scenario, opts);
  std::vector<json> out;
  auto run_until = [&](std::uint64_t n) {
    while (s.ticks() < n) {
      auto msgs = s.tick();
      if (msgs.empty()) throw Error(ErrorCode::ValidationError, "log does not replay: session paused early");
      for (auto& m : msgs) out.push_back(std::move(m));
    }
  };
  for (const auto& e : log) {
    run_until(e.tick);
    out.push_back(s.handle(e.message));
  }
  run_until(total_ticks);
  return out;
}

}  // namespace rollersim::teleop
