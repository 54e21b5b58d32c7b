#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rollersim/io.hpp"
#include "rollersim/scenario.hpp"

namespace fs = std::filesystem;
using namespace rollersim;
using nlohmann::json;

namespace {

struct Outcome {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("rollersim-cli-" + std::to_string(::getpid()) + "-" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  std::string write(const std::string& name, const std::string& text) const {
    io::write_text_file(path(name).string(), text);
    return path(name).string();
  }

  Outcome run(const std::string& args, const std::string& env = {}) const {
    const auto out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = env + (env.empty() ? "" : " ") + ROLLERSIM_CLI + std::string(" ") + args + " >" +
                            out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    Outcome r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  static std::string scenarios(const std::string& file) { return std::string(ROLLERSIM_SCENARIOS) + "/" + file; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpListsEveryFlag) {
  const auto top = run("--help");
  EXPECT_EQ(top.status, 0);
  for (const char* sub : {"simulate", "plan", "sweep", "serve"}) EXPECT_NE(top.out.find(sub), std::string::npos) << sub;

  const std::pair<const char*, std::vector<const char*>> expected[] = {
      {"simulate", {"--scenario", "--schedule", "--out", "--format", "--dt", "--target", "--lenient"}},
      {"plan", {"--scenario", "--goal-quat", "--translate", "--out", "--seed", "--max-segments", "--lenient"}},
      {"sweep", {"--contacts", "--goals", "--seed", "--out"}},
      {"serve", {"--address", "--port", "--tick-rate", "--max-sessions", "--threads"}},
  };
  for (const auto& [sub, flags] : expected) {
    const auto r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.status, 0) << sub;
    for (const char* f : flags) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("simulate --bogus").status, 2);
  EXPECT_EQ(run("plan -s sphere-4rr --goal-quat 1 0 0").status, 2);
  EXPECT_EQ(run("sweep --contacts 1..3").status, 2);
  EXPECT_EQ(run("sweep --goals 0").status, 2);
  EXPECT_EQ(run("serve --tick-rate 500").status, 2);
  const auto none = run("plan -s sphere-4rr");
  EXPECT_EQ(none.status, 2);
  EXPECT_NE(none.err.find("ValidationError"), std::string::npos);
}

TEST_F(CliTest, SimulateLiftHasMonotoneHeight) {
  const auto out = path("lift.csv").string();
  const auto r = run("simulate -s sphere-4rr --schedule " + scenarios("lift.schedule.json") + " -o " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("dissipation"), std::string::npos);
  const auto traj = io::import_trajectory(slurp(out));
  ASSERT_GT(traj.samples.size(), 2u);
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    EXPECT_GT(traj.samples[i].state.position.z(), traj.samples[i - 1].state.position.z());
}

TEST_F(CliTest, SimulateEmptyScheduleGivesOneSample) {
  const auto out = path("empty.jsonl").string();
  const auto r = run("simulate -s sphere-4rr --schedule " + scenarios("empty.schedule.json") + " -o " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto text = slurp(out);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(io::import_trajectory(text, io::TrajectoryFormat::JsonLines).samples.size(), 1u);
}

TEST_F(CliTest, SimulateBadScenarioExitsTwo) {
  const auto bad = write("bad.json", R"({"version": 1, "shape": {"type": "sphere", "radius": 1},
    "contacts": [{"position": [1, 0, 0], "belt_dir": [1, 0, 0]}]})");
  const auto r = run("simulate -s " + bad + " --schedule " + scenarios("empty.schedule.json"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("belt_dir"), std::string::npos);
  EXPECT_EQ(run("simulate -s no-such-preset --schedule " + scenarios("empty.schedule.json")).status, 2);
}

TEST(ExitStatus, Contract) {
  EXPECT_EQ(exit_status(ErrorCode::ValidationError), 2);
  EXPECT_EQ(exit_status(ErrorCode::ParseError), 2);
  EXPECT_EQ(exit_status(ErrorCode::NonTangentVelocity), 2);
  EXPECT_EQ(exit_status(ErrorCode::BadLength), 2);
  EXPECT_EQ(exit_status(ErrorCode::NonConvergence), 3);
  EXPECT_EQ(exit_status(ErrorCode::SolverFailure), 3);
  EXPECT_EQ(exit_status(ErrorCode::RotationNotCancelled), 3);
  EXPECT_EQ(exit_status(ErrorCode::Escaped), 3);
  EXPECT_EQ(exit_status(ErrorCode::PlanInfeasible), 4);
  EXPECT_EQ(exit_status(ErrorCode::Unreachable), 4);
  EXPECT_EQ(exit_status(ErrorCode::BudgetExhausted), 4);
}

TEST_F(CliTest, SimulateWithTargetReportsSuccess) {
  const auto r = run("simulate -s " + scenarios("model-o-3rr.json") + " --schedule " +
                         scenarios("quarter-turn.schedule.json") + " -o " + path("t.csv").string() +
                         " --target 1 0 0 0");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("success"), std::string::npos);
}

TEST_F(CliTest, PlanIdentityGoalIsEmpty) {
  const auto out = path("plan.json").string();
  const auto r = run("plan -s sphere-4rr --goal-quat 1 0 0 0 -o " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = json::parse(slurp(out));
  EXPECT_TRUE(j["segments"].empty());
  EXPECT_EQ(j["detour_ratio"], 1.0);
  EXPECT_NE(r.out.find("detour_ratio: 1"), std::string::npos);
}

TEST_F(CliTest, PlanHalfTurnOnOrthogonalAxes) {
  const auto out = path("plan.json").string();
  const auto r = run("plan -s orthogonal-2rr --goal-quat 0 0 1 0 -o " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto plan = io::parse_plan(slurp(out), 1.0);
  EXPECT_NEAR(plan.detour_ratio, 2.0, 1e-6);
  EXPECT_EQ(plan.segments.size(), 3u);
}

TEST_F(CliTest, PlanSingleContactExitsFour) {
  const auto r = run("plan -s sphere-1rr --goal-quat 0 1 0 0");
  EXPECT_EQ(r.status, 4);
  EXPECT_NE(r.err.find("PlanInfeasible"), std::string::npos);
}

TEST_F(CliTest, PlanToStdoutIsJson) {
  const auto r = run("plan -s sphere-4rr --translate 0 0 0.01");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["status"], "success");
  EXPECT_NE(r.err.find("detour_ratio"), std::string::npos);
}

TEST_F(CliTest, SweepSingleRow) {
  const auto r = run("sweep --contacts 2..2 --goals 1");
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "contact_count,goal_index,detour_ratio,segments,coverage");
  EXPECT_EQ(lines[1].substr(0, 4), "2,0,");
}

TEST_F(CliTest, SameSeedSameFiles) {
  const auto a = path("a.csv").string(), b = path("b.csv").string(), c = path("c.csv").string();
  ASSERT_EQ(run("sweep --contacts 2..3 --goals 4 --seed 7 -o " + a).status, 0);
  ASSERT_EQ(run("sweep --contacts 2..3 --goals 4 --seed 7 -o " + b).status, 0);
  ASSERT_EQ(run("sweep --contacts 2..3 --goals 4 --seed 8 -o " + c).status, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));

  const auto sched = scenarios("lift.schedule.json");
  ASSERT_EQ(run("simulate -s sphere-4rr --schedule " + sched + " -o " + path("a.jsonl").string()).status, 0);
  ASSERT_EQ(run("simulate -s sphere-4rr --schedule " + sched + " -o " + path("b.jsonl").string()).status, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(CliTest, LogLevelFromEnvironment) {
  const auto quiet = run("plan -s sphere-4rr --goal-quat 1 0 0 0 -o " + path("p.json").string());
  EXPECT_EQ(quiet.err.find("info"), std::string::npos);
  const auto loud = run("plan -s sphere-4rr --goal-quat 1 0 0 0 -o " + path("p.json").string(), "ROLLERSIM_LOG=info");
  EXPECT_NE(loud.err.find("rollersim: info:"), std::string::npos);
}

TEST(ScenarioFiles, LoadAndMatchPresets) {
  for (const char* f : {"sphere-4rr.json", "model-o-3rr.json", "cube-2rr.json"}) {
    EXPECT_NO_THROW(io::load_scenario_file(std::string(ROLLERSIM_SCENARIOS) + "/" + f)) << f;
  }
  const auto file = io::load_scenario_file(std::string(ROLLERSIM_SCENARIOS) + "/model-o-3rr.json").scenario;
  const auto preset = presets::model_o_3rr();
  ASSERT_EQ(file.contact_count(), preset.contact_count());
  for (std::size_t i = 0; i < file.contact_count(); ++i) {
    EXPECT_LE((file.contacts[i].position - preset.contacts[i].position).norm(), 1e-12);
    EXPECT_LE((file.contacts[i].belt_dir - preset.contacts[i].belt_dir).norm(), 1e-12);
  }
}
