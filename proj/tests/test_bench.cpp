#include "xview/bench/matrix.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace xview;

namespace {

bench::EpisodeResult judged(const bench::BenchTask& t, bench::Agent& a, std::uint64_t seed) {
  return bench::run_episode(t, a, seed);
}

const bench::BenchTask& task(const std::vector<bench::BenchTask>& s, const std::string& id) {
  return *std::find_if(s.begin(), s.end(), [&](const auto& t) { return t.task_id == id; });
}

}  // namespace

TEST(Suite, EightTasks) {
  const auto suite = bench::build_task_suite();
  ASSERT_EQ(suite.size(), 8u);
  std::set<std::string> ids;
  std::set<std::string> categories;
  for (const auto& t : suite) {
    ids.insert(t.task_id);
    categories.insert(t.category);
    EXPECT_EQ(t.max_steps, 256);
    EXPECT_EQ(t.judge == bench::Judge::proximity, t.event == world::EventKind::approach);
  }
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_TRUE(ids.count("attack_creature_left"));
  EXPECT_TRUE(ids.count("approach_marker_right"));
  EXPECT_EQ(categories, (std::set<std::string>{"hunt", "mine", "interact", "navigate"}));
}

TEST(Suite, ConfigRoundTrip) {
  bench::SuiteConfig c;
  c.seed = 9;
  c.kinds = {world::ObjectKind::chest};
  c.approach_radius = 2.0;
  const auto back = bench::suite_config_from_json(bench::to_json(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.kinds.size(), 1u);
  EXPECT_EQ(bench::build_task_suite(back).size(), 2u);
  EXPECT_THROW(bench::suite_config_from_json({{"kinds", {"dragon"}}}), ConfigError);
  c.kinds.clear();
  EXPECT_THROW(bench::build_task_suite(c), ConfigError);
}

TEST(Suite, SidesShareTheWorld) {
  const auto suite = bench::build_task_suite();
  for (std::size_t i = 0; i < suite.size(); i += 2) {
    for (std::uint64_t seed : {1ull, 17ull}) {
      const auto l = bench::instantiate(suite[i], seed);
      const auto r = bench::instantiate(suite[i + 1], seed);
      EXPECT_EQ(l.world.map.cells, r.world.map.cells);
      EXPECT_EQ(l.world.objects, r.world.objects);
      EXPECT_EQ(l.spawn, r.spawn);
      EXPECT_EQ(l.target_id, r.twin_id);
      EXPECT_EQ(l.twin_id, r.target_id);
    }
  }
}

TEST(Suite, TwinIsAnIdenticalDistractor) {
  for (const auto& t : bench::build_task_suite()) {
    const auto inst = bench::instantiate(t, 3);
    const auto* target = &*std::find_if(inst.world.objects.begin(), inst.world.objects.end(),
                                        [&](const auto& o) { return o.instance_id == inst.target_id; });
    const auto* twin = &*std::find_if(inst.world.objects.begin(), inst.world.objects.end(),
                                      [&](const auto& o) { return o.instance_id == inst.twin_id; });
    EXPECT_EQ(target->kind, twin->kind);
    EXPECT_EQ(target->color, twin->color);
    EXPECT_EQ(t.kind, target->kind);
    const auto same = std::count_if(inst.distractors.begin(), inst.distractors.end(),
                                    [](const auto& d) { return d.same_appearance; });
    EXPECT_EQ(same, 1);
    // left means smaller x in the mirrored layout
    EXPECT_EQ(t.side == bench::Side::left, target->x < twin->x) << t.task_id;
  }
}

TEST(Suite, GoalCameraIsCrossViewAndSeesTarget) {
  for (const auto& t : bench::build_task_suite()) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const auto inst = bench::instantiate(t, seed);
      EXPECT_TRUE(bench::is_cross_view(inst.goal_camera, inst.spawn)) << t.task_id << " " << seed;
      const auto goal = bench::goal_for(t, inst);
      EXPECT_FALSE(goal.goal_mask.empty());
      EXPECT_EQ(goal.event, t.event);
    }
  }
}

TEST(Suite, CrossViewRule) {
  const world::Pose spawn{5.5, 5.5, 0.0};
  EXPECT_FALSE(bench::is_cross_view({6.5, 5.5, 0.3}, spawn));
  EXPECT_TRUE(bench::is_cross_view({6.5, 5.5, std::numbers::pi / 2}, spawn));
  EXPECT_TRUE(bench::is_cross_view({9.5, 5.5, 0.0}, spawn));
}

TEST(Suite, SpawnKeepsDistanceFromTwins) {
  for (const auto& t : bench::build_task_suite()) {
    const auto inst = bench::instantiate(t, 5);
    for (const auto& o : inst.world.objects) {
      if (o.instance_id == inst.target_id || o.instance_id == inst.twin_id) {
        EXPECT_GE(std::hypot(o.x - inst.spawn.x, o.y - inst.spawn.y), 4.0);
      }
    }
  }
}

TEST(Judge, OracleSucceedsInvertedPicksTwin) {
  const auto suite = bench::build_task_suite();
  for (const auto& t : suite) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      bench::ExpertAgent oracle;
      bench::ExpertAgent inverted(true);
      const auto a = judged(t, oracle, seed);
      const auto b = judged(t, inverted, seed);
      EXPECT_TRUE(a.success) << t.task_id << " " << seed;
      EXPECT_FALSE(a.wrong_instance);
      EXPECT_FALSE(b.success) << t.task_id << " " << seed;
      EXPECT_TRUE(b.wrong_instance) << t.task_id << " " << seed;
    }
  }
}

TEST(Judge, IdleNeverSucceeds) {
  const auto suite = bench::build_task_suite();
  bench::IdleAgent idle;
  bench::EpisodeOptions o;
  o.max_steps = 20;
  for (const auto& t : suite) {
    const auto r = bench::run_episode(t, idle, 2, o);
    EXPECT_FALSE(r.success);
    EXPECT_FALSE(r.wrong_instance);
    EXPECT_EQ(r.steps_used, 20);
  }
}

TEST(Judge, ApproachNeedsToFaceTheTwin) {
  // Standing next to the twin while looking away is not a wrong choice.
  const auto t = task(bench::build_task_suite(), "approach_marker_left");
  const auto inst = bench::instantiate(t, 1);
  const auto& twin = *std::find_if(inst.world.objects.begin(), inst.world.objects.end(),
                                   [&](const auto& o) { return o.instance_id == inst.twin_id; });
  auto st = world::start_episode(inst.world, inst.spawn);
  st.pose = {twin.x, twin.y + 1.0, -std::numbers::pi / 2};  // facing north, twin to the north
  const bool facing = world::aimed_instance(st, t.radius) == inst.twin_id;
  st.pose.yaw = std::numbers::pi / 2;
  const bool away = world::aimed_instance(st, t.radius) == inst.twin_id;
  EXPECT_TRUE(facing);
  EXPECT_FALSE(away);
}

TEST(Judge, TraceRecordsEveryStep) {
  const auto suite = bench::build_task_suite();
  bench::RandomAgent agent(3);
  bench::EpisodeOptions o;
  o.record_trace = true;
  o.max_steps = 30;
  const auto r = bench::run_episode(suite[0], agent, 6, o);
  EXPECT_EQ(static_cast<int>(r.trace.size()), r.steps_used);
  for (std::size_t i = 0; i < r.trace.size(); ++i) EXPECT_EQ(r.trace[i].step, static_cast<int>(i));
  const auto j = bench::to_json(r);
  EXPECT_EQ(j.at("task_id"), suite[0].task_id);
}

TEST(Judge, ActionBridgeIsApplied) {
  const auto suite = bench::build_task_suite();
  bench::ExpertAgent oracle;
  bench::EpisodeOptions o;
  o.max_steps = 40;
  int calls = 0;
  o.action_bridge = [&](const world::Action&) {
    ++calls;
    return world::Action::null();
  };
  const auto r = bench::run_episode(suite[0], oracle, 1, o);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(calls, 40);
}

TEST(Matrix, WilsonInterval) {
  // reference values from the closed form
  auto ci = bench::wilson_interval(0, 32);
  EXPECT_DOUBLE_EQ(ci.low, 0.0);
  EXPECT_NEAR(ci.high, 0.1072, 1e-4);
  ci = bench::wilson_interval(16, 32);
  EXPECT_NEAR(ci.low, 0.3363, 1e-4);
  EXPECT_NEAR(ci.high, 0.6637, 1e-4);
  ci = bench::wilson_interval(32, 32);
  EXPECT_NEAR(ci.low, 0.8928, 1e-4);
  EXPECT_DOUBLE_EQ(ci.high, 1.0);
  ci = bench::wilson_interval(0, 0);
  EXPECT_EQ(ci.low, 0.0);
  EXPECT_EQ(ci.high, 1.0);
}

TEST(Matrix, CellCounts) {
  bench::Cell c;
  EXPECT_FALSE(c.correct_instance_share().has_value());
  c.add({"t", 1, true, false, 3, {}});
  c.add({"t", 2, false, true, 3, {}});
  c.add({"t", 3, false, false, 3, {}});
  c.add({"t", 4, true, false, 3, {}});
  EXPECT_EQ(c.episodes, 4);
  EXPECT_DOUBLE_EQ(c.rate(), 0.5);
  EXPECT_NEAR(*c.correct_instance_share(), 2.0 / 3.0, 1e-12);
}

TEST(Matrix, TableLayoutAndSeedIsolation) {
  bench::SuiteConfig sc;
  sc.kinds = {world::ObjectKind::block, world::ObjectKind::chest};
  const auto suite = bench::build_task_suite(sc);
  bench::MatrixOptions opt;
  opt.episodes_per_task = 3;
  opt.seed = 4;
  opt.episode.max_steps = 64;
  auto variants = std::vector<std::pair<std::string, bench::AgentFactory>>{
      {"oracle", [] { return std::make_unique<bench::ExpertAgent>(); }},
      {"random", [] { return std::make_unique<bench::RandomAgent>(1); }},
      {"idle", [] { return std::make_unique<bench::IdleAgent>(); }}};
  const auto t = bench::run_matrix(suite, variants, opt);
  ASSERT_EQ(t.variants.size(), 3u);
  for (const auto& v : t.variants) {
    ASSERT_EQ(t.rows.at(v).size(), suite.size() + 1);
    EXPECT_EQ(t.average(v).episodes, 3 * static_cast<int>(suite.size()));
  }
  EXPECT_EQ(t.average("idle").successes, 0);
  const auto text = bench::format_table(t);
  int lines = 0;
  for (char ch : text) lines += ch == '\n';
  EXPECT_EQ(lines, 4);
  EXPECT_NE(text.find("Avg."), std::string::npos);
  EXPECT_NE(text.find("[0.00,"), std::string::npos);
  const auto jsonl = bench::format_jsonl(t);
  int records = 0;
  for (char ch : jsonl) records += ch == '\n';
  EXPECT_EQ(records, 3 * static_cast<int>(suite.size() + 1));

  // Every variant saw the same seeds, and a second run with threads matches.
  std::map<std::string, std::vector<std::uint64_t>> seeds;
  for (std::size_t i = 0; i < t.episodes.size(); ++i) seeds[t.episode_variants[i]].push_back(t.episodes[i].seed);
  EXPECT_EQ(seeds["oracle"], seeds["idle"]);
  opt.workers = 3;
  const auto again = bench::run_matrix(suite, variants, opt);
  for (const auto& v : t.variants) {
    for (std::size_t i = 0; i < t.rows.at(v).size(); ++i) {
      EXPECT_EQ(t.rows.at(v)[i].successes, again.rows.at(v)[i].successes);
    }
  }
}

TEST(Matrix, AblationNeedsAllCheckpoints) {
  const auto suite = bench::build_task_suite();
  EXPECT_THROW(bench::run_ablation_matrix(suite, {}, {}), NotFoundError);
}
