#include "xview/datagen/expert.hpp"
#include "xview/datagen/goal.hpp"
#include "xview/datagen/relabel.hpp"
#include "xview/datagen/shard.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace xview;
using namespace xview::world;
using namespace xview::datagen;

namespace {

TileMap open_map(int w = 16, int h = 16) {
  WorldConfig c;
  c.width = w;
  c.height = h;
  return generate_world(1, c).map;
}

// Trajectory rendered from an explicit list of camera poses.
RawTrajectory scripted(const TileMap& map, const std::vector<ObjectInstance>& objs,
                       const std::vector<Pose>& poses) {
  RawTrajectory t;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto obs = render(map, objs, poses[i]);
    obs.step_index = static_cast<int>(i);
    t.observations.push_back(std::move(obs));
    t.actions.push_back(Action::null());
  }
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "xview_datagen_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

GeneratedWorld expert_world() {
  WorldConfig c;
  c.layout = Layout::mirrored;
  c.roster = {{ObjectKind::block, ColorTag::red, 2}, {ObjectKind::block, ColorTag::blue, 1}};
  c.clutter = 4;
  return generate_world(21, c);
}

}  // namespace

TEST(Expert, BreakTaskEndsWithEvent) {
  const auto w = expert_world();
  ASSERT_EQ(w.objects[2].instance_id, 3);
  const auto spawn = free_spawn_tiles(w).front();
  auto s = start_episode(w, {spawn.x + 0.5, spawn.y + 0.5, 0.0});
  ExpertOptions opt;
  opt.epsilon = 0.0;
  const auto traj = run_expert(s, {EventKind::break_, 3}, 1, opt);
  EXPECT_FALSE(traj.failed) << traj.failure;
  ASSERT_FALSE(traj.events.empty());
  EXPECT_EQ(traj.events.back().kind, EventKind::break_);
  EXPECT_EQ(traj.events.back().instance_id, 3);
  EXPECT_EQ(traj.events.back().step_index, static_cast<int>(traj.length()) - 1);
  EXPECT_EQ(traj.observations.size(), traj.actions.size());
}

TEST(Expert, DeterministicForSeed) {
  const auto w = expert_world();
  const auto spawn = free_spawn_tiles(w).back();
  auto run = [&] {
    auto s = start_episode(w, {spawn.x + 0.5, spawn.y + 0.5, 1.0});
    return run_expert(s, {EventKind::attack, 2}, 17, {});
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.events, b.events);
}

TEST(Expert, UnreachableTargetRecordsFailure) {
  WorldConfig c;
  c.layout = Layout::walled_off;
  c.roster = {{ObjectKind::block, ColorTag::red, 1}, {ObjectKind::chest, ColorTag::blue, 1}};
  const auto w = generate_world(4, c);
  const auto spawn = free_spawn_tiles(w).front();
  auto s = start_episode(w, {spawn.x + 0.5, spawn.y + 0.5, 0.0});
  ExpertOptions opt;
  opt.epsilon = 0.0;
  const auto traj = run_expert(s, {EventKind::break_, 1}, 3, opt);
  EXPECT_TRUE(traj.failed);
  EXPECT_FALSE(traj.observations.empty());
  for (const auto& e : traj.events) EXPECT_NE(e.kind, EventKind::break_);
}

TEST(Relabel, SingleEventSpan) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{1, ObjectKind::block, ColorTag::red, 8.5, 8.5, true}};
  std::vector<Pose> poses(20, Pose{4.5, 8.5, 0.0});
  auto traj = scripted(map, objs, poses);
  traj.events = {{10, EventKind::use, 1}};
  const auto clips = relabel_backward(traj, 128);
  ASSERT_EQ(clips.size(), 1u);
  EXPECT_EQ(clips[0].span_begin, std::max(0, 10 - 127));
  EXPECT_EQ(clips[0].span_end, 10);
  EXPECT_EQ(clips[0].length(), 11);
  const auto short_clips = relabel_backward(traj, 4);
  EXPECT_EQ(short_clips[0].span_begin, 7);
}

TEST(Relabel, StopsAtPreviousEvent) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{1, ObjectKind::block, ColorTag::red, 8.5, 8.5, true},
                                   {2, ObjectKind::chest, ColorTag::blue, 8.5, 9.5, true}};
  std::vector<Pose> poses(20, Pose{4.5, 9.0, 0.0});
  auto traj = scripted(map, objs, poses);
  traj.events = {{5, EventKind::use, 2}, {12, EventKind::use, 1}};
  const auto clips = relabel_backward(traj, 128);
  ASSERT_EQ(clips.size(), 2u);
  EXPECT_EQ(clips[0].span_begin, 0);
  EXPECT_EQ(clips[1].span_begin, 6);
  EXPECT_EQ(clips[1].span_end, 12);
}

TEST(Relabel, OcclusionKeepsClipContiguous) {
  auto map = open_map();
  map.at(6, 6) = 6;
  std::vector<ObjectInstance> objs{{1, ObjectKind::block, ColorTag::red, 10.5, 6.5, true}};
  std::vector<Pose> poses;
  for (int t = 0; t < 12; ++t) poses.push_back({2.5, (t == 7 || t == 8) ? 6.5 : 4.5, 0.25});
  auto traj = scripted(map, objs, poses);
  traj.events = {{11, EventKind::break_, 1}};
  const auto clips = relabel_backward(traj, 128);
  ASSERT_EQ(clips.size(), 1u);
  const auto& clip = clips[0];
  ASSERT_EQ(clip.length(), 12);
  for (int t = 0; t < 12; ++t) {
    const auto& f = clip.frames[static_cast<std::size_t>(t)];
    // Oracle: the source instance buffer itself.
    bool any = false;
    for (auto v : traj.observations[static_cast<std::size_t>(t)].instance_buffer) any = any || v == 1;
    EXPECT_EQ(f.label.visible, any) << t;
    EXPECT_EQ(f.label.mask.empty(), !any);
    EXPECT_EQ(f.label.visible, t != 7 && t != 8) << t;
  }
}

TEST(Relabel, EmptyMaskEventSkippedWithWarning) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{1, ObjectKind::block, ColorTag::red, 8.5, 8.5, true}};
  std::vector<Pose> poses(6, Pose{4.5, 8.5, std::numbers::pi});
  auto traj = scripted(map, objs, poses);
  traj.events = {{3, EventKind::use, 1}};
  std::vector<std::string> warnings;
  EXPECT_TRUE(relabel_backward(traj, 128, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Approach, StandingStillEmitsNothing) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{4, ObjectKind::marker, ColorTag::green, 8.5, 8.5, true}};
  std::vector<Pose> poses(80, Pose{6.5, 8.5, 0.0});
  const auto traj = scripted(map, objs, poses);
  ASSERT_EQ(center_instance(traj.observations.back()), 4u);
  EXPECT_TRUE(detect_approach_events(traj, 8.0).empty());
}

TEST(Approach, LongWalkEndingOnInstance) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{4, ObjectKind::marker, ColorTag::green, 13.5, 8.5, true}};
  std::vector<Pose> poses;
  for (int t = 0; t <= 40; ++t) poses.push_back({1.5 + 0.25 * t, 8.5, 0.0});
  const auto traj = scripted(map, objs, poses);
  ASSERT_EQ(center_instance(traj.observations.back()), 4u);
  ASSERT_NEAR(window_displacement(traj, 40), 10.0, 1e-9);
  const auto events = detect_approach_events(traj, 8.0);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].kind, EventKind::approach);
  EXPECT_EQ(events[0].instance_id, 4);
  EXPECT_EQ(events[0].step_index, 40);
  EXPECT_GT(window_displacement(traj, events[0].step_index), 8.0);
}

TEST(Approach, WalkEndingOnBackground) {
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{4, ObjectKind::marker, ColorTag::green, 13.5, 3.5, true}};
  std::vector<Pose> poses;
  for (int t = 0; t <= 40; ++t) poses.push_back({1.5 + 0.25 * t, 8.5, 0.0});
  const auto traj = scripted(map, objs, poses);
  ASSERT_EQ(center_instance(traj.observations.back()), 0u);
  EXPECT_TRUE(detect_approach_events(traj, 8.0).empty());
  EXPECT_THROW(detect_approach_events(traj, 0.0), ConfigError);
}

namespace {

TrajectoryClip clip_with_visibility(const std::vector<bool>& visible) {
  TrajectoryClip clip;
  clip.event_kind = EventKind::attack;
  clip.target_instance = 1;
  const auto map = open_map();
  std::vector<ObjectInstance> objs{{1, ObjectKind::creature, ColorTag::red, 8.5, 8.5, true}};
  for (std::size_t t = 0; t < visible.size(); ++t) {
    const Pose p{5.5, 8.5 + 0.1 * static_cast<double>(t), visible[t] ? 0.0 : std::numbers::pi};
    auto obs = render(map, objs, p);
    auto mask = mask_of(obs, 1);
    clip.frames.push_back({obs, Action::null(), make_label(std::move(mask))});
  }
  clip.span_end = static_cast<int>(visible.size()) - 1;
  return clip;
}

}  // namespace

TEST(SampleGoalView, SingleVisibleFrameAlwaysChosen) {
  const auto clip = clip_with_visibility({false, false, true, false});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    int g = -1;
    const auto goal = sample_goal_view(clip, rng, &g);
    EXPECT_EQ(g, 2);
    EXPECT_EQ(goal.goal_mask, mask_of(clip.frames[2].observation, 1));
    EXPECT_EQ(goal.goal_view, clip.frames[2].observation.rgb);
    EXPECT_EQ(goal.event, EventKind::attack);
  }
}

TEST(SampleGoalView, UniformOverVisibleFrames) {
  const auto clip = clip_with_visibility({true, false, true, true, false, true});
  const std::vector<int> visible{0, 2, 3, 5};
  const int k = 4;
  const int draws = 10 * k * 250;
  std::mt19937_64 rng(7);
  std::map<int, int> counts;
  for (int i = 0; i < draws; ++i) {
    int g = -1;
    sample_goal_view(clip, rng, &g);
    ++counts[g];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / k;
  for (int v : visible) {
    EXPECT_NEAR(counts[v] / static_cast<double>(draws), 1.0 / k, 0.05);
    chi2 += (counts[v] - expected) * (counts[v] - expected) / expected;
  }
  EXPECT_EQ(counts.size(), visible.size());
  EXPECT_LT(chi2, 16.27);  // chi-square, 3 dof, p = 0.001
}

TEST(SampleGoalView, NoVisibleFrameIsInvalid) {
  const auto clip = clip_with_visibility({false, false});
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_goal_view(clip, rng), InvalidClipError);
}

TEST(Rle, RoundTripRandomMasks) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const int h = 1 + static_cast<int>(rng() % 40);
    const int w = 1 + static_cast<int>(rng() % 40);
    Mask m(h, w);
    const auto density = static_cast<double>(rng() % 100) / 100.0;
    std::bernoulli_distribution bit(density);
    for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
    EXPECT_EQ(decode_rle(encode_rle(m), h, w), m);
    EXPECT_EQ(rle_from_text(rle_to_text(m)), m);
  }
  EXPECT_THROW(decode_rle({3, 2}, 2, 2), ValidationError);
  EXPECT_THROW(decode_rle({1, 2}, 2, 2), ValidationError);
  EXPECT_THROW(rle_from_text("2 2 1 x"), ValidationError);
}

TEST(Shard, RoundTrip) {
  std::vector<TrajectoryClip> clips{clip_with_visibility({true, false, true}), clip_with_visibility({true})};
  clips[1].event_kind = EventKind::approach;
  clips[1].frames[0].action = {MoveCommand::strafe_left, -0.25, InteractCommand::use};
  const auto path = temp_file("roundtrip.xvs").string();
  const auto written = write_shard(clips, path);
  EXPECT_EQ(written.manifest[static_cast<std::size_t>(EventKind::attack)], 1u);
  EXPECT_EQ(written.manifest[static_cast<std::size_t>(EventKind::approach)], 1u);
  const auto back = read_shard(path);
  EXPECT_EQ(back, written);
}

TEST(Shard, EmptyClipList) {
  const auto path = temp_file("empty.xvs").string();
  write_shard({}, path);
  const auto back = read_shard(path);
  EXPECT_TRUE(back.clips.empty());
  for (auto c : back.manifest) EXPECT_EQ(c, 0u);
  EXPECT_EQ(back.format_version, kShardFormatVersion);
}

TEST(Shard, TruncatedFileIsCorrupt) {
  const auto path = temp_file("trunc.xvs").string();
  write_shard({clip_with_visibility({true, true})}, path);
  auto bytes = read_file(path);
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    write_file(path, part);
    EXPECT_THROW(read_shard(path), CorruptShardError) << cut;
  }
}

TEST(Shard, VersionMismatch) {
  const auto path = temp_file("version.xvs").string();
  write_shard({}, path);
  auto bytes = read_file(path);
  bytes[4] = 9;
  write_file(path, bytes);
  EXPECT_THROW(read_shard(path), UnsupportedFormatError);
}
