#include "support/oracles.hpp"

#include "xview/transfer/zeroshot.hpp"

#include <gtest/gtest.h>

#include <cstdio>

using namespace xview;
using transfer::ActionMapping;

namespace {

std::string config_path(const std::string& file) { return std::string(XVIEW_SOURCE_DIR) + "/configs/" + file; }

world::Action random_turn_action(std::mt19937_64& rng) {
  auto a = xview::testing::random_action(rng, world::kTurnBins);
  a.turn = std::uniform_real_distribution<double>(-world::kMaxTurn, world::kMaxTurn)(rng);
  return a;
}

ActionMapping partial() {
  ActionMapping m;
  m.name = "partial";
  m.target_size = 2;
  m.rules = {{"forward", 0, 1.0}, {"yaw", 1, 2.0}};
  m.masked = {"back", "left", "right", "use", "break", "attack"};
  return m;
}

}  // namespace

TEST(Mapping, PaperTableLoads) {
  const auto all = transfer::load_mappings(config_path("paper_action_mappings.json"));
  ASSERT_EQ(all.size(), 3u);
  const auto dmlab = transfer::load_mapping(config_path("paper_action_mappings.json"), "dmlab");
  EXPECT_EQ(dmlab.target_size, 7);
  world::Action a;
  a.turn = 0.3;
  auto v = transfer::map_action(dmlab, a);
  EXPECT_DOUBLE_EQ(v[0], 4.75 * 0.3);
  EXPECT_DOUBLE_EQ(v[1], 0.0);  // no pitch in this simulator
  a = world::Action::null();
  a.move = world::MoveCommand::forward;
  v = transfer::map_action(dmlab, a);
  EXPECT_DOUBLE_EQ(v[3], 1.0);
  a.move = world::MoveCommand::back;
  EXPECT_DOUBLE_EQ(transfer::map_action(dmlab, a)[3], -1.0);
  a = world::Action::null();
  a.interact = world::InteractCommand::attack;
  EXPECT_DOUBLE_EQ(transfer::map_action(dmlab, a)[4], 1.0);
  const auto pitch = std::find_if(dmlab.rules.begin(), dmlab.rules.end(), [](auto& r) { return r.source == "pitch"; });
  ASSERT_NE(pitch, dmlab.rules.end());
  EXPECT_EQ(pitch->slot, 1);
  EXPECT_DOUBLE_EQ(pitch->gain, 2.78);
  const auto doom = transfer::load_mapping(config_path("paper_action_mappings.json"), "doom");
  EXPECT_NE(std::find(doom.masked.begin(), doom.masked.end(), "pitch"), doom.masked.end());
  EXPECT_THROW(transfer::load_mapping(config_path("paper_action_mappings.json")), MappingError);
  EXPECT_THROW(transfer::load_mapping(config_path("paper_action_mappings.json"), "quake"), NotFoundError);
}

TEST(Mapping, Totality) {
  auto m = partial();
  EXPECT_THROW(m.validate(), MappingError);  // pitch missing
  m.masked.push_back("pitch");
  EXPECT_NO_THROW(m.validate());
  auto dup = m;
  dup.masked.push_back("yaw");
  EXPECT_THROW(dup.validate(), MappingError);
  auto unknown = m;
  unknown.masked.push_back("jump");
  EXPECT_THROW(unknown.validate(), MappingError);
  auto slot = m;
  slot.rules[1].slot = 2;
  EXPECT_THROW(slot.validate(), MappingError);
  auto gain = m;
  gain.rules[0].gain = std::numeric_limits<double>::infinity();
  EXPECT_THROW(gain.validate(), MappingError);
  auto names = m;
  names.slot_names = {"only_one"};
  EXPECT_THROW(names.validate(), MappingError);
}

TEST(Mapping, UnvalidatedIsRejected) {
  auto m = partial();
  m.masked.push_back("pitch");
  EXPECT_THROW(transfer::map_action(m, world::Action::null()), MappingError);
}

TEST(Mapping, MaskedFieldsAreDropped) {
  auto m = partial();
  m.masked.push_back("pitch");
  m.validate();
  world::Action a;
  a.move = world::MoveCommand::back;
  a.interact = world::InteractCommand::use;
  a.turn = -0.2;
  EXPECT_EQ(transfer::map_action(m, a), (std::vector<double>{0.0, -0.4}));
}

TEST(Mapping, JsonRoundTrip) {
  const auto dmlab = transfer::load_mapping(config_path("paper_action_mappings.json"), "dmlab");
  const auto back = transfer::mapping_from_json(transfer::to_json(dmlab));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_turn_action(rng);
    EXPECT_EQ(transfer::map_action(dmlab, a), transfer::map_action(back, a));
  }
  EXPECT_THROW(transfer::mapping_from_json({{"name", "x"}}), MappingError);
}

TEST(Mapping, IdentityRoundTripsThroughDecode) {
  const auto id = transfer::identity_mapping();
  const auto layout = transfer::identity_layout();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_turn_action(rng);
    const auto v1 = transfer::map_action(id, a);
    EXPECT_EQ(v1, transfer::map_action(id, a));  // pure
    const auto b = layout.decode(v1);
    EXPECT_EQ(a.move, b.move);
    EXPECT_EQ(a.interact, b.interact);
    EXPECT_DOUBLE_EQ(a.turn, b.turn);
  }
}

TEST(Skin, HardSkinNeedsItsOwnMapping) {
  const auto hard = transfer::hard_skin();
  const auto native = hard.native_mapping();
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_turn_action(rng);
    const auto v = transfer::map_action(native, a);
    ASSERT_EQ(v.size(), 7u);
    EXPECT_NEAR(v[0], a.turn * 180.0 / std::numbers::pi, 1e-9);
    const auto b = hard.controls.decode(v);
    EXPECT_EQ(a.move, b.move);
    EXPECT_EQ(a.interact, b.interact);
    EXPECT_NEAR(a.turn, b.turn, 1e-12);
  }
  // The identity mapping writes 9 slots; the hard skin reads 7.
  EXPECT_THROW(transfer::check_compatible(hard, transfer::identity_mapping()), MappingError);
  const auto dmlab = transfer::load_mapping(config_path("paper_action_mappings.json"), "dmlab");
  EXPECT_THROW(transfer::check_compatible(hard, dmlab), MappingError);
  EXPECT_THROW(hard.controls.decode({1.0, 2.0}), MappingError);
}

TEST(Skin, Validation) {
  auto s = transfer::wide_skin();
  EXPECT_NO_THROW(s.validate());
  s.render.height = 24;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(transfer::skin_by_name("neon"), NotFoundError);
  EXPECT_EQ(transfer::skin_by_name("mild").render.width, 80);
}

TEST(Skin, ResizeIsIdentityAtPolicyResolution) {
  std::mt19937_64 rng(1);
  const auto img = xview::testing::random_rgb(64, rng);
  EXPECT_EQ(runtime::to_policy_rgb(img, 64, 64, 64), img);
  const auto wide = runtime::to_policy_rgb(xview::testing::random_rgb(96, rng), 72, 96, 64);
  EXPECT_EQ(wide.size(), 64u * 64u * 3u);
}

TEST(ZeroShot, WideSkinRunsWithoutShapeErrors) {
  auto c = policy::desk_config();
  c.width = 16;
  c.heads = 2;
  c.memory = 8;
  c.zero_init_heads = false;
  auto model = std::make_shared<const policy::Policy<float>>(c);
  bench::SuiteConfig sc;
  sc.kinds = {world::ObjectKind::marker, world::ObjectKind::chest};
  transfer::ZeroShotOptions opt;
  opt.matrix.episodes_per_task = 2;
  opt.matrix.episode.max_steps = 24;
  for (const auto& skin : {transfer::wide_skin(), transfer::mild_skin(), transfer::hard_skin()}) {
    const auto mapping = skin.name == "hard" ? skin.native_mapping() : transfer::identity_mapping();
    transfer::ZeroShotResult r;
    ASSERT_NO_THROW(r = transfer::evaluate_zero_shot(model, skin, mapping, bench::build_task_suite(sc), opt))
        << skin.name;
    EXPECT_EQ(r.table.variants, (std::vector<std::string>{"policy", "random"}));
    EXPECT_EQ(r.table.average("policy").episodes, 8);
    EXPECT_GE(r.random_floor, 0.0);
  }
}

TEST(ZeroShot, RandomFloorIsLow) {
  auto c = policy::desk_config();
  c.width = 16;
  c.heads = 2;
  auto model = std::make_shared<const policy::Policy<float>>(c);
  bench::SuiteConfig sc;
  sc.kinds = {world::ObjectKind::marker};
  transfer::ZeroShotOptions opt;
  opt.matrix.episodes_per_task = 16;
  const auto r = transfer::evaluate_zero_shot(model, transfer::mild_skin(), transfer::identity_mapping(),
                                              bench::build_task_suite(sc), opt);
  EXPECT_LT(r.random_floor, 0.15);
}

TEST(ZeroShot, MismatchedMappingIsRejected) {
  auto model = std::make_shared<const policy::Policy<float>>(policy::mini_config());
  EXPECT_THROW(transfer::evaluate_zero_shot(model, transfer::hard_skin(), transfer::identity_mapping(),
                                            bench::build_task_suite()),
               MappingError);
}
