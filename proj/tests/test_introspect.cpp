#include "support/oracles.hpp"

#include "xview/bench/suite.hpp"
#include "xview/introspect/landmarks.hpp"

#include <gtest/gtest.h>

#include <cstdio>

using namespace xview;
using introspect::AttentionMap;

namespace {

policy::Policy<float>& small_model() {
  static policy::Policy<float> model([] {
    auto c = policy::desk_config();
    c.width = 32;
    c.heads = 4;
    c.seed = 21;
    return c;
  }());
  return model;
}

struct Scene {
  bench::TaskInstance inst;
  policy::GoalSpec goal;
  world::Observation current;
};

Scene scene() {
  const auto suite = bench::build_task_suite();
  Scene s{bench::instantiate(suite[0], 3), {}, {}};
  s.goal = bench::goal_for(suite[0], s.inst);
  s.current = world::render(s.inst.world.map, s.inst.world.objects, s.inst.spawn);
  return s;
}

AttentionMap random_map(int p2, std::mt19937_64& rng) {
  AttentionMap a;
  a.tokens_per_view = p2;
  a.mean = nn::Matrix<double>(2 * p2, 2 * p2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int r = 0; r < 2 * p2; ++r) {
    for (int c = 0; c < 2 * p2; ++c) a.mean(r, c) = u(rng);
    a.mean.row(r) /= a.mean.row(r).sum();
  }
  return a;
}

std::vector<int> zero_based(const std::vector<int>& one_based) {
  std::vector<int> out;
  for (int i : one_based) out.push_back(i - 1);
  return out;
}

struct Opaque {};

}  // namespace

TEST(ExtractAttention, ShapeAndRows) {
  const auto s = scene();
  const auto a = introspect::extract_attention(small_model(), s.current, s.goal);
  const int p2 = small_model().config().tokens();
  ASSERT_EQ(a.size(), 2 * p2);
  ASSERT_EQ(a.per_head.size(), 4u);
  EXPECT_EQ(a.mean.cols(), 2 * p2);
  EXPECT_GE(a.mean.minCoeff(), 0.0);
  for (int r = 0; r < a.size(); ++r) EXPECT_NEAR(a.mean.row(r).sum(), 1.0, 1e-5);
  for (const auto& h : a.per_head)
    for (int r = 0; r < a.size(); ++r) EXPECT_NEAR(h.row(r).sum(), 1.0, 1e-5);
  nn::Matrix<double> avg = nn::Matrix<double>::Zero(a.size(), a.size());
  for (const auto& h : a.per_head) avg += h / 4.0;
  EXPECT_LT((avg - a.mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExtractAttention, Deterministic) {
  const auto s = scene();
  const auto a = introspect::extract_attention(small_model(), s.current, s.goal);
  const auto b = introspect::extract_attention(small_model(), s.current, s.goal);
  EXPECT_EQ(a.mean, b.mean);
}

TEST(ExtractAttention, ClsPoolingAddsAToken) {
  auto c = policy::mini_config();
  c.pooling = policy::Pooling::cls;
  policy::Policy<float> model(c);
  std::mt19937_64 rng(1);
  world::Observation obs;
  obs.height = obs.width = 8;
  obs.rgb = xview::testing::random_rgb(8, rng);
  policy::GoalSpec g{8, 8, xview::testing::random_rgb(8, rng), xview::testing::random_mask(8, 8, 0.3, rng), world::EventKind::use};
  const auto a = introspect::extract_attention(model, obs, g);
  EXPECT_EQ(a.size(), 2 * c.tokens() + 1);
}

TEST(ExtractAttention, NeedsExposedAttention) {
  const auto s = scene();
  EXPECT_THROW(introspect::extract_attention(Opaque{}, s.current, s.goal), CapabilityError);
}

TEST(LandmarkResponse, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  const int p2 = 64;
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_map(p2, rng);
    std::vector<int> all(p2);
    std::iota(all.begin(), all.end(), 1);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(1 + rng() % 10);
    const auto m = introspect::landmark_response(a, {all});
    EXPECT_EQ(m, xview::testing::brute_landmark_response(a.mean, zero_based(all), p2));
  }
}

TEST(LandmarkResponse, PerHeadSelection) {
  std::mt19937_64 rng(9);
  const int p2 = 16;
  auto a = random_map(p2, rng);
  a.per_head = {random_map(p2, rng).mean, random_map(p2, rng).mean};
  const std::vector<int> l{2, 7, 11};
  for (int h = 0; h < 2; ++h) {
    EXPECT_EQ(introspect::landmark_response(a, {l}, h),
              xview::testing::brute_landmark_response(a.per_head[static_cast<std::size_t>(h)], zero_based(l), p2));
  }
  EXPECT_THROW(introspect::landmark_response(a, {l}, 2), RangeError);
  EXPECT_THROW(introspect::landmark_response(a, {l}, -1), RangeError);
}

TEST(LandmarkResponse, SingleLandmarkIsItsGoalBlock) {
  std::mt19937_64 rng(6);
  const auto a = random_map(16, rng);
  const auto m = introspect::landmark_response(a, {{5}});
  for (int i = 0; i < 16; ++i) EXPECT_EQ(m[static_cast<std::size_t>(i)], a.mean(4, i + 16));
}

TEST(LandmarkResponse, UniformAttention) {
  AttentionMap a;
  a.tokens_per_view = 16;
  a.mean = nn::Matrix<double>::Constant(32, 32, 1.0 / 32.0);
  for (double v : introspect::landmark_response(a, {{1, 7, 16}})) EXPECT_DOUBLE_EQ(v, 1.0 / 32.0);
}

TEST(LandmarkResponse, PermutationAndUnion) {
  std::mt19937_64 rng(9);
  const auto a = random_map(64, rng);
  const std::vector<int> l1{3, 9, 40};
  const std::vector<int> l2{12, 50};
  auto u = l1;
  u.insert(u.end(), l2.begin(), l2.end());
  const auto m1 = introspect::landmark_response(a, {l1});
  const auto m2 = introspect::landmark_response(a, {l2});
  const auto mu = introspect::landmark_response(a, {u});
  auto shuffled = u;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto mr = introspect::landmark_response(a, {shuffled});
  for (int i = 0; i < 64; ++i) {
    const auto k = static_cast<std::size_t>(i);
    EXPECT_NEAR(mu[k], (3.0 * m1[k] + 2.0 * m2[k]) / 5.0, 1e-15);
    EXPECT_NEAR(mr[k], mu[k], 1e-15);
  }
}

TEST(LandmarkResponse, OutOfRange) {
  std::mt19937_64 rng(1);
  const auto a = random_map(16, rng);
  EXPECT_THROW(introspect::landmark_response(a, {{0}}), RangeError);
  EXPECT_THROW(introspect::landmark_response(a, {{17}}), RangeError);
  EXPECT_THROW(introspect::landmark_response(a, {{}}), ValidationError);
}

TEST(Landmarks, Validation) {
  EXPECT_THROW(introspect::make_landmarks({}, 64), ValidationError);
  EXPECT_THROW(introspect::make_landmarks({3, 3}, 64), ValidationError);
  EXPECT_THROW(introspect::make_landmarks({65}, 64), RangeError);
  world::Mask mask(64, 64);
  mask.at(10, 20) = 1;  // patch row 1, col 2 -> index 1 * 8 + 2 + 1
  EXPECT_EQ(introspect::mask_patches(mask, 8), (std::set<int>{11}));
  EXPECT_THROW(introspect::make_landmarks({11}, 64, &mask, 8), ValidationError);
  EXPECT_NO_THROW(introspect::make_landmarks({12, 1}, 64, &mask, 8));
}

TEST(Overlay, PngGeometry) {
  const auto s = scene();
  const auto a = introspect::extract_attention(small_model(), s.current, s.goal);
  const auto lm = introspect::make_landmarks({1, 10}, 64);
  const auto m = introspect::landmark_response(a, lm);
  const std::string path = ::testing::TempDir() + "overlay.png";
  introspect::export_overlay(path, m, s.goal.goal_view, lm, s.current.rgb, 64, 8);
  const auto img = decode_png(read_file(path));
  std::remove(path.c_str());
  EXPECT_EQ(img.height, 256);
  EXPECT_EQ(img.width, 512);
  // landmark 10 is patch row 1, col 1: display rows/cols 32..63 at scale 4
  auto white = [&](int r, int c) { return img.at(r, c, 0) == 255 && img.at(r, c, 1) == 255 && img.at(r, c, 2) == 255; };
  for (int k = 32; k < 64; ++k) {
    EXPECT_TRUE(white(32, k));
    EXPECT_TRUE(white(63, k));
    EXPECT_TRUE(white(k, 32));
    EXPECT_TRUE(white(k, 63));
  }
  for (int k = 0; k < 32; ++k) EXPECT_TRUE(white(0, k));
}

TEST(Overlay, ConstantResponseIsUniformTint) {
  const int size = 16;
  const std::vector<std::uint8_t> grey(size * size * 3, 100);
  const std::vector<double> flat(4, 0.25);
  const auto img = introspect::render_overlay(flat, grey, {{1}}, grey, size, 8, {2, 0.5});
  EXPECT_EQ(img.width, 64);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 32; c < 64; ++c) {
      EXPECT_EQ(img.at(r, c, 0), 50);
      EXPECT_EQ(img.at(r, c, 1), 50);
      EXPECT_EQ(img.at(r, c, 2), 178);  // round(50 + 127.5)
    }
  }
  EXPECT_EQ(introspect::normalise_heat(flat), std::vector<double>(4, 0.0));
}

TEST(Overlay, WriteFailure) {
  const std::vector<std::uint8_t> grey(16 * 16 * 3, 0);
  EXPECT_THROW(introspect::export_overlay("/nonexistent/dir/x.png", std::vector<double>(4, 0.0), grey, {{1}}, grey,
                                          16, 8),
               IoError);
}
