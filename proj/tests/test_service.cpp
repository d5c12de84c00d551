#include "xview/service/server.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace xview;
using service::SessionHub;

namespace {

std::shared_ptr<const policy::Policy<float>> small_model() {
  auto c = policy::desk_config();
  c.width = 32;
  c.heads = 4;
  c.memory = 8;
  c.zero_init_heads = false;
  c.seed = 11;
  static auto model = std::make_shared<const policy::Policy<float>>(c);
  return model;
}

service::ServiceConfig config() {
  service::ServiceConfig c;
  c.checkpoint_dir = "/nonexistent";
  c.tick_hz = 50;
  return c;
}

std::unique_ptr<SessionHub> make_hub(service::ServiceConfig c = config()) {
  auto hub = std::make_unique<SessionHub>(c);
  hub->checkpoints().add("tiny", small_model());
  return hub;
}

// A centred square, in the frame's own resolution.
std::string square_mask(int h, int w, int half = 6) {
  world::Mask m(h, w);
  for (int r = h / 2 - half; r < h / 2 + half; ++r)
    for (int c = w / 2 - half; c < w / 2 + half; ++c) m.bits[static_cast<std::size_t>(r * w + c)] = 1;
  return datagen::rle_to_text(m);
}

service::GoalSubmission goal_from(SessionHub& hub, const std::string& id, std::uint64_t frame) {
  const auto f = hub.frame(id, frame);
  service::GoalSubmission g;
  g.frame_index = frame;
  g.mask_rle = square_mask(f.height, f.width);
  return g;
}

std::string base64_decode(const std::string& in) {
  static const std::string abc = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  unsigned buf = 0;
  int bits = 0;
  for (char ch : in) {
    if (ch == '=') break;
    buf = (buf << 6) | static_cast<unsigned>(abc.find(ch));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace

TEST(Hub, SessionIdsAreDistinct) {
  auto hub = make_hub();
  std::set<std::string> ids;
  for (int i = 0; i < 5; ++i) ids.insert(hub->create_session(3, "tiny").id);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_EQ(hub->list().size(), 5u);
}

TEST(Hub, UnknownCheckpointIsNotFound) {
  auto hub = make_hub();
  EXPECT_THROW(hub->create_session(1, "missing"), NotFoundError);
  EXPECT_THROW(hub->create_session(1, "../etc/passwd"), NotFoundError);
}

TEST(Hub, NewSessionIsIdleWithOneFrame) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  EXPECT_EQ(s.status, service::Status::idle);
  EXPECT_FALSE(s.has_goal);
  const auto f = hub->latest(s.id);
  EXPECT_EQ(f.frame_index, 0u);
  EXPECT_FALSE(f.diagnostics);
  EXPECT_THROW(hub->step(s.id), StateError);
}

TEST(Hub, GoalStartsRunningAndResubmissionKeepsSteps) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  EXPECT_EQ(hub->submit_goal(s.id, goal_from(*hub, s.id, 0)).status, service::Status::running);
  for (int i = 0; i < 3; ++i) hub->step(s.id);
  const auto again = hub->submit_goal(s.id, goal_from(*hub, s.id, 2));
  EXPECT_EQ(again.step_count, 3);
  EXPECT_EQ(again.status, service::Status::running);
  const auto f = hub->step(s.id);  // the frame acted on
  EXPECT_EQ(f.step_index, 3);
  EXPECT_TRUE(f.diagnostics);
  EXPECT_TRUE(hub->frame(s.id, 3).diagnostics);
}

TEST(Hub, GoalValidation) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  const auto f = hub->latest(s.id);
  service::GoalSubmission g;
  g.frame_index = 0;
  g.mask_rle = square_mask(f.height / 2, f.width / 2, 3);
  EXPECT_THROW(hub->submit_goal(s.id, g), ValidationError);
  g.mask_rle = datagen::rle_to_text(world::Mask(f.height, f.width));
  EXPECT_THROW(hub->submit_goal(s.id, g), ValidationError);
  g.mask_rle = "3 3 1 2";
  EXPECT_THROW(hub->submit_goal(s.id, g), ValidationError);
  g = goal_from(*hub, s.id, 0);
  g.frame_index = 99;
  EXPECT_THROW(hub->submit_goal(s.id, g), NotFoundError);
  g.frame_index.reset();
  EXPECT_THROW(hub->submit_goal(s.id, g), ValidationError);
}

TEST(Hub, UploadedGoal) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  Image img(48, 40, 3, 90);
  const auto uid = hub->upload(s.id, encode_png(img));
  service::GoalSubmission g;
  g.upload_id = uid;
  g.mask_rle = square_mask(48, 40, 4);
  EXPECT_TRUE(hub->submit_goal(s.id, g).has_goal);
  g.upload_id = "u999";
  EXPECT_THROW(hub->submit_goal(s.id, g), NotFoundError);
  EXPECT_THROW(hub->upload(s.id, {1, 2, 3}), Error);
}

TEST(Hub, PauseResume) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  hub->tick();
  EXPECT_EQ(hub->info(s.id).step_count, 1);
  EXPECT_TRUE(hub->control(s.id, "pause").paused);
  hub->tick();
  hub->tick();
  EXPECT_EQ(hub->info(s.id).step_count, 1);
  hub->step(s.id);  // manual stepping ignores pause
  EXPECT_EQ(hub->info(s.id).step_count, 2);
  EXPECT_FALSE(hub->control(s.id, "resume").paused);
  hub->tick();
  EXPECT_EQ(hub->info(s.id).step_count, 3);
  EXPECT_THROW(hub->control(s.id, "jump"), ValidationError);
}

TEST(Hub, CloseRemovesTheSession) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  hub->control(s.id, "close");
  EXPECT_THROW(hub->info(s.id), NotFoundError);
  EXPECT_THROW(hub->close(s.id), NotFoundError);
  EXPECT_TRUE(hub->list().empty());
}

TEST(Hub, ResetReturnsToIdleAndFramesKeepCounting) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  const auto first = hub->latest(s.id);
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  hub->step(s.id);
  hub->step(s.id);
  const auto r = hub->control(s.id, "reset");
  EXPECT_EQ(r.status, service::Status::idle);
  EXPECT_FALSE(r.has_goal);
  EXPECT_EQ(r.step_count, 0);
  EXPECT_EQ(r.episode, 1);
  const auto f = hub->latest(s.id);
  EXPECT_EQ(f.frame_index, 3u);
  EXPECT_EQ(f.step_index, 0);
  EXPECT_EQ(f.rgb, first.rgb);  // same world, same spawn
}

TEST(Hub, FinishedRejectsStepsAndGoals) {
  auto c = config();
  c.max_episode_steps = 3;
  auto hub = make_hub(c);
  const auto s = hub->create_session(2, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  for (int i = 0; i < 3; ++i) hub->step(s.id);
  EXPECT_EQ(hub->info(s.id).status, service::Status::finished);
  EXPECT_THROW(hub->step(s.id), StateError);
  EXPECT_THROW(hub->submit_goal(s.id, goal_from(*hub, s.id, 0)), StateError);
  hub->tick();
  EXPECT_EQ(hub->info(s.id).step_count, 3);
  EXPECT_EQ(hub->control(s.id, "reset").status, service::Status::idle);
}

TEST(Hub, SessionsAreIsolated) {
  auto hub = make_hub();
  const auto a = hub->create_session(5, "tiny");
  const auto b = hub->create_session(5, "tiny");
  hub->submit_goal(a.id, goal_from(*hub, a.id, 0));
  hub->submit_goal(b.id, goal_from(*hub, b.id, 0));
  std::vector<service::FrameRecord> fa;
  for (int i = 0; i < 6; ++i) fa.push_back(hub->step(a.id));
  EXPECT_EQ(hub->info(b.id).step_count, 0);
  hub->control(a.id, "pause");
  for (int i = 0; i < 6; ++i) {
    const auto fb = hub->step(b.id);
    EXPECT_EQ(fb.rgb, fa[static_cast<std::size_t>(i)].rgb) << i;
  }
  hub->close(a.id);
  EXPECT_EQ(hub->info(b.id).step_count, 6);
}

TEST(Hub, HistoryIsBounded) {
  auto c = config();
  c.history_frames = 5;
  auto hub = make_hub(c);
  const auto s = hub->create_session(2, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  for (int i = 0; i < 9; ++i) hub->step(s.id);
  EXPECT_EQ(hub->history(s.id), (std::vector<std::uint64_t>{5, 6, 7, 8, 9}));
  EXPECT_THROW(hub->frame(s.id, 2), NotFoundError);
}

TEST(Hub, ResultsAreAppendedAsJsonLines) {
  auto c = config();
  c.results_path = ::testing::TempDir() + "/xview_results.jsonl";
  std::filesystem::remove(c.results_path);
  auto hub = make_hub(c);
  const auto s = hub->create_session(7, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  hub->step(s.id);
  hub->control(s.id, "reset");
  hub->close(s.id);
  std::ifstream in(c.results_path);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["steps"], 1);
  EXPECT_EQ(rows[0]["episode"], 0);
  EXPECT_EQ(rows[1]["episode"], 1);
  EXPECT_EQ(rows[1]["world_seed"], 7);
}

TEST(Hub, PausedSessionPublishesNothingUnderTicker) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  hub->control(s.id, "pause");
  const auto before = hub->latest(s.id).frame_index;
  hub->start_ticker();
  EXPECT_FALSE(hub->wait_frame(s.id, before, std::chrono::milliseconds(400)));
  EXPECT_EQ(hub->latest(s.id).frame_index, before);
  hub->control(s.id, "resume");
  const auto next = hub->wait_frame(s.id, before, std::chrono::seconds(10));
  hub->stop_ticker();
  ASSERT_TRUE(next);
  EXPECT_EQ(next->frame_index, before + 1);
}

TEST(Hub, InterleavedThreadsMatchSoloReplay) {
  // Two sessions on the same world driven concurrently with mixed requests
  // must see the same frames as a session driven alone.
  auto solo_hub = make_hub();
  const auto solo = solo_hub->create_session(5, "tiny");
  solo_hub->submit_goal(solo.id, goal_from(*solo_hub, solo.id, 0));
  std::vector<std::vector<std::uint8_t>> expected;
  for (int i = 0; i < 12; ++i) expected.push_back(solo_hub->step(solo.id).rgb);

  auto hub = make_hub();
  const auto a = hub->create_session(5, "tiny");
  const auto b = hub->create_session(5, "tiny");
  const auto noise = hub->create_session(9, "tiny");
  hub->submit_goal(a.id, goal_from(*hub, a.id, 0));
  hub->submit_goal(b.id, goal_from(*hub, b.id, 0));
  hub->submit_goal(noise.id, goal_from(*hub, noise.id, 0));
  hub->control(a.id, "pause");
  hub->control(b.id, "pause");
  hub->start_ticker();  // keeps advancing `noise` meanwhile

  auto drive = [&](const std::string& id, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::vector<std::vector<std::uint8_t>> got;
    while (got.size() < expected.size()) {
      switch (rng() % 4) {
        case 0: got.push_back(hub->step(id).rgb); break;
        case 1: hub->history(id); break;
        case 2: hub->info(id); hub->list(); break;
        default: hub->control(id, "pause"); break;
      }
    }
    return got;
  };
  std::vector<std::vector<std::uint8_t>> ga, gb;
  std::thread ta([&] { ga = drive(a.id, 1); });
  std::thread tb([&] { gb = drive(b.id, 2); });
  ta.join();
  tb.join();
  hub->stop_ticker();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(ga[i], expected[i]) << "a " << i;
    EXPECT_EQ(gb[i], expected[i]) << "b " << i;
  }
}

TEST(Hub, TickerAdvancesRunningSessions) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  hub->start_ticker();
  const auto f = hub->wait_frame(s.id, 2, std::chrono::seconds(10));
  hub->stop_ticker();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->frame_index, 3u);
}

TEST(Hub, WaitFrameWakesOnClose) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    hub->close(s.id);
  });
  EXPECT_THROW(hub->wait_frame(s.id, 0, std::chrono::seconds(10)), NotFoundError);
  closer.join();
}

TEST(Hub, OverlayIsAPng) {
  auto hub = make_hub();
  const auto s = hub->create_session(2, "tiny");
  EXPECT_THROW(hub->overlay(s.id, {1}), StateError);
  hub->submit_goal(s.id, goal_from(*hub, s.id, 0));
  const auto img = decode_png(hub->overlay(s.id, {1, 2}));
  const int size = small_model()->config().image_size;
  EXPECT_EQ(img.width, 2 * size * 4);
  EXPECT_EQ(img.height, size * 4);
  EXPECT_THROW(hub->overlay(s.id, {0}), RangeError);
}

TEST(Hub, BenchJobCompletes) {
  auto hub = make_hub();
  service::BenchJobRequest r;
  r.checkpoint = "tiny";
  r.episodes_per_task = 1;
  r.kinds = {world::ObjectKind::marker};
  const auto id = hub->submit_bench(r);
  service::BenchJob job;
  for (int i = 0; i < 600; ++i) {
    job = hub->bench_job(id);
    if (job.status == "done" || job.status == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  ASSERT_EQ(job.status, "done") << job.error;
  EXPECT_NE(job.table.find("policy"), std::string::npos);
  EXPECT_NE(job.table.find("random"), std::string::npos);
  EXPECT_THROW(hub->bench_job("j999"), NotFoundError);
}

TEST(Wire, ParseBind) {
  EXPECT_EQ(service::parse_bind("").port, 8080);
  EXPECT_EQ(service::parse_bind("0.0.0.0:9000").host, "0.0.0.0");
  EXPECT_EQ(service::parse_bind(":9001").port, 9001);
  EXPECT_EQ(service::parse_bind("9002").host, "127.0.0.1");
  EXPECT_THROW(service::parse_bind("host:abc"), ConfigError);
  EXPECT_THROW(service::parse_bind("host:70000"), ConfigError);
}

TEST(Wire, LandmarkList) {
  EXPECT_EQ(service::parse_landmarks("3,1,7"), (std::vector<int>{3, 1, 7}));
  EXPECT_THROW(service::parse_landmarks("3,x"), ValidationError);
}

TEST(Wire, StatusCodes) {
  EXPECT_EQ(service::http_status("not_found"), 404);
  EXPECT_EQ(service::http_status("validation"), 400);
  EXPECT_EQ(service::http_status("invalid_goal"), 400);
  EXPECT_EQ(service::http_status("state"), 409);
  EXPECT_EQ(service::http_status("io"), 500);
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    hub = make_hub();
    server = std::make_unique<service::Server>(*hub);
    server->stream_idle = std::chrono::seconds(5);
    port = server->start({"127.0.0.1", 0});
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  void TearDown() override {
    server->stop();
    hub->stop_ticker();
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& j, int expect) {
    auto r = client->Post(path, j.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return nlohmann::json::parse(r->body);
  }

  nlohmann::json get(const std::string& path, int expect = 200) {
    auto r = client->Get(path);
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return nlohmann::json::parse(r->body);
  }

  std::string start_session() {
    const auto s = post("/sessions", {{"world_seed", 2}, {"checkpoint", "tiny"}}, 201);
    const std::string id = s["session_id"];
    const auto f = get("/sessions/" + id + "/frame");
    post("/sessions/" + id + "/goal",
         {{"frame_index", 0}, {"mask", square_mask(f["height"], f["width"])}, {"event", "use"}}, 200);
    return id;
  }

  std::unique_ptr<SessionHub> hub;
  std::unique_ptr<service::Server> server;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

TEST_F(Http, SessionLifecycle) {
  EXPECT_TRUE(get("/health")["ok"]);
  EXPECT_EQ(get("/checkpoints")["checkpoints"], nlohmann::json::array({"tiny"}));
  const auto id = start_session();
  const auto info = get("/sessions/" + id);
  EXPECT_EQ(info["status"], "running");
  EXPECT_FALSE(info["created_at"].get<std::string>().empty());
  const auto step = post("/sessions/" + id + "/step", nlohmann::json::object(), 200);
  EXPECT_EQ(step["step_index"], 0);
  EXPECT_TRUE(step["diagnostics"].is_object());
  EXPECT_EQ(get("/sessions/" + id + "/frame", 200)["frame_index"], 1);
  EXPECT_TRUE(post("/sessions/" + id + "/control", {{"command", "pause"}}, 200)["paused"]);
  EXPECT_EQ(post("/sessions/" + id + "/control", {{"command", "reset"}}, 200)["status"], "idle");
  EXPECT_EQ(get("/sessions")["sessions"].size(), 1u);
  auto del = client->Delete("/sessions/" + id);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 200);
  EXPECT_EQ(get("/sessions/" + id, 404)["error"], "not_found");
}

TEST_F(Http, ErrorsMapToStatusCodes) {
  EXPECT_EQ(post("/sessions", {{"checkpoint", "nope"}}, 404)["error"], "not_found");
  EXPECT_EQ(post("/sessions", {{"world_seed", 1}}, 400)["error"], "validation");
  auto bad = client->Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  const auto s = post("/sessions", {{"world_seed", 2}, {"checkpoint", "tiny"}}, 201);
  const std::string id = s["session_id"];
  EXPECT_EQ(post("/sessions/" + id + "/step", nlohmann::json::object(), 409)["error"], "state");
  EXPECT_EQ(post("/sessions/" + id + "/goal", {{"frame_index", 0}, {"mask", "4 4 16"}}, 400)["error"], "validation");
  EXPECT_EQ(post("/sessions/" + id + "/goal", {{"frame_index", 0}, {"mask", square_mask(64, 64)}, {"event", "eat"}},
                 400)["error"],
            "validation");
  EXPECT_EQ(get("/sessions/" + id + "/overlay?landmarks=1", 409)["error"], "state");
}

TEST_F(Http, MaskEchoRoundTrips) {
  std::mt19937 rng(3);
  for (int t = 0; t < 20; ++t) {
    const int h = 1 + static_cast<int>(rng() % 40);
    const int w = 1 + static_cast<int>(rng() % 40);
    world::Mask m(h, w);
    for (auto& b : m.bits) b = (rng() % 3 == 0) ? 1 : 0;
    const auto text = datagen::rle_to_text(m);
    const auto j = post("/masks/echo", {{"mask", text}}, 200);
    EXPECT_EQ(j["mask"], text);
    const auto back = datagen::rle_from_text(j["mask"]);
    EXPECT_EQ(back.bits, m.bits);
    EXPECT_EQ(j["count"], m.count());
  }
}

TEST_F(Http, UploadAndFramePng) {
  const auto s = post("/sessions", {{"world_seed", 2}, {"checkpoint", "tiny"}}, 201);
  const std::string id = s["session_id"];
  auto png = client->Get("/sessions/" + id + "/frames/0.png");
  ASSERT_TRUE(png);
  ASSERT_EQ(png->status, 200);
  const auto img = decode_png(std::vector<std::uint8_t>(png->body.begin(), png->body.end()));
  EXPECT_EQ(img.data, hub->latest(id).rgb);
  auto up = client->Post("/sessions/" + id + "/uploads", png->body, "image/png");
  ASSERT_TRUE(up);
  ASSERT_EQ(up->status, 201);
  const std::string uid = nlohmann::json::parse(up->body)["upload_id"];
  post("/sessions/" + id + "/goal", {{"upload_id", uid}, {"mask", square_mask(img.height, img.width)}}, 200);
  auto overlay = client->Get("/sessions/" + id + "/overlay?landmarks=1,2");
  ASSERT_TRUE(overlay);
  EXPECT_EQ(overlay->status, 200);
  EXPECT_EQ(overlay->get_header_value("Content-Type"), "image/png");
  auto missing = client->Get("/sessions/" + id + "/frames/42.png");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST_F(Http, StreamIsOrderedAndCarriesDiagnostics) {
  const auto id = start_session();
  hub->start_ticker();
  auto r = client->Get("/sessions/" + id + "/stream?max_frames=12");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  std::istringstream in(r->body);
  std::string line;
  std::vector<nlohmann::json> msgs;
  while (std::getline(in, line)) msgs.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(msgs.size(), 12u);
  for (std::size_t i = 1; i < msgs.size(); ++i) {
    EXPECT_GT(msgs[i]["frame_index"], msgs[i - 1]["frame_index"]);
    EXPECT_GT(msgs[i]["step_index"], msgs[i - 1]["step_index"]);
  }
  int thumbs = 0;
  for (const auto& m : msgs) {
    const auto fi = m["frame_index"].get<std::uint64_t>();
    const auto png = base64_decode(m["frame_png"].get<std::string>());
    const auto img = decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
    EXPECT_EQ(img.width, m["width"]);
    EXPECT_EQ(m.contains("thumbnail_png"), fi % 8 == 0);
    thumbs += m.contains("thumbnail_png") ? 1 : 0;
    EXPECT_TRUE(m["history"].is_array());
    if (m["status"] == "running") {
      EXPECT_TRUE(m["diagnostics"].is_object()) << fi;
    }
  }
  EXPECT_GE(thumbs, 1);
}

TEST_F(Http, ReconnectResumesAtTheNewestFrame) {
  const auto id = start_session();
  for (int i = 0; i < 5; ++i) post("/sessions/" + id + "/step", nlohmann::json::object(), 200);
  hub->control(id, "pause");
  const auto newest = get("/sessions/" + id + "/frame")["frame_index"].get<std::uint64_t>();
  auto r = client->Get("/sessions/" + id + "/stream?max_frames=1");
  ASSERT_TRUE(r);
  const auto m = nlohmann::json::parse(r->body.substr(0, r->body.find('\n')));
  EXPECT_EQ(m["frame_index"], newest - 1);  // newest published: the last acted-on frame
  EXPECT_GT(m["frame_index"].get<std::uint64_t>(), 0u);
  auto again = client->Get("/sessions/" + id + "/stream?max_frames=1&after=2");
  ASSERT_TRUE(again);
  EXPECT_EQ(nlohmann::json::parse(again->body.substr(0, again->body.find('\n')))["frame_index"], 3);
}

TEST_F(Http, StreamStopsAtReset) {
  const auto id = start_session();
  for (int i = 0; i < 3; ++i) post("/sessions/" + id + "/step", nlohmann::json::object(), 200);
  std::thread resetter([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    hub->control(id, "reset");
  });
  auto r = client->Get("/sessions/" + id + "/stream?after=0");
  resetter.join();
  ASSERT_TRUE(r);
  std::istringstream in(r->body);
  std::string line;
  std::vector<nlohmann::json> msgs;
  while (std::getline(in, line)) msgs.push_back(nlohmann::json::parse(line));
  ASSERT_FALSE(msgs.empty());
  for (const auto& m : msgs) EXPECT_EQ(m["episode"], 0);
  for (std::size_t i = 1; i < msgs.size(); ++i) EXPECT_GT(msgs[i]["step_index"], msgs[i - 1]["step_index"]);
}

TEST_F(Http, StreamEndsOnClose) {
  const auto s = post("/sessions", {{"world_seed", 2}, {"checkpoint", "tiny"}}, 201);
  const std::string id = s["session_id"];
  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    hub->close(id);
  });
  auto r = client->Get("/sessions/" + id + "/stream");
  closer.join();
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(std::count(r->body.begin(), r->body.end(), '\n'), 1);  // the idle frame
  EXPECT_EQ(get("/sessions/" + id + "/stream", 404)["error"], "not_found");
}

TEST_F(Http, BenchJobOverHttp) {
  const auto j = post("/bench", {{"checkpoint", "tiny"}, {"episodes_per_task", 1}, {"kinds", {"marker"}}}, 202);
  const std::string id = j["job_id"];
  nlohmann::json status;
  for (int i = 0; i < 600; ++i) {
    status = get("/bench/" + id);
    if (status["status"] == "done" || status["status"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  EXPECT_EQ(status["status"], "done");
  EXPECT_TRUE(status.contains("jsonl"));
  EXPECT_EQ(get("/bench/nope", 404)["error"], "not_found");
}
