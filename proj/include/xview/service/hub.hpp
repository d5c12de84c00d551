#pragma once

#include "xview/bench/matrix.hpp"
#include "xview/datagen/rle.hpp"
#include "xview/image.hpp"
#include "xview/introspect/landmarks.hpp"
#include "xview/policy/checkpoint.hpp"
#include "xview/runtime/session.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <thread>

namespace xview::service {

struct ServiceConfig {
  std::string checkpoint_dir = "checkpoints";
  double tick_hz = 10.0;
  int history_frames = 256;
  int thumbnail_every = 8;
  int thumbnail_size = 32;
  int max_episode_steps = 512;
  int max_uploads = 16;
  std::string results_path;  // JSON lines, one per closed or finished episode; empty = off

  void validate() const {
    if (!(tick_hz > 0.0)) throw ConfigError("tick_hz must be positive");
    if (history_frames < 1 || thumbnail_every < 1 || thumbnail_size < 8) throw ConfigError("history settings out of range");
    if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be >= 1");
  }
};

inline ServiceConfig service_config_from_json(const nlohmann::json& j) {
  ServiceConfig c;
  try {
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    c.tick_hz = j.value("tick_hz", c.tick_hz);
    c.history_frames = j.value("history_frames", c.history_frames);
    c.thumbnail_every = j.value("thumbnail_every", c.thumbnail_every);
    c.thumbnail_size = j.value("thumbnail_size", c.thumbnail_size);
    c.max_episode_steps = j.value("max_episode_steps", c.max_episode_steps);
    c.max_uploads = j.value("max_uploads", c.max_uploads);
    c.results_path = j.value("results_path", c.results_path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open service config " + path);
  try {
    return service_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("service config parse error: ") + e.what());
  }
}

/// Checkpoints are `<dir>/<id>.ckpt`; models can also be registered in memory.
class CheckpointStore {
 public:
  using Model = std::shared_ptr<const policy::Policy<float>>;

  explicit CheckpointStore(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& id, Model model) {
    std::lock_guard lock(mu_);
    loaded_[id] = std::move(model);
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mu_);
    std::set<std::string> out;
    for (const auto& [id, m] : loaded_) out.insert(id);
    std::error_code ec;
    if (std::filesystem::is_directory(dir_, ec)) {
      for (const auto& e : std::filesystem::directory_iterator(dir_, ec)) {
        if (e.path().extension() == ".ckpt") out.insert(e.path().stem().string());
      }
    }
    return {out.begin(), out.end()};
  }

  Model load(const std::string& id) {
    std::lock_guard lock(mu_);
    if (auto it = loaded_.find(id); it != loaded_.end()) return it->second;
    if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
      throw NotFoundError("unknown checkpoint '" + id + "'");
    }
    const auto path = std::filesystem::path(dir_) / (id + ".ckpt");
    if (!std::filesystem::exists(path)) throw NotFoundError("unknown checkpoint '" + id + "'");
    Model m(policy::load_checkpoint<float>(path.string()).model);
    loaded_[id] = m;
    return m;
  }

 private:
  std::string dir_;
  mutable std::mutex mu_;
  std::map<std::string, Model> loaded_;
};

enum class Status : std::uint8_t { idle, running, finished };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::idle: return "idle";
    case Status::running: return "running";
    case Status::finished: return "finished";
  }
  return "?";
}

/// One emitted frame. `frame_index` increases across resets; `step_index`
/// restarts with each episode.
struct FrameRecord {
  std::uint64_t frame_index = 0;
  int episode = 0;
  int step_index = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
  Status status = Status::idle;
  std::optional<runtime::Diagnostics> diagnostics;
  std::vector<world::InteractionEvent> events;  // caused by the action taken on this frame
  // Running frames are published once the policy has acted on them, so
  // every streamed running frame carries diagnostics.
  bool published = false;
};

struct SessionInfo {
  std::string id;
  Status status = Status::idle;
  std::string created_at;
  std::uint64_t world_seed = 0;
  std::string checkpoint;
  int episode = 0;
  int step_count = 0;
  bool paused = false;
  bool has_goal = false;
};

inline nlohmann::json to_json(const SessionInfo& s) {
  return {{"session_id", s.id},         {"status", std::string(to_string(s.status))},
          {"created_at", s.created_at}, {"world_seed", s.world_seed},
          {"checkpoint", s.checkpoint}, {"episode", s.episode},
          {"step_count", s.step_count}, {"paused", s.paused},
          {"has_goal", s.has_goal}};
}

/// A goal picked from the frame history or from an uploaded image.
struct GoalSubmission {
  std::optional<std::uint64_t> frame_index;
  std::optional<std::string> upload_id;
  std::string mask_rle;  // "H W r0 r1 ..."
  world::EventKind event = world::EventKind::use;
};

struct BenchJobRequest {
  std::string checkpoint;
  int episodes_per_task = 4;
  std::uint64_t seed = 0;
  std::vector<world::ObjectKind> kinds;  // empty = all
};

struct BenchJob {
  std::string id;
  std::string status = "queued";  // queued, running, done, failed
  std::string error;
  std::string table;
  std::string jsonl;
};

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// A mirrored world with a twin pair, the same generator the benchmark uses.
inline bench::TaskInstance session_world(std::uint64_t seed) {
  const auto suite = bench::build_task_suite();
  return bench::instantiate(suite[seed % suite.size()], seed);
}

}  // namespace detail

class SessionHub {
 public:
  explicit SessionHub(ServiceConfig config)
      : config_(std::move(config)), store_(config_.checkpoint_dir) {
    config_.validate();
  }
  ~SessionHub() {
    stop_ticker();
    std::vector<std::thread> jobs;
    {
      std::lock_guard lock(jobs_mu_);
      jobs.swap(job_threads_);
    }
    for (auto& t : jobs) t.join();
  }
  SessionHub(const SessionHub&) = delete;
  SessionHub& operator=(const SessionHub&) = delete;

  CheckpointStore& checkpoints() { return store_; }
  const ServiceConfig& config() const { return config_; }

  SessionInfo create_session(std::uint64_t world_seed, const std::string& checkpoint_id) {
    auto model = store_.load(checkpoint_id);
    auto s = std::make_shared<Session>();
    s->world_seed = world_seed;
    s->checkpoint = checkpoint_id;
    s->created_at = detail::utc_now();
    s->agent = std::make_unique<runtime::AgentSession>(model, runtime::SessionOptions{std::nullopt, {}, world_seed});
    {
      std::lock_guard lock(mu_);
      s->id = "s" + std::to_string(++next_session_);
      sessions_[s->id] = s;
    }
    std::lock_guard lock(s->mu);
    start_episode(*s);
    return info_locked(*s);
  }

  std::vector<SessionInfo> list() {
    std::vector<SessionInfo> out;
    for (auto& s : all()) {
      std::lock_guard lock(s->mu);
      out.push_back(info_locked(*s));
    }
    return out;
  }

  SessionInfo info(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    return info_locked(*s);
  }

  void close(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
      s = it->second;
      sessions_.erase(it);
    }
    std::lock_guard lock(s->mu);
    if (s->status != Status::finished) write_result(*s);
    s->closed = true;
    s->cv.notify_all();
  }

  /// Stores an uploaded PNG as a candidate goal view.
  std::string upload(const std::string& id, const std::vector<std::uint8_t>& png) {
    auto s = get(id);
    auto img = decode_png(png);
    if (img.channels == 1) {
      Image rgb(img.height, img.width, 3);
      for (std::size_t i = 0; i < img.data.size(); ++i)
        for (int c = 0; c < 3; ++c) rgb.data[i * 3 + static_cast<std::size_t>(c)] = img.data[i];
      img = std::move(rgb);
    }
    if (img.channels != 3) throw ValidationError("uploaded image must be RGB or grey");
    std::lock_guard lock(s->mu);
    const auto uid = "u" + std::to_string(++s->next_upload);
    s->uploads.emplace_back(uid, std::move(img));
    while (static_cast<int>(s->uploads.size()) > config_.max_uploads) s->uploads.pop_front();
    return uid;
  }

  /// Installs a goal; the session starts (or keeps) running.
  SessionInfo submit_goal(const std::string& id, const GoalSubmission& g) {
    auto s = get(id);
    const auto mask = datagen::rle_from_text(g.mask_rle);
    std::lock_guard lock(s->mu);
    if (s->status == Status::finished) throw StateError("session has finished; reset it first");
    policy::GoalSpec goal;
    if (g.frame_index.has_value() == g.upload_id.has_value()) {
      throw ValidationError("give exactly one of frame_index and upload_id");
    }
    if (g.frame_index) {
      const auto* f = find_frame(*s, *g.frame_index);
      if (f == nullptr) throw NotFoundError("frame " + std::to_string(*g.frame_index) + " is not in the history");
      goal = {f->height, f->width, f->rgb, {}, g.event};
    } else {
      auto it = std::find_if(s->uploads.begin(), s->uploads.end(), [&](const auto& u) { return u.first == *g.upload_id; });
      if (it == s->uploads.end()) throw NotFoundError("unknown upload '" + *g.upload_id + "'");
      goal = {it->second.height, it->second.width, it->second.data, {}, g.event};
    }
    if (mask.height != goal.height || mask.width != goal.width) {
      throw ValidationError("mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                            " but the goal view is " + std::to_string(goal.height) + "x" + std::to_string(goal.width));
    }
    if (mask.empty()) throw ValidationError("goal mask is empty");
    goal.goal_mask = mask;
    s->agent->set_goal(goal);
    s->status = Status::running;
    return info_locked(*s);
  }

  /// pause, resume, reset or close.
  SessionInfo control(const std::string& id, const std::string& command) {
    if (command == "close") {
      auto s = get(id);
      SessionInfo out;
      {
        std::lock_guard lock(s->mu);
        out = info_locked(*s);
      }
      close(id);
      return out;
    }
    auto s = get(id);
    std::lock_guard lock(s->mu);
    if (command == "pause") {
      s->paused = true;
    } else if (command == "resume") {
      s->paused = false;
    } else if (command == "reset") {
      if (s->status != Status::finished) write_result(*s);
      s->agent->reset();
      ++s->episode;
      start_episode(*s);
    } else {
      throw ValidationError("unknown command '" + command + "' (expected pause, resume, reset or close)");
    }
    return info_locked(*s);
  }

  /// One step now, regardless of pause; for debugging.
  FrameRecord step(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    if (s->status == Status::finished) throw StateError("session has finished; reset it first");
    if (s->status == Status::idle) throw StateError("no goal yet; submit one first");
    return advance(*s);
  }

  /// Advances every running, unpaused session by one step.
  void tick() {
    for (auto& s : all()) {
      std::lock_guard lock(s->mu);
      if (s->closed || s->paused || s->status != Status::running) continue;
      advance(*s);
    }
  }

  FrameRecord latest(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    return s->history.back();
  }

  FrameRecord frame(const std::string& id, std::uint64_t frame_index) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    const auto* f = find_frame(*s, frame_index);
    if (f == nullptr) throw NotFoundError("frame " + std::to_string(frame_index) + " is not in the history");
    return *f;
  }

  /// Frame indices retained for goal selection, oldest first.
  std::vector<std::uint64_t> history(const std::string& id) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    std::vector<std::uint64_t> out;
    for (const auto& f : s->history) out.push_back(f.frame_index);
    return out;
  }

  bool is_thumbnail(std::uint64_t frame_index) const {
    return frame_index % static_cast<std::uint64_t>(config_.thumbnail_every) == 0;
  }

  std::vector<std::uint8_t> thumbnail_png(const FrameRecord& f) const {
    Image img(f.height, f.width, 3);
    img.data = f.rgb;
    const int w = config_.thumbnail_size;
    const int h = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * f.height / f.width)));
    return encode_png(resize_bilinear(img, h, w));
  }

  /// The first published frame newer than `after` (the newest published one
  /// when nullopt); nullopt on timeout. Throws NotFoundError once the
  /// session is closed.
  std::optional<FrameRecord> wait_frame(const std::string& id, std::optional<std::uint64_t> after,
                                        std::chrono::milliseconds timeout) {
    auto s = get(id);
    std::unique_lock lock(s->mu);
    auto pick = [&]() -> const FrameRecord* {
      if (!after) {
        for (auto it = s->history.rbegin(); it != s->history.rend(); ++it)
          if (it->published) return &*it;
        return nullptr;
      }
      for (const auto& f : s->history)
        if (f.published && f.frame_index > *after) return &f;
      return nullptr;
    };
    if (!s->cv.wait_for(lock, timeout, [&] { return s->closed || pick() != nullptr; })) return std::nullopt;
    if (s->closed) throw NotFoundError("session '" + id + "' was closed");
    return *pick();
  }

  /// Landmark overlay for the latest frame against the current goal.
  std::vector<std::uint8_t> overlay(const std::string& id, const std::vector<int>& landmarks) {
    auto s = get(id);
    std::lock_guard lock(s->mu);
    const auto& goal = s->agent->goal();
    if (!goal) throw StateError("no goal yet; submit one first");
    const auto& model = s->agent->model();
    const auto& cfg = model.config();
    const auto& f = s->history.back();
    world::Observation obs;
    obs.height = f.height;
    obs.width = f.width;
    obs.rgb = f.rgb;
    const auto lm = introspect::make_landmarks(landmarks, cfg.tokens(), &goal->goal_mask, cfg.patch_size);
    const auto att = introspect::extract_attention(model, obs, *goal);
    const auto m = introspect::landmark_response(att, lm);
    const auto current = runtime::to_policy_rgb(f.rgb, f.height, f.width, cfg.image_size);
    return encode_png(introspect::render_overlay(m, goal->goal_view, lm, current, cfg.image_size, cfg.patch_size));
  }

  std::string submit_bench(const BenchJobRequest& req) {
    auto model = store_.load(req.checkpoint);
    if (req.episodes_per_task < 1) throw ValidationError("episodes_per_task must be >= 1");
    auto job = std::make_shared<BenchJob>();
    std::lock_guard lock(jobs_mu_);
    job->id = "j" + std::to_string(++next_job_);
    jobs_[job->id] = job;
    job_threads_.emplace_back([this, job, model, req] {
      set_job(*job, [](BenchJob& j) { j.status = "running"; });
      try {
        bench::SuiteConfig sc;
        sc.seed = req.seed;
        if (!req.kinds.empty()) sc.kinds = req.kinds;
        bench::MatrixOptions opt;
        opt.episodes_per_task = req.episodes_per_task;
        opt.seed = req.seed;
        std::vector<std::pair<std::string, bench::AgentFactory>> variants{
            {"policy", [model, seed = req.seed]() -> std::unique_ptr<bench::Agent> {
               return std::make_unique<bench::PolicyAgent>(model, runtime::benchmark_options(seed));
             }},
            {"random", [seed = req.seed, bins = model->config().turn_bins]() -> std::unique_ptr<bench::Agent> {
               return std::make_unique<bench::RandomAgent>(seed ^ 0x5EEDull, bins);
             }}};
        const auto t = bench::run_matrix(bench::build_task_suite(sc), variants, opt);
        set_job(*job, [&](BenchJob& j) {
          j.table = bench::format_table(t);
          j.jsonl = bench::format_jsonl(t);
          j.status = "done";
        });
      } catch (const std::exception& e) {
        set_job(*job, [&](BenchJob& j) {
          j.error = e.what();
          j.status = "failed";
        });
      }
    });
    return job->id;
  }

  BenchJob bench_job(const std::string& id) {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw NotFoundError("unknown job '" + id + "'");
    return *it->second;
  }

  /// Background stepping at `tick_hz`.
  void start_ticker() {
    std::lock_guard lock(ticker_mu_);
    if (ticker_.joinable()) return;
    stop_ = false;
    ticker_ = std::thread([this] {
      const auto period = std::chrono::duration<double>(1.0 / config_.tick_hz);
      auto next = std::chrono::steady_clock::now();
      std::unique_lock lock(ticker_mu_);
      while (!stop_) {
        lock.unlock();
        tick();
        lock.lock();
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        ticker_cv_.wait_until(lock, next, [this] { return stop_; });
      }
    });
  }

  void stop_ticker() {
    std::thread t;
    {
      std::lock_guard lock(ticker_mu_);
      stop_ = true;
      t.swap(ticker_);
    }
    ticker_cv_.notify_all();
    if (t.joinable()) t.join();
  }

 private:
  struct Session {
    std::mutex mu;
    std::condition_variable cv;
    std::string id;
    std::string checkpoint;
    std::string created_at;
    std::uint64_t world_seed = 0;
    Status status = Status::idle;
    bool paused = false;
    bool closed = false;
    int episode = 0;
    std::unique_ptr<runtime::AgentSession> agent;
    std::optional<world::EpisodeState> state;
    std::deque<FrameRecord> history;
    std::uint64_t next_frame = 0;
    std::vector<world::InteractionEvent> episode_events;
    std::deque<std::pair<std::string, Image>> uploads;
    int next_upload = 0;
  };

  std::shared_ptr<Session> get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
  }

  std::vector<std::shared_ptr<Session>> all() {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

  SessionInfo info_locked(const Session& s) const {
    return {s.id,         s.status,  s.created_at,           s.world_seed, s.checkpoint,
            s.episode,    s.state ? s.state->step_index : 0, s.paused,     s.agent->goal().has_value()};
  }

  void start_episode(Session& s) {
    const auto inst = detail::session_world(s.world_seed);
    s.state = world::start_episode(inst.world, inst.spawn, config_.max_episode_steps);
    s.status = Status::idle;
    s.episode_events.clear();
    push_frame(s, s.state->observe());
  }

  void push_frame(Session& s, const world::Observation& obs) {
    FrameRecord f;
    f.frame_index = s.next_frame++;
    f.episode = s.episode;
    f.step_index = obs.step_index;
    f.height = obs.height;
    f.width = obs.width;
    f.rgb = obs.rgb;
    f.status = s.status;
    f.published = s.status != Status::running;
    s.history.push_back(std::move(f));
    while (static_cast<int>(s.history.size()) > config_.history_frames) s.history.pop_front();
    s.cv.notify_all();
  }

  /// Acts on the newest frame, records its diagnostics, steps the world and
  /// appends the next frame. Returns the frame that was acted on.
  FrameRecord advance(Session& s) {
    auto& cur = s.history.back();
    world::Observation obs;
    obs.height = cur.height;
    obs.width = cur.width;
    obs.rgb = cur.rgb;
    obs.step_index = cur.step_index;
    const auto r = s.agent->act(obs);
    cur.diagnostics = r.diagnostics;
    cur.status = Status::running;
    cur.published = true;
    auto step = world::step(*s.state, r.action);
    cur.events = step.events;
    s.episode_events.insert(s.episode_events.end(), step.events.begin(), step.events.end());
    if (step.done) s.status = Status::finished;
    auto acted = cur;
    push_frame(s, step.observation);
    if (s.status == Status::finished) write_result(s);
    return acted;
  }

  static const FrameRecord* find_frame(const Session& s, std::uint64_t frame_index) {
    for (const auto& f : s.history)
      if (f.frame_index == frame_index) return &f;
    return nullptr;
  }

  void write_result(const Session& s) {
    if (config_.results_path.empty()) return;
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : s.episode_events) {
      events.push_back({{"step_index", e.step_index}, {"kind", std::string(world::to_string(e.kind))},
                        {"instance_id", e.instance_id}});
    }
    nlohmann::json j{{"session_id", s.id},
                     {"episode", s.episode},
                     {"world_seed", s.world_seed},
                     {"checkpoint", s.checkpoint},
                     {"steps", s.state ? s.state->step_index : 0},
                     {"finished", s.status == Status::finished},
                     {"events", events}};
    std::lock_guard lock(results_mu_);
    std::ofstream out(config_.results_path, std::ios::app);
    out << j.dump() << "\n";
  }

  template <typename F>
  void set_job(BenchJob& j, F&& f) {
    std::lock_guard lock(jobs_mu_);
    f(j);
  }

  ServiceConfig config_;
  CheckpointStore store_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 0;

  std::mutex jobs_mu_;
  std::map<std::string, std::shared_ptr<BenchJob>> jobs_;
  std::vector<std::thread> job_threads_;
  std::uint64_t next_job_ = 0;

  std::mutex results_mu_;

  std::mutex ticker_mu_;
  std::condition_variable ticker_cv_;
  std::thread ticker_;
  bool stop_ = false;
};

}  // namespace xview::service
