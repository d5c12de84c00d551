#pragma once

#include "xview/service/hub.hpp"

#include <httplib.h>

#include <cstdlib>

namespace xview::service {

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// "host:port", ":port" or "port".
inline BindAddress parse_bind(const std::string& text) {
  BindAddress b;
  if (text.empty()) return b;
  const auto colon = text.rfind(':');
  std::string port = text;
  if (colon != std::string::npos) {
    if (colon > 0) b.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    b.port = std::stoi(port, &used);
    if (used != port.size()) throw std::invalid_argument(port);
  } catch (const std::exception&) {
    throw ConfigError("bad bind address '" + text + "'");
  }
  if (b.port < 0 || b.port > 65535) throw ConfigError("port out of range in '" + text + "'");
  return b;
}

/// XVIEW_BIND, falling back to 127.0.0.1:8080.
inline BindAddress bind_from_env() {
  const char* v = std::getenv("XVIEW_BIND");
  return parse_bind(v ? v : "");
}

inline int http_status(std::string_view kind) {
  if (kind == "not_found") return 404;
  if (kind == "validation" || kind == "invalid_goal" || kind == "range" || kind == "mapping" || kind == "config") {
    return 400;
  }
  if (kind == "state" || kind == "protocol") return 409;
  if (kind == "capability") return 501;
  return 500;
}

inline std::string base64(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

/// Wire form of one frame (see docs/wire_format.md).
inline nlohmann::json frame_message(const SessionHub& hub, const std::string& session_id, const FrameRecord& f,
                                    const std::vector<std::uint64_t>& history) {
  Image img(f.height, f.width, 3);
  img.data = f.rgb;
  nlohmann::json j{{"session_id", session_id},
                   {"frame_index", f.frame_index},
                   {"episode", f.episode},
                   {"step_index", f.step_index},
                   {"status", std::string(to_string(f.status))},
                   {"height", f.height},
                   {"width", f.width},
                   {"frame_png", base64(encode_png(img))},
                   {"history", history}};
  if (f.diagnostics) {
    const auto& d = *f.diagnostics;
    j["diagnostics"] = {{"centroid_cell", d.centroid_cell},
                        {"centroid_pixel", {d.centroid_pixel.row, d.centroid_pixel.col}},
                        {"visibility_prob", d.visibility_prob},
                        {"goal_refreshed", d.goal_refreshed}};
  } else {
    j["diagnostics"] = nullptr;
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : f.events) {
    events.push_back({{"step_index", e.step_index}, {"kind", std::string(world::to_string(e.kind))},
                      {"instance_id", e.instance_id}});
  }
  j["events"] = events;
  if (hub.is_thumbnail(f.frame_index)) j["thumbnail_png"] = base64(hub.thumbnail_png(f));
  return j;
}

inline std::vector<int> parse_landmarks(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad landmark index '" + item + "'");
    }
  }
  return out;
}

class Server {
 public:
  explicit Server(SessionHub& hub) : hub_(hub) { routes(); }
  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const BindAddress& addr) {
    int port = addr.port;
    if (port == 0) {
      port = http_.bind_to_any_port(addr.host);
    } else if (!http_.bind_to_port(addr.host, port)) {
      port = -1;
    }
    if (port < 0) throw IoError("cannot bind " + addr.host + ":" + std::to_string(addr.port));
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    return port;
  }

  /// Serves on the calling thread until stop().
  void run(const BindAddress& addr) {
    if (!http_.listen(addr.host, addr.port)) throw IoError("cannot listen on " + addr.host + ":" + std::to_string(addr.port));
  }

  void stop() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

  /// Longest a stream waits for the next frame before closing.
  std::chrono::milliseconds stream_idle = std::chrono::seconds(30);

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static void json_reply(Res& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static nlohmann::json body(const Req& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw ValidationError("request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
  }

  template <typename T>
  static T field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    try {
      return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(std::string("field '") + key + "' has the wrong type");
    }
  }

  template <typename F>
  httplib::Server::Handler guard(F&& f) {
    return [f = std::forward<F>(f)](const Req& req, Res& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        json_reply(res, {{"error", std::string(e.kind())}, {"message", e.what()}}, http_status(e.kind()));
      } catch (const std::exception& e) {
        json_reply(res, {{"error", "internal"}, {"message", e.what()}}, 500);
      }
    };
  }

  void routes() {
    http_.Get("/health", guard([](const Req&, Res& res) { json_reply(res, {{"ok", true}}); }));

    http_.Get("/checkpoints", guard([this](const Req&, Res& res) {
      json_reply(res, {{"checkpoints", hub_.checkpoints().ids()}});
    }));

    http_.Post("/sessions", guard([this](const Req& req, Res& res) {
      const auto j = body(req);
      const auto info = hub_.create_session(j.value("world_seed", std::uint64_t{0}), field<std::string>(j, "checkpoint"));
      json_reply(res, to_json(info), 201);
    }));

    http_.Get("/sessions", guard([this](const Req&, Res& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& s : hub_.list()) out.push_back(to_json(s));
      json_reply(res, {{"sessions", out}});
    }));

    http_.Get(R"(/sessions/([^/]+))", guard([this](const Req& req, Res& res) {
      json_reply(res, to_json(hub_.info(req.matches[1])));
    }));

    http_.Delete(R"(/sessions/([^/]+))", guard([this](const Req& req, Res& res) {
      hub_.close(req.matches[1]);
      json_reply(res, {{"closed", std::string(req.matches[1])}});
    }));

    http_.Post(R"(/sessions/([^/]+)/uploads)", guard([this](const Req& req, Res& res) {
      const auto id = hub_.upload(req.matches[1], std::vector<std::uint8_t>(req.body.begin(), req.body.end()));
      json_reply(res, {{"upload_id", id}}, 201);
    }));

    http_.Post(R"(/sessions/([^/]+)/goal)", guard([this](const Req& req, Res& res) {
      const auto j = body(req);
      GoalSubmission g;
      if (j.contains("frame_index")) g.frame_index = field<std::uint64_t>(j, "frame_index");
      if (j.contains("upload_id")) g.upload_id = field<std::string>(j, "upload_id");
      g.mask_rle = field<std::string>(j, "mask");
      if (j.contains("event")) {
        const auto name = field<std::string>(j, "event");
        try {
          g.event = world::event_kind_from(name);
        } catch (const Error&) {
          throw ValidationError("unknown event '" + name + "'");
        }
      }
      json_reply(res, to_json(hub_.submit_goal(req.matches[1], g)));
    }));

    http_.Post(R"(/sessions/([^/]+)/control)", guard([this](const Req& req, Res& res) {
      const auto j = body(req);
      json_reply(res, to_json(hub_.control(req.matches[1], field<std::string>(j, "command"))));
    }));

    http_.Post(R"(/sessions/([^/]+)/step)", guard([this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      const auto f = hub_.step(id);
      json_reply(res, frame_message(hub_, id, f, hub_.history(id)));
    }));

    http_.Get(R"(/sessions/([^/]+)/frame)", guard([this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      json_reply(res, frame_message(hub_, id, hub_.latest(id), hub_.history(id)));
    }));

    http_.Get(R"(/sessions/([^/]+)/frames/(\d+)\.png)", guard([this](const Req& req, Res& res) {
      const auto f = hub_.frame(req.matches[1], std::stoull(req.matches[2]));
      Image img(f.height, f.width, 3);
      img.data = f.rgb;
      const auto png = encode_png(img);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    http_.Get(R"(/sessions/([^/]+)/history)", guard([this](const Req& req, Res& res) {
      const auto frames = hub_.history(req.matches[1]);
      std::vector<std::uint64_t> thumbs;
      for (auto i : frames)
        if (hub_.is_thumbnail(i)) thumbs.push_back(i);
      json_reply(res, {{"frames", frames}, {"thumbnails", thumbs}});
    }));

    http_.Get(R"(/sessions/([^/]+)/overlay)", guard([this](const Req& req, Res& res) {
      if (!req.has_param("landmarks")) throw ValidationError("missing query parameter 'landmarks'");
      const auto png = hub_.overlay(req.matches[1], parse_landmarks(req.get_param_value("landmarks")));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    // Decodes and re-encodes a mask; lets clients check their RLE encoder.
    http_.Post("/masks/echo", guard([](const Req& req, Res& res) {
      const auto j = body(req);
      const auto m = datagen::rle_from_text(field<std::string>(j, "mask"));
      json_reply(res, {{"mask", datagen::rle_to_text(m)}, {"height", m.height}, {"width", m.width},
                       {"count", m.count()}});
    }));

    // Newline-delimited frame messages, starting at the newest frame (or the
    // first one after `after`). Ends after `max_frames` messages, at the end
    // of the episode, on close, or when idle too long.
    http_.Get(R"(/sessions/([^/]+)/stream)", guard([this](const Req& req, Res& res) {
      const std::string id = req.matches[1];
      hub_.info(id);  // 404 before the stream starts
      std::optional<std::uint64_t> after;
      if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
      long long max_frames = -1;
      if (req.has_param("max_frames")) max_frames = std::stoll(req.get_param_value("max_frames"));
      res.set_chunked_content_provider(
          "application/x-ndjson",
          [this, id, after, max_frames, sent = 0LL, episode = -1](std::size_t, httplib::DataSink& sink) mutable {
            if (max_frames >= 0 && sent >= max_frames) {
              sink.done();
              return true;
            }
            std::optional<FrameRecord> f;
            try {
              f = hub_.wait_frame(id, after, stream_idle);
            } catch (const Error&) {
              sink.done();
              return true;
            }
            if (!f) {
              sink.done();
              return true;
            }
            // A reset starts a new episode; end here so step_index never goes back.
            if (episode >= 0 && f->episode != episode) {
              sink.done();
              return true;
            }
            episode = f->episode;
            after = f->frame_index;
            ++sent;
            const auto line = frame_message(hub_, id, *f, hub_.history(id)).dump() + "\n";
            return sink.write(line.data(), line.size());
          });
    }));

    http_.Post("/bench", guard([this](const Req& req, Res& res) {
      const auto j = body(req);
      BenchJobRequest r;
      r.checkpoint = field<std::string>(j, "checkpoint");
      r.episodes_per_task = j.value("episodes_per_task", r.episodes_per_task);
      r.seed = j.value("seed", r.seed);
      if (j.contains("kinds")) {
        for (const auto& k : field<std::vector<std::string>>(j, "kinds")) r.kinds.push_back(bench::kind_from(k));
      }
      json_reply(res, {{"job_id", hub_.submit_bench(r)}}, 202);
    }));

    http_.Get(R"(/bench/([^/]+))", guard([this](const Req& req, Res& res) {
      const auto job = hub_.bench_job(req.matches[1]);
      nlohmann::json j{{"job_id", job.id}, {"status", job.status}};
      if (!job.error.empty()) j["error"] = job.error;
      if (job.status == "done") {
        j["table"] = job.table;
        j["jsonl"] = job.jsonl;
      }
      json_reply(res, j);
    }));
  }

  SessionHub& hub_;
  httplib::Server http_;
  std::thread thread_;
};

}  // namespace xview::service
