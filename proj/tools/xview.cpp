#include "xview/bench/ablation.hpp"
#include "xview/datagen/shard.hpp"
#include "xview/introspect/landmarks.hpp"
#include "xview/service/server.hpp"
#include "xview/transfer/zeroshot.hpp"
#include "xview/world/export.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>

using namespace xview;

namespace {

using ModelPtr = std::shared_ptr<const policy::Policy<float>>;

ModelPtr load_model(const std::string& path) { return ModelPtr(policy::load_checkpoint<float>(path).model); }

policy::ModelConfig preset(const std::string& name) {
  if (name == "desk") return policy::desk_config();
  if (name == "bench") return policy::bench_config();
  if (name == "mini") return policy::mini_config();
  if (name == "paper") return policy::paper_config();
  throw ConfigError("unknown preset '" + name + "' (desk, bench, mini, paper)");
}

const bench::BenchTask& find_task(const std::vector<bench::BenchTask>& suite, const std::string& id) {
  for (const auto& t : suite)
    if (t.task_id == id) return t;
  std::string known;
  for (const auto& t : suite) known += " " + t.task_id;
  throw NotFoundError("unknown task '" + id + "'; known:" + known);
}

// Writes every observation the wrapped agent sees.
class FrameDumper final : public bench::Agent {
 public:
  FrameDumper(std::unique_ptr<bench::Agent> inner, std::string dir) : inner_(std::move(inner)), dir_(std::move(dir)) {}
  void begin(const bench::EpisodeSetup& setup) override {
    Image g(setup.goal.height, setup.goal.width, 3);
    g.data = setup.goal.goal_view;
    write_png(dir_ + "/goal.png", g);
    inner_->begin(setup);
  }
  world::Action act(const world::Observation& obs, const world::EpisodeState& state) override {
    char name[32];
    std::snprintf(name, sizeof name, "/frame_%04d.png", obs.step_index);
    write_png(dir_ + name, world::rgb_image(obs));
    return inner_->act(obs, state);
  }
  std::optional<runtime::Diagnostics> diagnostics() const override { return inner_->diagnostics(); }

 private:
  std::unique_ptr<bench::Agent> inner_;
  std::string dir_;
};

std::vector<world::ObjectKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<world::ObjectKind> out;
  for (const auto& n : names) out.push_back(bench::kind_from(n));
  return out;
}

std::atomic<bool> g_stop{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xview: cross-view goal-conditioned visuomotor policy"};
  app.require_subcommand(1);

  // datagen
  auto* dg = app.add_subcommand("datagen", "generate expert trajectories and write a dataset shard");
  datagen::CorpusOptions corpus;
  std::string dg_out;
  dg->add_option("--seed", corpus.seed, "corpus seed");
  dg->add_option("--episodes", corpus.episodes, "number of episodes")->check(CLI::PositiveNumber);
  dg->add_option("--max-tasks", corpus.max_tasks, "tasks per episode");
  dg->add_option("--out", dg_out, "shard path")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a policy on dataset shards");
  std::vector<std::string> tr_shards;
  std::string tr_preset = "bench", tr_config, tr_out, tr_log, tr_ablation = "full";
  training::TrainConfig tc;
  tr->add_option("--shards", tr_shards, "input shards")->required()->check(CLI::ExistingFile);
  tr->add_option("--preset", tr_preset, "model preset: desk, bench, mini, paper");
  tr->add_option("--config", tr_config, "model config JSON (overrides --preset)")->check(CLI::ExistingFile);
  tr->add_option("--steps", tc.max_steps, "optimiser steps");
  tr->add_option("--lr", tc.learning_rate, "learning rate");
  tr->add_option("--batch", tc.batch_size, "concurrent clips per step");
  tr->add_option("--chunk", tc.chunk_length, "frames per chunk");
  tr->add_option("--seed", tc.seed, "batch order seed");
  tr->add_option("--ablation", tr_ablation, "bc_only, bc_vis or full");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "per-step metrics as JSON lines");

  // rollout
  auto* ro = app.add_subcommand("rollout", "run one benchmark episode with a checkpoint");
  std::string ro_ckpt, ro_task, ro_frames;
  std::uint64_t ro_seed = 0;
  bool ro_greedy = false;
  ro->add_option("--ckpt", ro_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ro->add_option("--task", ro_task, "task id, e.g. use_chest_left")->required();
  ro->add_option("--seed", ro_seed, "episode seed");
  ro->add_option("--frames", ro_frames, "directory for goal.png and per-step frames");
  ro->add_flag("--greedy", ro_greedy, "argmax actions instead of sampling");

  // bench
  auto* be = app.add_subcommand("bench", "evaluation matrix over the task suite");
  std::vector<std::string> be_variants;
  std::vector<std::string> be_kinds;
  std::string be_jsonl;
  bench::MatrixOptions bo;
  bool be_random = false;
  be->add_option("--variant", be_variants, "name=checkpoint (repeatable)")->required();
  be->add_option("--episodes", bo.episodes_per_task, "episodes per task")->check(CLI::PositiveNumber);
  be->add_option("--seed", bo.seed, "base seed");
  be->add_option("--workers", bo.workers, "parallel episodes");
  be->add_option("--kinds", be_kinds, "restrict to these object kinds");
  be->add_option("--jsonl", be_jsonl, "write per-cell records here");
  be->add_flag("--random", be_random, "add a random-agent floor");

  // zeroshot
  auto* zs = app.add_subcommand("zeroshot", "evaluate on an alternate skin through an action mapping");
  std::string zs_ckpt, zs_skin = "mild", zs_mapping, zs_mapping_name;
  transfer::ZeroShotOptions zo;
  zs->add_option("--ckpt", zs_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  zs->add_option("--skin", zs_skin, "mild, hard or wide");
  zs->add_option("--mapping", zs_mapping, "mapping JSON (default: the skin's native mapping)")->check(CLI::ExistingFile);
  zs->add_option("--mapping-name", zs_mapping_name, "entry to use from a multi-mapping file");
  zs->add_option("--episodes", zo.matrix.episodes_per_task, "episodes per task")->check(CLI::PositiveNumber);
  zs->add_option("--seed", zo.matrix.seed, "base seed");
  zs->add_option("--workers", zo.matrix.workers, "parallel episodes");

  // introspect
  auto* in = app.add_subcommand("introspect", "landmark attention overlay for a benchmark scene");
  std::string in_ckpt, in_task, in_landmarks, in_out;
  std::uint64_t in_seed = 0;
  in->add_option("--ckpt", in_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  in->add_option("--scene", in_task, "task id of the scene")->required();
  in->add_option("--seed", in_seed, "scene seed");
  in->add_option("--landmarks", in_landmarks, "1-based patch indices, comma separated")->required();
  in->add_option("--out", in_out, "PNG path")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP service for interactive sessions");
  std::string sv_config, sv_bind;
  sv->add_option("--config", sv_config, "service config JSON")->check(CLI::ExistingFile);
  sv->add_option("--bind", sv_bind, "host:port (default: $XVIEW_BIND or 127.0.0.1:8080)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dg) {
      std::vector<std::string> warnings;
      const auto clips = datagen::generate_corpus(corpus, &warnings);
      const auto shard = datagen::write_shard(clips, dg_out);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "wrote " << shard.clips.size() << " clips to " << dg_out << "\n";
    } else if (*tr) {
      const auto mc = tr_config.empty() ? preset(tr_preset) : policy::load_model_config(tr_config);
      tc.ablation = training::ablation_from(tr_ablation);
      const auto clips = training::load_training_clips(tr_shards, mc);
      policy::Policy<float> model(mc);
      training::Trainer<float> trainer(model, clips, tc);
      std::ofstream log;
      if (!tr_log.empty()) log.open(tr_log);
      trainer.run([&](const training::StepMetrics& m) {
        if (log) log << training::to_json(m).dump() << "\n";
        if (m.step % 50 == 0) std::cerr << training::to_json(m).dump() << "\n";
      });
      policy::save_checkpoint(model, tr_out, {{"train", training::to_json(tc)}, {"clips", clips.size()}});
      std::cout << "saved " << tr_out << "\n";
    } else if (*ro) {
      const auto suite = bench::build_task_suite();
      const auto& task = find_task(suite, ro_task);
      auto opt = runtime::benchmark_options(ro_seed);
      if (ro_greedy) opt.sampling.mode = runtime::SamplingMode::greedy;
      std::unique_ptr<bench::Agent> agent = std::make_unique<bench::PolicyAgent>(load_model(ro_ckpt), opt);
      if (!ro_frames.empty()) {
        std::filesystem::create_directories(ro_frames);
        agent = std::make_unique<FrameDumper>(std::move(agent), ro_frames);
      }
      bench::EpisodeOptions eo;
      eo.record_trace = true;
      const auto r = bench::run_episode(task, *agent, ro_seed, eo);
      auto j = bench::to_json(r);
      nlohmann::json trace = nlohmann::json::array();
      for (const auto& s : r.trace) {
        nlohmann::json row{{"step", s.step},
                           {"move", std::string(world::to_string(s.action.move))},
                           {"turn", s.action.turn},
                           {"interact", std::string(world::to_string(s.action.interact))}};
        if (s.diagnostics) {
          row["centroid_cell"] = s.diagnostics->centroid_cell;
          row["visibility_prob"] = s.diagnostics->visibility_prob;
        }
        trace.push_back(row);
      }
      j["trace"] = trace;
      std::cout << j.dump(2) << "\n";
    } else if (*be) {
      bench::SuiteConfig sc;
      sc.seed = bo.seed;
      if (!be_kinds.empty()) sc.kinds = parse_kinds(be_kinds);
      std::vector<std::pair<std::string, bench::AgentFactory>> variants;
      for (const auto& v : be_variants) {
        const auto eq = v.find('=');
        if (eq == std::string::npos) throw ValidationError("--variant expects name=checkpoint, got '" + v + "'");
        auto model = load_model(v.substr(eq + 1));
        variants.emplace_back(v.substr(0, eq), [model, seed = bo.seed]() -> std::unique_ptr<bench::Agent> {
          return std::make_unique<bench::PolicyAgent>(model, runtime::benchmark_options(seed));
        });
      }
      if (be_random) {
        variants.emplace_back("random", [seed = bo.seed]() -> std::unique_ptr<bench::Agent> {
          return std::make_unique<bench::RandomAgent>(seed ^ 0x5EEDull);
        });
      }
      const auto table = bench::run_matrix(bench::build_task_suite(sc), variants, bo);
      std::cout << bench::format_table(table);
      if (!be_jsonl.empty()) {
        std::ofstream out(be_jsonl);
        out << bench::format_jsonl(table);
      }
    } else if (*zs) {
      const auto skin = transfer::skin_by_name(zs_skin);
      const auto mapping =
          zs_mapping.empty() ? skin.native_mapping() : transfer::load_mapping(zs_mapping, zs_mapping_name);
      const auto r = transfer::evaluate_zero_shot(load_model(zs_ckpt), skin, mapping, bench::build_task_suite(), zo);
      std::cout << bench::format_table(r.table);
      std::cout << "success " << r.success_rate << " random floor " << r.random_floor;
      if (const auto ratio = r.ratio()) std::cout << " ratio " << *ratio;
      std::cout << "\n";
    } else if (*in) {
      const auto suite = bench::build_task_suite();
      const auto& task = find_task(suite, in_task);
      const auto inst = bench::instantiate(task, in_seed);
      const auto goal = bench::goal_for(task, inst);
      const auto state = world::start_episode(inst.world, inst.spawn);
      const auto obs = state.observe();
      const auto model = load_model(in_ckpt);
      const auto& cfg = model->config();
      const auto g = runtime::to_policy_goal(goal, cfg.image_size);
      const auto lm = introspect::make_landmarks(service::parse_landmarks(in_landmarks), cfg.tokens(), &g.goal_mask,
                                                 cfg.patch_size);
      const auto att = introspect::extract_attention(*model, obs, goal);
      const auto m = introspect::landmark_response(att, lm);
      introspect::export_overlay(in_out, m, g.goal_view, lm,
                                 runtime::to_policy_rgb(obs.rgb, obs.height, obs.width, cfg.image_size),
                                 cfg.image_size, cfg.patch_size);
      std::cout << "wrote " << in_out << "\n";
    } else if (*sv) {
      const auto config = sv_config.empty() ? service::ServiceConfig{} : service::load_service_config(sv_config);
      const auto bind = sv_bind.empty() ? service::bind_from_env() : service::parse_bind(sv_bind);
      service::SessionHub hub(config);
      service::Server server(hub);
      hub.start_ticker();
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      const int port = server.start(bind);
      std::cout << "listening on " << bind.host << ":" << port << "\n" << std::flush;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
      hub.stop_ticker();
    }
  } catch (const Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
