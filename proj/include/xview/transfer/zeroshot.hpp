#pragma once

#include "xview/bench/matrix.hpp"
#include "xview/transfer/skin.hpp"

namespace xview::transfer {

struct ZeroShotOptions {
  bench::MatrixOptions matrix;
  runtime::Sampling sampling;
};

struct ZeroShotResult {
  bench::ResultsTable table;  // variants "policy" and "random"
  double success_rate = 0.0;
  double random_floor = 0.0;

  /// Policy success over the random floor; nullopt when the floor is 0.
  std::optional<double> ratio() const {
    if (random_floor <= 0.0) return std::nullopt;
    return success_rate / random_floor;
  }
};

/// Throws MappingError if `mapping` cannot drive `skin`.
inline void check_compatible(const AltEnvSkin& skin, const ActionMapping& mapping) {
  if (!mapping.validated()) throw MappingError("mapping '" + mapping.name + "' has not been validated");
  if (!mapping.target.empty() && mapping.target != skin.name) {
    throw MappingError("mapping '" + mapping.name + "' targets '" + mapping.target + "', not skin '" + skin.name + "'");
  }
  if (mapping.target_size != skin.controls.size) {
    throw MappingError("mapping '" + mapping.name + "' writes " + std::to_string(mapping.target_size) +
                       " slots but skin '" + skin.name + "' reads " + std::to_string(skin.controls.size));
  }
}

/// Source action -> mapped control vector -> the skin's own decoding.
inline std::function<world::Action(const world::Action&)> action_bridge(const AltEnvSkin& skin,
                                                                       const ActionMapping& mapping) {
  check_compatible(skin, mapping);
  return [layout = skin.controls, mapping](const world::Action& a) { return layout.decode(map_action(mapping, a)); };
}

/// Runs the policy and a random agent on `skin` with the same seeds. The
/// policy sees skin-resolution frames (resized inside the session) and acts
/// through `mapping`; nothing is fine-tuned.
inline ZeroShotResult evaluate_zero_shot(std::shared_ptr<const policy::Policy<float>> model, const AltEnvSkin& skin,
                                         const ActionMapping& mapping, const std::vector<bench::BenchTask>& suite,
                                         ZeroShotOptions opt = {}) {
  if (!model) throw StateError("zero-shot evaluation needs a model");
  skin.validate();
  opt.matrix.episode.render = skin.render;
  opt.matrix.episode.action_bridge = action_bridge(skin, mapping);
  const auto seed = opt.matrix.seed;
  const auto sampling = opt.sampling;
  std::vector<std::pair<std::string, bench::AgentFactory>> variants{
      {"policy",
       [model, seed, sampling]() -> std::unique_ptr<bench::Agent> {
         auto o = runtime::benchmark_options(seed);
         o.sampling = sampling;
         return std::make_unique<bench::PolicyAgent>(model, o);
       }},
      {"random", [seed, bins = model->config().turn_bins]() -> std::unique_ptr<bench::Agent> {
         return std::make_unique<bench::RandomAgent>(seed ^ 0x5EEDull, bins);
       }}};
  ZeroShotResult r;
  r.table = bench::run_matrix(suite, variants, opt.matrix);
  r.success_rate = r.table.average("policy").rate();
  r.random_floor = r.table.average("random").rate();
  return r;
}

}  // namespace xview::transfer
