#pragma once

#include "xview/error.hpp"
#include "xview/world/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace xview::transfer {

/// Scalar source fields of an Action. Moves and interactions are one-hot
/// flags; yaw is the turn in radians. The simulator has no pitch, so pitch
/// is always 0, but mappings must still say where it goes.
inline constexpr std::array<std::string_view, 9> kSourceFields{"forward", "back", "left",  "right", "use",
                                                               "break",   "attack", "yaw", "pitch"};

inline int source_index(std::string_view name) {
  for (std::size_t i = 0; i < kSourceFields.size(); ++i)
    if (kSourceFields[i] == name) return static_cast<int>(i);
  return -1;
}

/// Flattens an action into the source field vector.
inline std::array<double, kSourceFields.size()> source_values(const world::Action& a) {
  std::array<double, kSourceFields.size()> v{};
  switch (a.move) {
    case world::MoveCommand::forward: v[0] = 1; break;
    case world::MoveCommand::back: v[1] = 1; break;
    case world::MoveCommand::strafe_left: v[2] = 1; break;
    case world::MoveCommand::strafe_right: v[3] = 1; break;
    case world::MoveCommand::none: break;
  }
  switch (a.interact) {
    case world::InteractCommand::use: v[4] = 1; break;
    case world::InteractCommand::break_: v[5] = 1; break;
    case world::InteractCommand::attack: v[6] = 1; break;
    case world::InteractCommand::none: break;
  }
  v[7] = a.turn;
  return v;
}

struct MappingRule {
  std::string source;
  int slot = 0;
  double gain = 1.0;
};

/// Field-wise translation of an Action into a target control vector:
/// target[slot] += gain * source for every rule, masked fields dropped.
struct ActionMapping {
  std::string name;
  std::string target;  // environment the vector is meant for; empty = any
  int target_size = 0;
  std::vector<std::string> slot_names;  // optional labels, documentation only
  std::vector<MappingRule> rules;
  std::vector<std::string> masked;

  /// Checks totality: every source field is in exactly one rule or masked.
  void validate() {
    if (target_size < 1) throw MappingError(name + ": target_size must be >= 1");
    if (!slot_names.empty() && static_cast<int>(slot_names.size()) != target_size) {
      throw MappingError(name + ": slot_names must have target_size entries");
    }
    std::array<int, kSourceFields.size()> seen{};
    auto mark = [&](const std::string& field) {
      const int i = source_index(field);
      if (i < 0) throw MappingError(name + ": unknown source field '" + field + "'");
      if (++seen[static_cast<std::size_t>(i)] > 1) throw MappingError(name + ": source field '" + field + "' handled twice");
    };
    for (const auto& r : rules) {
      mark(r.source);
      if (r.slot < 0 || r.slot >= target_size) {
        throw MappingError(name + ": slot " + std::to_string(r.slot) + " out of range for '" + r.source + "'");
      }
      if (!std::isfinite(r.gain)) throw MappingError(name + ": gain for '" + r.source + "' is not finite");
    }
    for (const auto& m : masked) mark(m);
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (seen[i] == 0) throw MappingError(name + ": source field '" + std::string(kSourceFields[i]) + "' is not handled");
    }
    validated_ = true;
  }

  bool validated() const { return validated_; }

 private:
  bool validated_ = false;
};

inline std::vector<double> map_action(const ActionMapping& m, const world::Action& a) {
  if (!m.validated()) throw MappingError("mapping '" + m.name + "' has not been validated");
  const auto src = source_values(a);
  std::vector<double> out(static_cast<std::size_t>(m.target_size), 0.0);
  for (const auto& r : m.rules) {
    out[static_cast<std::size_t>(r.slot)] += r.gain * src[static_cast<std::size_t>(source_index(r.source))];
  }
  return out;
}

/// Maps every field to the slot of the same index with gain 1.
inline ActionMapping identity_mapping() {
  ActionMapping m;
  m.name = "identity";
  m.target_size = static_cast<int>(kSourceFields.size());
  for (std::size_t i = 0; i < kSourceFields.size(); ++i) {
    m.rules.push_back({std::string(kSourceFields[i]), static_cast<int>(i), 1.0});
    m.slot_names.emplace_back(kSourceFields[i]);
  }
  m.validate();
  return m;
}

// JSON form:
//   {"name": "...", "target": "...", "target_size": N, "slot_names": [...],
//    "rules": [{"source": "yaw", "slot": 0, "gain": 4.75},
//              {"source": "pitch", "masked": true}, ...]}
// A rule with "masked": true has no slot or gain. Top-level "masked" is
// also accepted. Files may hold one mapping or {"mappings": [...]}.

inline ActionMapping mapping_from_json(const nlohmann::json& j) {
  ActionMapping m;
  try {
    m.name = j.value("name", std::string("unnamed"));
    m.target = j.value("target", std::string());
    m.target_size = j.at("target_size").get<int>();
    m.slot_names = j.value("slot_names", std::vector<std::string>{});
    for (const auto& r : j.at("rules")) {
      const auto source = r.at("source").get<std::string>();
      if (r.value("masked", false)) {
        m.masked.push_back(source);
        continue;
      }
      m.rules.push_back({source, r.at("slot").get<int>(), r.value("gain", 1.0)});
    }
    for (const auto& s : j.value("masked", std::vector<std::string>{})) m.masked.push_back(s);
  } catch (const nlohmann::json::exception& e) {
    throw MappingError(std::string("mapping: ") + e.what());
  }
  m.validate();
  return m;
}

inline nlohmann::json to_json(const ActionMapping& m) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : m.rules) rules.push_back({{"source", r.source}, {"slot", r.slot}, {"gain", r.gain}});
  for (const auto& s : m.masked) rules.push_back({{"source", s}, {"masked", true}});
  nlohmann::json j{{"name", m.name}, {"target_size", m.target_size}, {"rules", rules}};
  if (!m.target.empty()) j["target"] = m.target;
  if (!m.slot_names.empty()) j["slot_names"] = m.slot_names;
  return j;
}

/// Every mapping in a file.
inline std::vector<ActionMapping> load_mappings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mapping file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw MappingError(std::string("mapping file parse error: ") + e.what());
  }
  std::vector<ActionMapping> out;
  if (j.contains("mappings")) {
    for (const auto& m : j.at("mappings")) out.push_back(mapping_from_json(m));
  } else {
    out.push_back(mapping_from_json(j));
  }
  return out;
}

/// Loads `path`; `name` picks one mapping out of a multi-mapping file.
inline ActionMapping load_mapping(const std::string& path, const std::string& name = {}) {
  auto all = load_mappings(path);
  if (name.empty()) {
    if (all.size() != 1) throw MappingError(path + " holds several mappings; pick one by name");
    return all.front();
  }
  for (auto& m : all)
    if (m.name == name) return m;
  throw NotFoundError("no mapping named '" + name + "' in " + path);
}

}  // namespace xview::transfer
