#pragma once

/*! \file
 *  \brief Built-in class set and semantic-space networks for indoor scenes.
 *
 *  The procedural generator samples room contents from these same networks,
 *  so synthetic worlds and the agent's prior agree unless a scenario swaps
 *  in other networks.
 */

#include "semsearch/semantics.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace semsearch::builtin {

inline const std::vector<std::string>& class_set() {
  static const std::vector<std::string> kClasses = {
      "towel", "sink", "toilet", "bathtub", "mirror", "bed", "pillow", "nightstand", "wardrobe",
      "oven", "refrigerator", "microwave", "sofa", "tv", "chair", "table", "plant", "lamp"};
  return kClasses;
}

inline constexpr const char* kNetworksJson = R"json([
{
  "space_label": "bathroom",
  "nodes": ["sink", "bathtub", "toilet", "mirror", "towel"],
  "edges": [["sink", "towel"], ["bathtub", "towel"], ["sink", "mirror"]],
  "cpts": {
    "sink":    [[0.05, 0.95]],
    "bathtub": [[0.5, 0.5]],
    "toilet":  [[0.1, 0.9]],
    "mirror":  [[0.8, 0.2], [0.2, 0.8]],
    "towel":   [[0.7, 0.3], [0.25, 0.75], [0.2, 0.8], [0.05, 0.95]]
  }
},
{
  "space_label": "kitchen",
  "nodes": ["refrigerator", "oven", "microwave", "table", "chair"],
  "edges": [["oven", "microwave"], ["table", "chair"]],
  "cpts": {
    "refrigerator": [[0.05, 0.95]],
    "oven":         [[0.2, 0.8]],
    "microwave":    [[0.7, 0.3], [0.3, 0.7]],
    "table":        [[0.4, 0.6]],
    "chair":        [[0.8, 0.2], [0.1, 0.9]]
  }
},
{
  "space_label": "bedroom",
  "nodes": ["bed", "pillow", "nightstand", "lamp", "wardrobe", "mirror", "plant"],
  "edges": [["bed", "pillow"], ["bed", "nightstand"], ["nightstand", "lamp"], ["wardrobe", "mirror"]],
  "cpts": {
    "bed":        [[0.05, 0.95]],
    "pillow":     [[0.9, 0.1], [0.05, 0.95]],
    "nightstand": [[0.9, 0.1], [0.2, 0.8]],
    "lamp":       [[0.7, 0.3], [0.2, 0.8]],
    "wardrobe":   [[0.4, 0.6]],
    "mirror":     [[0.9, 0.1], [0.6, 0.4]],
    "plant":      [[0.8, 0.2]]
  }
},
{
  "space_label": "living_room",
  "nodes": ["sofa", "tv", "lamp", "table", "chair", "plant"],
  "edges": [["sofa", "tv"], ["sofa", "lamp"], ["table", "chair"]],
  "cpts": {
    "sofa":  [[0.1, 0.9]],
    "tv":    [[0.7, 0.3], [0.15, 0.85]],
    "lamp":  [[0.7, 0.3], [0.4, 0.6]],
    "table": [[0.3, 0.7]],
    "chair": [[0.8, 0.2], [0.3, 0.7]],
    "plant": [[0.5, 0.5]]
  }
}
])json";

inline std::vector<semantics::BayesianNetwork> networks() {
  std::vector<semantics::BayesianNetwork> out;
  for (const auto& j : nlohmann::json::parse(kNetworksJson)) out.push_back(semantics::BayesianNetwork::from_json(j));
  return out;
}

/// Room categories the generator draws from. "hallway" has no network.
inline const std::vector<std::string>& room_types() {
  static const std::vector<std::string> kTypes = {"bathroom", "kitchen", "bedroom", "living_room", "hallway"};
  return kTypes;
}

}  // namespace semsearch::builtin
