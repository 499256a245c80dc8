#pragma once

/*! \file
 *  \brief Semantic prior knowledge.
 *
 *  Co-occurrence counts are smoothed with Lidstone's rule and assembled into
 *  one Boolean Bayesian network per semantic space (kitchen, bathroom, ...).
 *  A node is "class present in the room". Queries are exact, by enumeration
 *  over the hidden nodes; networks here stay small (a dozen nodes).
 *
 *  CPT layout: one row per parent assignment, row = [P(absent), P(present)].
 *  Parents are sorted by node name and the assignment bits are read
 *  most-significant-first, so with parents (a, b) row 2 means a=1, b=0.
 */

#include "semsearch/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace semsearch::semantics {

struct CooccurrenceCounts {
  std::vector<std::string> classes;
  /// pair[i][j] = N(c_i, c_j): rooms in which both classes were observed.
  std::vector<std::vector<long>> pair;
  /// N(c_j): rooms in which c_j was observed.
  std::vector<long> single;
  /// Number of rooms counted.
  long rooms = 0;

  explicit CooccurrenceCounts(std::vector<std::string> names = {})
      : classes(std::move(names)),
        pair(classes.size(), std::vector<long>(classes.size(), 0)),
        single(classes.size(), 0) {}

  std::size_t num_classes() const { return classes.size(); }

  int index_of(std::string_view name) const {
    const auto it = std::find(classes.begin(), classes.end(), name);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
  }

  /// Counts one room given the set of classes present in it.
  void add_room(const std::set<int>& present) {
    ++rooms;
    for (int j : present) {
      ++single[static_cast<std::size_t>(j)];
      for (int i : present) ++pair[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
};

/// p(c_i | c_j) = (N(c_i, c_j) + alpha) / (N(c_j) + alpha |C|).
inline double lidstone_probability(const CooccurrenceCounts& counts, std::size_t ci,
                                   std::size_t cj, double alpha) {
  if (alpha < 0) throw ValidationError("Lidstone alpha must be non-negative");
  const double num = static_cast<double>(counts.pair.at(ci).at(cj)) + alpha;
  const double den = static_cast<double>(counts.single.at(cj)) +
                     alpha * static_cast<double>(counts.num_classes());
  if (den == 0.0) throw UndefinedProbabilityError("Lidstone ratio undefined: alpha = 0 and N(c_j) = 0");
  return num / den;
}

class BayesianNetwork {
 public:
  struct Node {
    std::string name;
    std::vector<int> parents;  // sorted by parent name
    std::vector<double> p_present;  // one entry per parent assignment
  };

  using Cpts = std::map<std::string, std::vector<std::array<double, 2>>>;

  BayesianNetwork() = default;

  /// Validates structure and CPTs. `edges` are (parent, child) name pairs.
  static BayesianNetwork create(std::string space_label, const std::vector<std::string>& nodes,
                                const std::vector<std::pair<std::string, std::string>>& edges,
                                const Cpts& cpts) {
    BayesianNetwork net;
    net.label_ = std::move(space_label);
    for (const auto& n : nodes) {
      if (net.index_of(n)) throw ValidationError("duplicate node " + n);
      net.nodes_.push_back({n, {}, {}});
    }
    for (const auto& [p, c] : edges) {
      const auto pi = net.index_of(p);
      const auto ci = net.index_of(c);
      if (!pi || !ci) throw ValidationError("edge references unknown node " + p + " -> " + c);
      auto& parents = net.nodes_[static_cast<std::size_t>(*ci)].parents;
      if (std::find(parents.begin(), parents.end(), *pi) != parents.end())
        throw ValidationError("duplicate edge " + p + " -> " + c);
      parents.push_back(*pi);
    }
    for (auto& node : net.nodes_) {
      std::sort(node.parents.begin(), node.parents.end(), [&](int a, int b) {
        return net.nodes_[static_cast<std::size_t>(a)].name < net.nodes_[static_cast<std::size_t>(b)].name;
      });
    }
    net.order_ = net.topological_order();

    for (auto& node : net.nodes_) {
      const auto it = cpts.find(node.name);
      if (it == cpts.end()) throw ValidationError("CPT row missing for node " + node.name);
      const std::size_t rows = std::size_t{1} << node.parents.size();
      if (it->second.size() != rows)
        throw ValidationError("CPT for " + node.name + " needs " + std::to_string(rows) + " rows");
      for (const auto& row : it->second) {
        if (row[0] < 0 || row[1] < 0 || std::abs(row[0] + row[1] - 1.0) > 1e-9)
          throw ValidationError("CPT row for " + node.name + " does not sum to 1");
        node.p_present.push_back(row[1]);
      }
    }
    return net;
  }

  const std::string& space_label() const { return label_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  std::optional<int> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
  }
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

  /// Row index of node i's CPT under a full assignment (bit k of `assignment`
  /// is node k's value).
  std::size_t cpt_row(std::size_t i, std::uint64_t assignment) const {
    std::size_t row = 0;
    for (int p : nodes_[i].parents) row = (row << 1) | ((assignment >> p) & 1U);
    return row;
  }

  /// Joint probability of a full assignment (bit k = node k present).
  double joint(std::uint64_t assignment) const {
    double prob = 1.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const double p = nodes_[i].p_present[cpt_row(i, assignment)];
      prob *= ((assignment >> i) & 1U) ? p : 1.0 - p;
      if (prob == 0.0) break;
    }
    return prob;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["space_label"] = label_;
    std::vector<std::string> names;
    auto edges = nlohmann::json::array();
    nlohmann::json cpts = nlohmann::json::object();
    for (const auto& n : nodes_) names.push_back(n.name);
    for (const auto& n : nodes_) {
      for (int p : n.parents) edges.push_back({nodes_[static_cast<std::size_t>(p)].name, n.name});
      auto rows = nlohmann::json::array();
      for (double p : n.p_present) rows.push_back({1.0 - p, p});
      cpts[n.name] = rows;
    }
    j["nodes"] = names;
    j["edges"] = edges;
    j["cpts"] = cpts;
    return j;
  }

  static BayesianNetwork from_json(const nlohmann::json& j) {
    try {
      std::vector<std::pair<std::string, std::string>> edges;
      for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      Cpts cpts;
      for (const auto& [name, rows] : j.at("cpts").items()) {
        for (const auto& r : rows) cpts[name].push_back({r.at(0).get<double>(), r.at(1).get<double>()});
      }
      return create(j.at("space_label").get<std::string>(), j.at("nodes").get<std::vector<std::string>>(),
                    edges, cpts);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed network document: ") + e.what());
    }
  }

  /// Ancestral sample of the present-set (bit k = node k present).
  std::uint64_t sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uint64_t a = 0;
    for (int i : order_) {
      const auto idx = static_cast<std::size_t>(i);
      if (u01(rng) < nodes_[idx].p_present[cpt_row(idx, a)]) a |= std::uint64_t{1} << i;
    }
    return a;
  }

 private:
  std::vector<int> topological_order() const {
    // Kahn's algorithm; leftover nodes mean a cycle.
    std::vector<int> indegree(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) indegree[i] = static_cast<int>(nodes_[i].parents.size());
    std::vector<int> order;
    std::vector<int> ready;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (indegree[i] == 0) ready.push_back(static_cast<int>(i));
    while (!ready.empty()) {
      const int v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (int p : nodes_[i].parents) {
          if (p == v && --indegree[i] == 0) ready.push_back(static_cast<int>(i));
        }
      }
    }
    if (order.size() != nodes_.size()) throw CycleError("network " + label_ + " contains a cycle");
    return order;
  }

  std::string label_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

/// P(target present | every evidence node present), by enumerating the
/// hidden nodes. Throws UndefinedProbabilityError for zero-probability evidence.
inline double query(const BayesianNetwork& net, std::string_view target,
                    const std::set<std::string>& evidence) {
  const auto t = net.index_of(target);
  if (!t) throw ValidationError("query target not in network: " + std::string(target));
  if (net.size() > 62) throw ValidationError("network too large for enumeration");
  std::uint64_t fixed = 0;
  for (const auto& e : evidence) {
    const auto idx = net.index_of(e);
    if (!idx) throw ValidationError("evidence node not in network: " + e);
    fixed |= std::uint64_t{1} << *idx;
  }
  std::vector<int> hidden;
  for (std::size_t i = 0; i < net.size(); ++i)
    if (!((fixed >> i) & 1U)) hidden.push_back(static_cast<int>(i));

  double numerator = 0.0;
  double denominator = 0.0;
  const std::uint64_t combos = std::uint64_t{1} << hidden.size();
  for (std::uint64_t h = 0; h < combos; ++h) {
    std::uint64_t a = fixed;
    for (std::size_t k = 0; k < hidden.size(); ++k)
      if ((h >> k) & 1U) a |= std::uint64_t{1} << hidden[k];
    const double p = net.joint(a);
    denominator += p;
    if ((a >> *t) & 1U) numerator += p;
  }
  if (!(denominator > 0.0)) throw UndefinedProbabilityError("evidence has zero probability in " + net.space_label());
  return std::clamp(numerator / denominator, 0.0, 1.0);
}

/// Structure of one semantic space. Nodes with at most one parent and no
/// supplied CPT are filled from co-occurrence counts.
struct SpaceSpec {
  std::string label;
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  BayesianNetwork::Cpts cpts;
};

/// Builds one network per space.
///
/// Count-filled rows: P(child | parent present) is the Lidstone estimate
/// p(child | parent). Roots and the parent-absent row use the binary
/// presence estimate (n + alpha) / (rooms + 2 alpha).
inline std::vector<BayesianNetwork> build_networks(const CooccurrenceCounts& counts,
                                                   const std::vector<SpaceSpec>& specs,
                                                   double alpha = 1.0) {
  auto binary = [&](double n, double total) {
    const double den = total + 2.0 * alpha;
    if (den <= 0.0) throw UndefinedProbabilityError("presence estimate undefined with no rooms counted");
    return (n + alpha) / den;
  };
  auto class_of = [&](const std::string& name) {
    const int idx = counts.index_of(name);
    if (idx < 0) throw ValidationError("class not in counts: " + name);
    return static_cast<std::size_t>(idx);
  };

  std::vector<BayesianNetwork> out;
  for (const auto& spec : specs) {
    BayesianNetwork::Cpts cpts = spec.cpts;
    for (const auto& node : spec.nodes) {
      if (cpts.count(node)) continue;
      std::vector<std::string> parents;
      for (const auto& [p, c] : spec.edges)
        if (c == node) parents.push_back(p);
      if (parents.size() > 1)
        throw ValidationError("CPT row missing for multi-parent node " + node + " in " + spec.label);
      const std::size_t ci = class_of(node);
      if (parents.empty()) {
        const double p = binary(static_cast<double>(counts.single[ci]), static_cast<double>(counts.rooms));
        cpts[node] = {{1.0 - p, p}};
      } else {
        const std::size_t pj = class_of(parents.front());
        const double given_present = lidstone_probability(counts, ci, pj, alpha);
        const double absent_rooms = static_cast<double>(counts.rooms - counts.single[pj]);
        const double child_without = static_cast<double>(counts.single[ci] - counts.pair[ci][pj]);
        const double given_absent = binary(child_without, absent_rooms);
        cpts[node] = {{1.0 - given_absent, given_absent}, {1.0 - given_present, given_present}};
      }
    }
    out.push_back(BayesianNetwork::create(spec.label, spec.nodes, spec.edges, cpts));
  }
  return out;
}

struct EvidenceSet {
  int room = -1;
  std::set<int> classes;
};

/// Classes with some object in `room` whose probability exceeds lambda.
/// `Objects` is any range of items exposing `room` and `class_dist`.
template <class Objects>
EvidenceSet extract_evidence(const Objects& objects, int room, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in (0, 1)");
  EvidenceSet ev;
  ev.room = room;
  for (const auto& o : objects) {
    if (o.room != room) continue;
    for (std::size_t c = 0; c < o.class_dist.size(); ++c)
      if (o.class_dist[c] > lambda) ev.classes.insert(static_cast<int>(c));
  }
  return ev;
}

inline std::set<std::string> evidence_names(const EvidenceSet& ev, const std::vector<std::string>& class_set) {
  std::set<std::string> names;
  for (int c : ev.classes) names.insert(class_set.at(static_cast<std::size_t>(c)));
  return names;
}

inline constexpr double kDefaultRoomPrior = 0.1;

/// Max over the networks that contain the target and share a node with the
/// evidence; `fallback` when none qualifies. A qualifying network whose
/// evidence has zero probability contributes `fallback`.
inline double infer_target_room_probability(std::string_view target, const std::set<std::string>& evidence,
                                            const std::vector<BayesianNetwork>& networks,
                                            double fallback = kDefaultRoomPrior) {
  std::optional<double> best;
  for (const auto& net : networks) {
    if (!net.contains(target)) continue;
    std::set<std::string> local;
    for (const auto& e : evidence)
      if (net.contains(e)) local.insert(e);
    if (local.empty()) continue;
    double p = fallback;
    try {
      p = query(net, target, local);
    } catch (const UndefinedProbabilityError&) {
    }
    best = std::max(best.value_or(p), p);
  }
  return best.value_or(fallback);
}

}  // namespace semsearch::semantics
