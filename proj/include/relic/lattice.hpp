#pragma once

#include "relic/common.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace relic {

using PredicateId = int;

struct PredicateEntry {
  std::string phrase;
  Vector embedding;
  bool seen = true;
};

/// Relation phrases with unit-norm text embeddings.
class PredicateVocabulary {
 public:
  PredicateVocabulary() = default;
  /// Validates uniqueness, shared dimension (>= 2) and unit norm.
  explicit PredicateVocabulary(std::vector<PredicateEntry> entries);

  std::size_t size() const { return entries_.size(); }
  int dim() const { return dim_; }
  const PredicateEntry& operator[](PredicateId id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<PredicateEntry>& entries() const { return entries_; }

  std::optional<PredicateId> find(const std::string& phrase) const;
  /// Throws DataError naming the phrase when absent.
  PredicateId require(const std::string& phrase) const;

  /// Row r holds t_r.
  const Matrix& embedding_matrix() const { return embeddings_; }

 private:
  std::vector<PredicateEntry> entries_;
  std::unordered_map<std::string, PredicateId> index_;
  Matrix embeddings_;
  int dim_ = 0;
};

struct LatticeRules {
  std::vector<std::pair<std::string, std::string>> entailments;     // (child, parent)
  std::vector<std::pair<std::string, std::string>> contradictions;  // unordered
  std::vector<std::vector<std::string>> synonym_groups;
};

enum class EdgeKind { Sim, Ent, Con };

const char* to_string(EdgeKind kind);
EdgeKind edge_kind_from_string(const std::string& s);

struct LatticeEdge {
  PredicateId src = 0;
  PredicateId dst = 0;
  EdgeKind kind = EdgeKind::Sim;
  double weight = 0.0;

  bool operator==(const LatticeEdge&) const = default;
};

struct Neighbor {
  PredicateId id;
  double weight;
};

/// Typed, weighted graph over predicates. Immutable after construction.
///
/// Ent edges run fine -> coarse (src entails dst). Adjacency views are
/// derived from the edge list; the edge list itself is kept in build order
/// so exports are stable.
class RelationLattice {
 public:
  RelationLattice() = default;
  /// No validation; see validate_lattice().
  RelationLattice(std::size_t node_count, std::vector<LatticeEdge> edges);

  std::size_t node_count() const { return node_count_; }
  const std::vector<LatticeEdge>& edges() const { return edges_; }

  std::span<const Neighbor> sim(PredicateId r) const { return sim_[idx(r)]; }
  std::span<const Neighbor> con(PredicateId r) const { return con_[idx(r)]; }
  /// Ent predecessors of r, weight w(child, r).
  std::span<const Neighbor> children(PredicateId r) const { return children_[idx(r)]; }
  /// Ent successors of r, weight w(r, parent).
  std::span<const Neighbor> parents(PredicateId r) const { return parents_[idx(r)]; }

  bool has_edge(PredicateId a, PredicateId b, EdgeKind kind) const;
  bool sim_connected(PredicateId a, PredicateId b) const { return has_edge(a, b, EdgeKind::Sim); }
  bool con_connected(PredicateId a, PredicateId b) const { return has_edge(a, b, EdgeKind::Con); }

  /// Longest Ent path from a root (a node without parents). Roots have depth 0.
  /// Only meaningful on an acyclic Ent subgraph.
  int ent_depth(PredicateId r) const { return depth_[idx(r)]; }

  std::size_t count(EdgeKind kind) const;

 private:
  std::size_t idx(PredicateId r) const { return static_cast<std::size_t>(r); }
  void compute_depths();

  std::size_t node_count_ = 0;
  std::vector<LatticeEdge> edges_;
  std::vector<std::vector<Neighbor>> sim_, con_, children_, parents_;
  std::vector<int> depth_;
};

inline constexpr double kDefaultSimThreshold = 0.85;

/// Builds the lattice: Ent/Con edges from rules, Sim edges from cosine >= tau_sim
/// (and from explicit synonym groups), Sim dropped wherever Ent or Con exists.
RelationLattice build_lattice(const PredicateVocabulary& vocab, const LatticeRules& rules,
                              double tau_sim = kDefaultSimThreshold);

/// s_bar = s + lambda_sim * sum_sim w s' + lambda_ent * sum_children w s'
Vector propagate_scores(const RelationLattice& lattice, const Vector& raw, double lambda_sim, double lambda_ent);

/// s_tilde = s_bar - lambda_con * sum_con w sigmoid(s_bar')
Vector suppress_contradictions(const RelationLattice& lattice, const Vector& bar, double lambda_con);

struct LatticeReport {
  std::vector<std::string> violations;
  std::vector<std::vector<PredicateId>> ent_cycles;
  bool ok() const { return violations.empty(); }
};

LatticeReport validate_lattice(const RelationLattice& lattice);

// JSON ----------------------------------------------------------------------

PredicateVocabulary vocabulary_from_json(const nlohmann::json& j);
nlohmann::json vocabulary_to_json(const PredicateVocabulary& vocab);
LatticeRules rules_from_json(const nlohmann::json& j);
nlohmann::json rules_to_json(const LatticeRules& rules);
nlohmann::json lattice_to_json(const RelationLattice& lattice, const PredicateVocabulary& vocab);
/// Rejects lattices that fail validate_lattice.
RelationLattice lattice_from_json(const nlohmann::json& j, std::size_t expected_nodes);

}  // namespace relic
