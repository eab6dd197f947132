#pragma once

#include "relic/common.hpp"
#include "relic/lattice.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace relic {

using ObjectId = int;

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

struct ObjectInstance {
  ObjectId id = 0;
  std::string category;
  Box box;
  Vector feature;
};

struct OrderedPair {
  ObjectId subj = 0;
  ObjectId obj = 0;
  auto operator<=>(const OrderedPair&) const = default;
};

struct Triplet {
  ObjectId subj = 0;
  PredicateId pred = 0;
  ObjectId obj = 0;
  auto operator<=>(const Triplet&) const = default;
};

/// y: the set of annotated (subject, predicate, object) triplets. Everything
/// absent is y = 0.
class AnnotationTable {
 public:
  AnnotationTable() = default;
  explicit AnnotationTable(std::vector<Triplet> triplets);

  bool contains(const Triplet& t) const { return set_.count(t) > 0; }
  bool annotated(OrderedPair pair, PredicateId r) const { return contains({pair.subj, r, pair.obj}); }
  /// Annotated predicates on one ordered pair, ascending.
  std::vector<PredicateId> predicates(OrderedPair pair) const;
  const std::set<Triplet>& triplets() const { return set_; }
  std::size_t size() const { return set_.size(); }
  bool empty() const { return set_.empty(); }

 private:
  std::set<Triplet> set_;
};

struct SceneInstance {
  std::string id;
  std::string split = "train";
  std::vector<ObjectInstance> objects;
  /// Precomputed union-region features for ordered pairs; pairs without an
  /// entry fall back to the element-wise max of the two object features.
  std::map<OrderedPair, Vector> union_features;
  AnnotationTable annotations;
  /// Complete relation set; only synthetic scenes carry it.
  std::optional<std::vector<Triplet>> truth;

  const ObjectInstance& object(ObjectId id) const;
  bool has_object(ObjectId id) const;
  int feature_dim() const { return objects.empty() ? 0 : static_cast<int>(objects.front().feature.size()); }
  /// All ordered pairs (i, j), i != j, in object order.
  std::vector<OrderedPair> ordered_pairs() const;
};

SceneInstance scene_from_json(const nlohmann::json& j, const PredicateVocabulary& vocab);
nlohmann::json scene_to_json(const SceneInstance& scene, const PredicateVocabulary& vocab);

std::vector<SceneInstance> read_scenes_jsonl(const std::filesystem::path& path, const PredicateVocabulary& vocab);
std::string scenes_to_jsonl(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab);

/// Scenes whose split matches; an empty filter keeps everything.
std::vector<SceneInstance> filter_split(const std::vector<SceneInstance>& scenes, const std::string& split);

/// True triplets missing from a scene's annotations, with the reason.
enum class DropKind { Dropped, CollapsedToParent };

const char* to_string(DropKind kind);

struct DropRecord {
  Triplet triplet;
  DropKind kind = DropKind::Dropped;
};

/// scene id -> records, in scene order of generation.
using DropLog = std::map<std::string, std::vector<DropRecord>>;

nlohmann::json drop_records_to_json(const std::string& scene_id, const std::vector<DropRecord>& records,
                                    const PredicateVocabulary& vocab);
DropLog read_drop_log_jsonl(const std::filesystem::path& path, const PredicateVocabulary& vocab);

}  // namespace relic
