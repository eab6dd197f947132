#include "relic/scene.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace relic {

AnnotationTable::AnnotationTable(std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.subj == t.obj) throw DataError("annotation relates an object to itself");
    set_.insert(t);
  }
}

std::vector<PredicateId> AnnotationTable::predicates(OrderedPair pair) const {
  std::vector<PredicateId> out;
  // ordered by (subj, pred, obj): one subject's triplets are contiguous, one pair's are not
  for (auto it = set_.lower_bound(Triplet{pair.subj, std::numeric_limits<PredicateId>::min(), 0});
       it != set_.end() && it->subj == pair.subj; ++it)
    if (it->obj == pair.obj) out.push_back(it->pred);
  return out;
}

const ObjectInstance& SceneInstance::object(ObjectId id) const {
  for (const auto& o : objects)
    if (o.id == id) return o;
  throw DataError("scene '" + this->id + "' has no object " + std::to_string(id));
}

bool SceneInstance::has_object(ObjectId id) const {
  return std::any_of(objects.begin(), objects.end(), [id](const ObjectInstance& o) { return o.id == id; });
}

std::vector<OrderedPair> SceneInstance::ordered_pairs() const {
  std::vector<OrderedPair> out;
  out.reserve(objects.size() * (objects.size() > 0 ? objects.size() - 1 : 0));
  for (const auto& a : objects)
    for (const auto& b : objects)
      if (a.id != b.id) out.push_back({a.id, b.id});
  return out;
}

namespace {

Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<Triplet> triplets_from_json(const nlohmann::json& j, const PredicateVocabulary& vocab,
                                        const SceneInstance& scene) {
  std::vector<Triplet> out;
  for (const auto& t : j) {
    Triplet trip{t.at(0).get<ObjectId>(), vocab.require(t.at(1).get<std::string>()), t.at(2).get<ObjectId>()};
    if (!scene.has_object(trip.subj) || !scene.has_object(trip.obj))
      throw DataError("scene '" + scene.id + "' relation references a missing object");
    out.push_back(trip);
  }
  return out;
}

nlohmann::json triplets_to_json(const std::vector<Triplet>& ts, const PredicateVocabulary& vocab) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : ts) j.push_back({t.subj, vocab[t.pred].phrase, t.obj});
  return j;
}

}  // namespace

SceneInstance scene_from_json(const nlohmann::json& j, const PredicateVocabulary& vocab) {
  static const std::set<std::string> kKeys = {"id", "split", "objects", "pairs", "annotations", "truth"};
  for (const auto& [k, v] : j.items())
    if (!kKeys.count(k)) throw DataError("unknown key '" + k + "' in scene record");
  SceneInstance s;
  s.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  s.split = j.value("split", "train");
  for (const auto& o : j.at("objects")) {
    ObjectInstance obj;
    obj.id = o.at("id").get<ObjectId>();
    obj.category = o.value("category", "");
    const auto b = o.at("box").get<std::vector<double>>();
    if (b.size() != 4) throw DataError("box must have four coordinates");
    obj.box = {b[0], b[1], b[2], b[3]};
    if (!(obj.box.x1 < obj.box.x2 && obj.box.y1 < obj.box.y2))
      throw DataError("scene '" + s.id + "' object " + std::to_string(obj.id) + " has a degenerate box");
    obj.feature = vector_from_json(o.at("feature"));
    if (s.has_object(obj.id)) throw DataError("duplicate object id in scene '" + s.id + "'");
    s.objects.push_back(std::move(obj));
  }
  const int dim = s.feature_dim();
  for (const auto& o : s.objects)
    if (o.feature.size() != dim) throw DataError("object feature dimension varies within scene '" + s.id + "'");
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs")) {
      OrderedPair pair{p.at("subj").get<ObjectId>(), p.at("obj").get<ObjectId>()};
      Vector u = vector_from_json(p.at("union"));
      if (u.size() != dim) throw DataError("union feature dimension mismatch in scene '" + s.id + "'");
      s.union_features[pair] = std::move(u);
    }
  }
  s.annotations = AnnotationTable(triplets_from_json(j.value("annotations", nlohmann::json::array()), vocab, s));
  if (j.contains("truth")) s.truth = triplets_from_json(j.at("truth"), vocab, s);
  return s;
}

nlohmann::json scene_to_json(const SceneInstance& scene, const PredicateVocabulary& vocab) {
  nlohmann::json j;
  j["id"] = scene.id;
  j["split"] = scene.split;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : scene.objects)
    j["objects"].push_back({{"id", o.id},
                            {"category", o.category},
                            {"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}},
                            {"feature", vector_to_json(o.feature)}});
  if (!scene.union_features.empty()) {
    j["pairs"] = nlohmann::json::array();
    for (const auto& [pair, u] : scene.union_features)
      j["pairs"].push_back({{"subj", pair.subj}, {"obj", pair.obj}, {"union", vector_to_json(u)}});
  }
  j["annotations"] = triplets_to_json({scene.annotations.triplets().begin(), scene.annotations.triplets().end()}, vocab);
  if (scene.truth) j["truth"] = triplets_to_json(*scene.truth, vocab);
  return j;
}

std::vector<SceneInstance> read_scenes_jsonl(const std::filesystem::path& path, const PredicateVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scene file " + path.string());
  std::vector<SceneInstance> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line), vocab));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return scenes;
}

std::string scenes_to_jsonl(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab) {
  std::string out;
  for (const auto& s : scenes) {
    out += scene_to_json(s, vocab).dump();
    out += '\n';
  }
  return out;
}

std::vector<SceneInstance> filter_split(const std::vector<SceneInstance>& scenes, const std::string& split) {
  if (split.empty() || split == "all") return scenes;
  std::vector<SceneInstance> out;
  for (const auto& s : scenes)
    if (s.split == split) out.push_back(s);
  return out;
}

const char* to_string(DropKind kind) { return kind == DropKind::Dropped ? "dropped" : "collapsed-to-parent"; }

nlohmann::json drop_records_to_json(const std::string& scene_id, const std::vector<DropRecord>& records,
                                    const PredicateVocabulary& vocab) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : records)
    list.push_back({r.triplet.subj, vocab[r.triplet.pred].phrase, r.triplet.obj, to_string(r.kind)});
  return {{"scene_id", scene_id}, {"dropped", std::move(list)}};
}

DropLog read_drop_log_jsonl(const std::filesystem::path& path, const PredicateVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open drop log " + path.string());
  DropLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& records = log[j.at("scene_id").get<std::string>()];
      for (const auto& d : j.at("dropped")) {
        DropRecord r;
        r.triplet = {d.at(0).get<ObjectId>(), vocab.require(d.at(1).get<std::string>()), d.at(2).get<ObjectId>()};
        const auto tag = d.at(3).get<std::string>();
        if (tag == "dropped") r.kind = DropKind::Dropped;
        else if (tag == "collapsed-to-parent") r.kind = DropKind::CollapsedToParent;
        else throw DataError("unknown drop tag '" + tag + "'");
        records.push_back(r);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

}  // namespace relic
