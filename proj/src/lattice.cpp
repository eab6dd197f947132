#include "relic/lattice.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace relic {

PredicateVocabulary::PredicateVocabulary(std::vector<PredicateEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw DataError("vocabulary is empty");
  dim_ = static_cast<int>(entries_.front().embedding.size());
  if (dim_ < 2) throw DataError("vocabulary embeddings must have dimension >= 2");
  embeddings_.resize(static_cast<Eigen::Index>(entries_.size()), dim_);
  for (std::size_t r = 0; r < entries_.size(); ++r) {
    const auto& e = entries_[r];
    if (e.embedding.size() != dim_)
      throw DataError("embedding dimension mismatch for phrase '" + e.phrase + "'");
    const double norm = e.embedding.norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-6)
      throw DataError("embedding for phrase '" + e.phrase + "' is not unit norm");
    if (!index_.emplace(e.phrase, static_cast<PredicateId>(r)).second)
      throw DataError("duplicate phrase '" + e.phrase + "'");
    embeddings_.row(static_cast<Eigen::Index>(r)) = e.embedding.transpose();
  }
}

std::optional<PredicateId> PredicateVocabulary::find(const std::string& phrase) const {
  auto it = index_.find(phrase);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

PredicateId PredicateVocabulary::require(const std::string& phrase) const {
  auto id = find(phrase);
  if (!id) throw DataError("unknown predicate phrase '" + phrase + "'");
  return *id;
}

const char* to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Sim: return "sim";
    case EdgeKind::Ent: return "ent";
    case EdgeKind::Con: return "con";
  }
  return "?";
}

EdgeKind edge_kind_from_string(const std::string& s) {
  if (s == "sim") return EdgeKind::Sim;
  if (s == "ent") return EdgeKind::Ent;
  if (s == "con") return EdgeKind::Con;
  throw DataError("unknown edge kind '" + s + "'");
}

RelationLattice::RelationLattice(std::size_t node_count, std::vector<LatticeEdge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
  sim_.resize(node_count_);
  con_.resize(node_count_);
  children_.resize(node_count_);
  parents_.resize(node_count_);
  for (const auto& e : edges_) {
    if (e.src < 0 || e.dst < 0 || idx(e.src) >= node_count_ || idx(e.dst) >= node_count_)
      throw DataError("lattice edge references node outside [0, node_count)");
    switch (e.kind) {
      case EdgeKind::Sim: sim_[idx(e.src)].push_back({e.dst, e.weight}); break;
      case EdgeKind::Con: con_[idx(e.src)].push_back({e.dst, e.weight}); break;
      case EdgeKind::Ent:
        parents_[idx(e.src)].push_back({e.dst, e.weight});
        children_[idx(e.dst)].push_back({e.src, e.weight});
        break;
    }
  }
  compute_depths();
}

void RelationLattice::compute_depths() {
  depth_.assign(node_count_, -1);
  std::vector<char> on_stack(node_count_, 0);
  // Memoised longest path to a root; a node re-entered while on the stack
  // belongs to a cycle and is treated as depth 0 there.
  std::function<int(std::size_t)> visit = [&](std::size_t r) -> int {
    if (depth_[r] >= 0) return depth_[r];
    if (on_stack[r]) return 0;
    on_stack[r] = 1;
    int d = 0;
    for (const auto& p : parents_[r]) d = std::max(d, 1 + visit(idx(p.id)));
    on_stack[r] = 0;
    depth_[r] = d;
    return d;
  };
  for (std::size_t r = 0; r < node_count_; ++r) visit(r);
}

bool RelationLattice::has_edge(PredicateId a, PredicateId b, EdgeKind kind) const {
  const std::vector<Neighbor>* list = nullptr;
  switch (kind) {
    case EdgeKind::Sim: list = &sim_[idx(a)]; break;
    case EdgeKind::Con: list = &con_[idx(a)]; break;
    case EdgeKind::Ent: list = &parents_[idx(a)]; break;
  }
  return std::any_of(list->begin(), list->end(), [b](const Neighbor& n) { return n.id == b; });
}

std::size_t RelationLattice::count(EdgeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [kind](const LatticeEdge& e) { return e.kind == kind; }));
}

namespace {

double clamp_unit(double w) { return std::clamp(w, 0.0, 1.0); }

std::string format_cycle(const std::vector<PredicateId>& cycle, const PredicateVocabulary* vocab) {
  std::ostringstream os;
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    if (k) os << " -> ";
    if (vocab)
      os << '\'' << (*vocab)[cycle[k]].phrase << '\'';
    else
      os << cycle[k];
  }
  return os.str();
}

// Every distinct directed cycle found by a DFS over Ent edges, each reported
// as a closed walk (first node repeated at the end).
std::vector<std::vector<PredicateId>> find_ent_cycles(const RelationLattice& lattice) {
  const std::size_t n = lattice.node_count();
  std::vector<int> color(n, 0);
  std::vector<PredicateId> stack;
  std::vector<std::vector<PredicateId>> cycles;
  std::function<void(PredicateId)> dfs = [&](PredicateId r) {
    color[static_cast<std::size_t>(r)] = 1;
    stack.push_back(r);
    for (const auto& p : lattice.parents(r)) {
      const auto pi = static_cast<std::size_t>(p.id);
      if (color[pi] == 0) {
        dfs(p.id);
      } else if (color[pi] == 1) {
        auto it = std::find(stack.begin(), stack.end(), p.id);
        std::vector<PredicateId> cycle(it, stack.end());
        cycle.push_back(p.id);
        cycles.push_back(std::move(cycle));
      }
    }
    stack.pop_back();
    color[static_cast<std::size_t>(r)] = 2;
  };
  for (std::size_t r = 0; r < n; ++r)
    if (color[r] == 0) dfs(static_cast<PredicateId>(r));
  return cycles;
}

}  // namespace

RelationLattice build_lattice(const PredicateVocabulary& vocab, const LatticeRules& rules, double tau_sim) {
  if (!(tau_sim > 0.0 && tau_sim < 1.0)) throw DataError("tau_sim must lie in (0, 1)");
  const std::size_t n = vocab.size();
  const Matrix& T = vocab.embedding_matrix();
  const Matrix gram = T * T.transpose();  // unit rows: cosine

  std::vector<LatticeEdge> edges;
  std::set<std::pair<PredicateId, PredicateId>> ent_pairs, con_pairs;  // unordered keys

  auto key = [](PredicateId a, PredicateId b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  auto w = [&](PredicateId a, PredicateId b) { return std::clamp(gram(a, b), -1.0, 1.0); };

  std::set<std::pair<PredicateId, PredicateId>> ent_directed;
  for (const auto& [child_phrase, parent_phrase] : rules.entailments) {
    const PredicateId c = vocab.require(child_phrase);
    const PredicateId p = vocab.require(parent_phrase);
    if (c == p) throw DataError("entailment rule maps '" + child_phrase + "' to itself");
    if (!ent_directed.emplace(c, p).second) continue;
    ent_pairs.insert(key(c, p));
    edges.push_back({c, p, EdgeKind::Ent, clamp_unit(w(c, p))});
  }
  for (const auto& [a_phrase, b_phrase] : rules.contradictions) {
    const PredicateId a = vocab.require(a_phrase);
    const PredicateId b = vocab.require(b_phrase);
    if (a == b) throw DataError("contradiction rule pairs '" + a_phrase + "' with itself");
    if (ent_pairs.count(key(a, b)))
      throw DataError("'" + a_phrase + "' and '" + b_phrase + "' carry both entailment and contradiction rules");
    if (!con_pairs.insert(key(a, b)).second) continue;
    const double weight = clamp_unit(w(a, b));
    edges.push_back({a, b, EdgeKind::Con, weight});
    edges.push_back({b, a, EdgeKind::Con, weight});
  }

  std::set<std::pair<PredicateId, PredicateId>> sim_pairs;
  auto add_sim = [&](PredicateId a, PredicateId b) {
    const auto k = key(a, b);
    if (a == b || ent_pairs.count(k) || con_pairs.count(k) || !sim_pairs.insert(k).second) return;
    edges.push_back({k.first, k.second, EdgeKind::Sim, w(a, b)});
    edges.push_back({k.second, k.first, EdgeKind::Sim, w(a, b)});
  };
  for (const auto& group : rules.synonym_groups) {
    std::vector<PredicateId> ids;
    for (const auto& phrase : group) ids.push_back(vocab.require(phrase));
    for (std::size_t x = 0; x < ids.size(); ++x)
      for (std::size_t y = x + 1; y < ids.size(); ++y) add_sim(ids[x], ids[y]);
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) >= tau_sim)
        add_sim(static_cast<PredicateId>(a), static_cast<PredicateId>(b));

  RelationLattice lattice(n, std::move(edges));
  const auto cycles = find_ent_cycles(lattice);
  if (!cycles.empty()) throw DataError("entailment rules contain a cycle: " + format_cycle(cycles.front(), &vocab));
  return lattice;
}

Vector propagate_scores(const RelationLattice& lattice, const Vector& raw, double lambda_sim, double lambda_ent) {
  if (static_cast<std::size_t>(raw.size()) != lattice.node_count())
    throw DataError("propagate_scores: score vector length does not match lattice");
  Vector out = raw;
  if (lambda_sim == 0.0 && lambda_ent == 0.0) return out;
  for (Eigen::Index r = 0; r < raw.size(); ++r) {
    double sim_sum = 0.0, ent_sum = 0.0;
    for (const auto& nb : lattice.sim(static_cast<PredicateId>(r))) sim_sum += nb.weight * raw[nb.id];
    for (const auto& nb : lattice.children(static_cast<PredicateId>(r))) ent_sum += nb.weight * raw[nb.id];
    out[r] = raw[r] + lambda_sim * sim_sum + lambda_ent * ent_sum;
  }
  return out;
}

Vector suppress_contradictions(const RelationLattice& lattice, const Vector& bar, double lambda_con) {
  if (static_cast<std::size_t>(bar.size()) != lattice.node_count())
    throw DataError("suppress_contradictions: score vector length does not match lattice");
  Vector out = bar;
  if (lambda_con == 0.0) return out;
  for (Eigen::Index r = 0; r < bar.size(); ++r) {
    double penalty = 0.0;
    for (const auto& nb : lattice.con(static_cast<PredicateId>(r))) penalty += nb.weight * sigmoid(bar[nb.id]);
    out[r] = bar[r] - lambda_con * penalty;
  }
  return out;
}

LatticeReport validate_lattice(const RelationLattice& lattice) {
  LatticeReport report;
  std::map<std::tuple<PredicateId, PredicateId, EdgeKind>, double> seen;
  for (const auto& e : lattice.edges()) {
    std::ostringstream where;
    where << to_string(e.kind) << " edge " << e.src << "->" << e.dst;
    if (e.src == e.dst) report.violations.push_back("self-edge: " + where.str());
    if (!seen.emplace(std::make_tuple(e.src, e.dst, e.kind), e.weight).second)
      report.violations.push_back("duplicate: " + where.str());
    if (!std::isfinite(e.weight) || e.weight < -1.0 || e.weight > 1.0)
      report.violations.push_back("weight outside [-1, 1]: " + where.str());
    else if (e.kind != EdgeKind::Sim && e.weight < 0.0)
      report.violations.push_back("negative weight on " + where.str());
  }
  for (const auto& e : lattice.edges()) {
    if (e.kind == EdgeKind::Ent) continue;
    auto it = seen.find(std::make_tuple(e.dst, e.src, e.kind));
    if (it == seen.end() || it->second != e.weight) {
      std::ostringstream os;
      os << "asymmetric " << to_string(e.kind) << " edge " << e.src << "->" << e.dst;
      report.violations.push_back(os.str());
    }
    if (e.kind == EdgeKind::Sim && seen.count(std::make_tuple(e.src, e.dst, EdgeKind::Con))) {
      std::ostringstream os;
      os << "pair " << e.src << "," << e.dst << " carries both sim and con edges";
      report.violations.push_back(os.str());
    }
  }
  report.ent_cycles = find_ent_cycles(lattice);
  for (const auto& cycle : report.ent_cycles) report.violations.push_back("ent cycle: " + format_cycle(cycle, nullptr));
  return report;
}

// JSON ----------------------------------------------------------------------

PredicateVocabulary vocabulary_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("vocabulary file must be a JSON array");
  std::vector<PredicateEntry> entries;
  entries.reserve(j.size());
  for (const auto& item : j) {
    PredicateEntry e;
    e.phrase = item.at("phrase").get<std::string>();
    const auto emb = item.at("embedding").get<std::vector<double>>();
    e.embedding = Eigen::Map<const Vector>(emb.data(), static_cast<Eigen::Index>(emb.size()));
    e.seen = item.value("seen", true);
    entries.push_back(std::move(e));
  }
  return PredicateVocabulary(std::move(entries));
}

nlohmann::json vocabulary_to_json(const PredicateVocabulary& vocab) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : vocab.entries()) {
    j.push_back({{"phrase", e.phrase},
                 {"embedding", std::vector<double>(e.embedding.data(), e.embedding.data() + e.embedding.size())},
                 {"seen", e.seen}});
  }
  return j;
}

LatticeRules rules_from_json(const nlohmann::json& j) {
  LatticeRules rules;
  for (const auto& [k, v] : j.items()) {
    if (k != "entailments" && k != "contradictions" && k != "synonym_groups")
      throw DataError("unknown key '" + k + "' in rules file");
  }
  for (const auto& pair : j.value("entailments", nlohmann::json::array()))
    rules.entailments.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  for (const auto& pair : j.value("contradictions", nlohmann::json::array()))
    rules.contradictions.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  for (const auto& group : j.value("synonym_groups", nlohmann::json::array()))
    rules.synonym_groups.push_back(group.get<std::vector<std::string>>());
  return rules;
}

nlohmann::json rules_to_json(const LatticeRules& rules) {
  nlohmann::json j;
  j["entailments"] = nlohmann::json::array();
  for (const auto& [c, p] : rules.entailments) j["entailments"].push_back({c, p});
  j["contradictions"] = nlohmann::json::array();
  for (const auto& [a, b] : rules.contradictions) j["contradictions"].push_back({a, b});
  j["synonym_groups"] = rules.synonym_groups;
  return j;
}

nlohmann::json lattice_to_json(const RelationLattice& lattice, const PredicateVocabulary& vocab) {
  nlohmann::json j;
  j["format"] = "relic-lattice";
  j["version"] = 1;
  j["nodes"] = nlohmann::json::array();
  for (std::size_t r = 0; r < lattice.node_count(); ++r)
    j["nodes"].push_back({{"index", r}, {"phrase", vocab[static_cast<PredicateId>(r)].phrase}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : lattice.edges())
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}, {"weight", e.weight}});
  return j;
}

RelationLattice lattice_from_json(const nlohmann::json& j, std::size_t expected_nodes) {
  if (j.value("format", "") != "relic-lattice") throw DataError("not a lattice file");
  const std::size_t n = j.at("nodes").size();
  if (expected_nodes != 0 && n != expected_nodes)
    throw DataError("lattice node count does not match vocabulary size");
  std::vector<LatticeEdge> edges;
  for (const auto& e : j.at("edges"))
    edges.push_back({e.at("src").get<PredicateId>(), e.at("dst").get<PredicateId>(),
                     edge_kind_from_string(e.at("kind").get<std::string>()), e.at("weight").get<double>()});
  RelationLattice lattice(n, std::move(edges));
  const auto report = validate_lattice(lattice);
  if (!report.ok()) throw DataError("invalid lattice: " + report.violations.front());
  return lattice;
}

}  // namespace relic
