#include "doctest.h"

#include "relic/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace relic;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.predicate_count = 60;
  c.synonym_clusters = 4;
  c.contradiction_pairs = 3;
  c.embed_dim = 16;
  c.object_dim = 8;
  c.scenes = 40;
  return c;
}

std::set<Triplet> truth_of(const SceneInstance& s) { return {s.truth->begin(), s.truth->end()}; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("relic_synth_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("keeping everything produces no drops") {
  auto c = small_config();
  c.p_keep = 1.0;
  c.p_coarse = 0.0;
  const auto d = generate_dataset(c);
  REQUIRE(d.scenes.size() == 40);
  std::size_t total = 0;
  for (const auto& s : d.scenes) {
    CHECK(d.drops.at(s.id).empty());
    CHECK(s.annotations.triplets() == truth_of(s));
    total += s.truth->size();
  }
  CHECK(total > 0);
}

TEST_CASE("keeping nothing drops the whole truth") {
  auto c = small_config();
  c.p_keep = 0.0;
  const auto d = generate_dataset(c);
  for (const auto& s : d.scenes) {
    CHECK(s.annotations.empty());
    const auto& drops = d.drops.at(s.id);
    CHECK(drops.size() == s.truth->size());
    for (const auto& r : drops) CHECK(r.kind == DropKind::Dropped);
  }
}

TEST_CASE("kept count stays within three sigma of the binomial mean") {
  auto c = small_config();
  c.p_keep = 0.5;
  c.p_coarse = 0.0;
  c.scenes = 400;
  const auto d = generate_dataset(c);
  std::size_t n = 0, kept = 0;
  for (const auto& s : d.scenes) {
    n += s.truth->size();
    kept += s.annotations.size();
  }
  REQUIRE(n >= 1000);
  const double mean = 0.5 * static_cast<double>(n);
  const double sigma = std::sqrt(static_cast<double>(n) * 0.25);
  CHECK(std::abs(static_cast<double>(kept) - mean) <= 3.0 * sigma);
}

TEST_CASE("the three-sigma interval for 1000 draws") {
  const double sigma = std::sqrt(1000 * 0.5 * 0.5);
  CHECK(std::ceil(500 - 3 * sigma) == 453);
  CHECK(std::floor(500 + 3 * sigma) == 547);
}

TEST_CASE("zero embedding noise makes synonyms identical") {
  auto c = small_config();
  c.embed_noise = 0.0;
  const auto w = generate_world(c);
  REQUIRE(w.rules.synonym_groups.size() == 4);
  for (const auto& g : w.rules.synonym_groups) {
    REQUIRE(g.size() == 3);
    const auto& a = w.vocab[w.vocab.require(g[0])].embedding;
    for (const auto& p : g) CHECK(a.dot(w.vocab[w.vocab.require(p)].embedding) == doctest::Approx(1.0));
  }
}

TEST_CASE("a single depth-3 chain") {
  SynthConfig c;
  c.predicate_count = 3;
  c.tree_depth = 3;
  c.branching = 1;
  c.synonym_clusters = 0;
  c.contradiction_pairs = 0;
  c.scenes = 5;
  const auto w = generate_world(c);
  CHECK(w.vocab.size() == 3);
  CHECK(w.rules.entailments.size() == 2);
  CHECK(w.rules.contradictions.empty());
  CHECK(w.fine_ids == std::vector<int>{2});
  CHECK(ancestors(w, 2) == std::vector<int>{1, 0});
  CHECK(w.lattice.ent_depth(2) == 2);
}

TEST_CASE("no contradiction pairs means no Con rules") {
  auto c = small_config();
  c.contradiction_pairs = 0;
  const auto w = generate_world(c);
  CHECK(w.rules.contradictions.empty());
  for (std::size_t r = 0; r < w.vocab.size(); ++r) CHECK(w.con[r].empty());
}

TEST_CASE("truth is closed and contradiction-free; annotations and drops partition it") {
  auto c = small_config();
  c.unseen_fraction = 0.3;
  c.scenes = 150;
  const auto d = generate_dataset(c);
  const auto& w = d.world;
  std::size_t unseen = 0, collapsed = 0;
  for (std::size_t r = 0; r < w.vocab.size(); ++r) unseen += w.vocab.entries()[r].seen ? 0 : 1;
  CHECK(unseen > 0);
  for (const auto& s : d.scenes) {
    const auto truth = truth_of(s);
    for (const auto& t : truth) {
      for (int a : ancestors(w, t.pred)) CHECK(truth.count({t.subj, a, t.obj}));
      for (int b : w.con[static_cast<std::size_t>(t.pred)]) CHECK_FALSE(truth.count({t.subj, b, t.obj}));
    }
    std::set<Triplet> dropped;
    for (const auto& r : d.drops.at(s.id)) {
      CHECK(dropped.insert(r.triplet).second);
      collapsed += r.kind == DropKind::CollapsedToParent ? 1 : 0;
    }
    for (const auto& t : s.annotations.triplets()) {
      CHECK(truth.count(t));
      CHECK_FALSE(dropped.count(t));
      CHECK(w.vocab.entries()[static_cast<std::size_t>(t.pred)].seen);
    }
    CHECK(dropped.size() + s.annotations.size() == truth.size());
  }
  CHECK(collapsed > 0);
}

TEST_CASE("full collapse keeps only parents of drawn fine relations") {
  auto c = small_config();
  c.p_keep = 1.0;
  c.p_coarse = 1.0;
  const auto d = generate_dataset(c);
  for (const auto& s : d.scenes)
    for (const auto& r : d.drops.at(s.id)) {
      CHECK(r.kind == DropKind::CollapsedToParent);
      const int parent = d.world.parent[static_cast<std::size_t>(r.triplet.pred)];
      REQUIRE(parent >= 0);
      CHECK(s.annotations.contains({r.triplet.subj, parent, r.triplet.obj}));
    }
}

TEST_CASE("regeneration is byte-identical and independent of threads") {
  const auto c = small_config();
  const auto a = scratch("a"), b = scratch("b");
  const auto ma = write_dataset(generate_dataset(c, 1), a);
  const auto mb = write_dataset(generate_dataset(c, 4), b);
  CHECK(ma == mb);
  for (const char* f : {"scenes.jsonl", "vocab.json", "rules.json", "lattice.json", "droplog.jsonl", "manifest.json"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(ma["files"].size() == 5);
  CHECK(ma["seed"] == 1);

  auto other = c;
  other.seed = 2;
  const auto mc = write_dataset(generate_dataset(other), scratch("c"));
  CHECK(mc["files"][0]["sha256"] != ma["files"][0]["sha256"]);
}

TEST_CASE("zero scenes") {
  auto c = small_config();
  c.scenes = 0;
  const auto d = generate_dataset(c);
  CHECK(d.scenes.empty());
  const auto dir = scratch("empty");
  const auto m = write_dataset(d, dir);
  CHECK(m["scene_count"] == 0);
  CHECK(slurp(dir / "scenes.jsonl").empty());
}

TEST_CASE("config validation and overrides") {
  auto c = small_config();
  c.synonym_clusters = 30;
  CHECK_THROWS_AS(generate_world(c), DataError);
  c = small_config();
  c.contradiction_pairs = 50;
  CHECK_THROWS_AS(generate_world(c), DataError);
  c = small_config();
  CHECK_THROWS_AS(apply_synth_overrides(c, {{"nope", 1}}), DataError);
  CHECK_THROWS_AS(apply_synth_overrides(c, {{"p_keep", 1.5}}), DataError);
  c = small_config();
  CHECK_THROWS_AS(apply_synth_overrides(c, {{"scenes", "many"}}), DataError);
  c = small_config();
  apply_synth_overrides(c, {{"scenes", 7}, {"tau_sim", 0.8}});
  CHECK(c.scenes == 7);
  CHECK(c.tau_sim == 0.8);
  SynthConfig back;
  apply_synth_overrides(back, synth_config_to_json(c));
  CHECK(synth_config_to_json(back) == synth_config_to_json(c));
}
