#include "doctest.h"
#include "helpers.hpp"

#include "relic/decoder.hpp"

#include <random>
#include <set>

using namespace relic;

namespace {

// 0 "in front of" -con- 1 "behind"; 2 "resting on" -sim- 3 "supported by";
// 2 -> 4 "on", 3 -> 4; 5 "standing on" -> 4; 5 -sim- 6 "upright on" (6 has no parent)
RelationLattice spatial() {
  return RelationLattice(7, {{0, 1, EdgeKind::Con, 0.5},
                             {1, 0, EdgeKind::Con, 0.5},
                             {2, 3, EdgeKind::Sim, 0.9},
                             {3, 2, EdgeKind::Sim, 0.9},
                             {2, 4, EdgeKind::Ent, 0.8},
                             {3, 4, EdgeKind::Ent, 0.8},
                             {5, 4, EdgeKind::Ent, 0.7},
                             {5, 6, EdgeKind::Sim, 0.9},
                             {6, 5, EdgeKind::Sim, 0.9}});
}

RelationLattice random_lattice(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::set<std::pair<int, int>> used;
  std::vector<LatticeEdge> edges;
  auto fresh = [&](int a, int b) { return a != b && used.insert({std::min(a, b), std::max(a, b)}).second; };
  for (int k = 0; k < n; ++k) {
    const int a = pick(rng), b = pick(rng);
    if (!fresh(a, b)) continue;
    switch (k % 3) {
      case 0: edges.push_back({a, b, EdgeKind::Sim, 0.9}); edges.push_back({b, a, EdgeKind::Sim, 0.9}); break;
      case 1: edges.push_back({a, b, EdgeKind::Con, 0.5}); edges.push_back({b, a, EdgeKind::Con, 0.5}); break;
      default: edges.push_back({std::max(a, b), std::min(a, b), EdgeKind::Ent, 0.8}); break;  // acyclic: high -> low
    }
  }
  return RelationLattice(static_cast<std::size_t>(n), std::move(edges));
}

SceneScores random_scores(std::mt19937_64& rng, int n, int pairs, int tracked) {
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  std::uniform_int_distribution<int> pick(0, n - 1);
  SceneScores s;
  s.scene_id = "r";
  for (int p = 0; p < pairs; ++p) {
    PairScores ps;
    ps.pair = {p, p + 1};
    while (static_cast<int>(ps.s_hat.size()) < tracked) ps.s_hat[pick(rng)] = std::round(u(rng) * 20) / 20;  // ties
    s.pairs.push_back(ps);
  }
  return s;
}

std::set<Triplet> triplets(const SceneGraph& g) {
  std::set<Triplet> out;
  for (const auto& t : g.triplets) out.insert(t.triplet());
  return out;
}

}  // namespace

TEST_CASE("final score hand cases") {
  CHECK(final_score(0.4, 0.8, 0.0) == 0.4);
  CHECK(final_score(0.4, 0.8, 0.5) == doctest::Approx(0.8));
  CHECK(final_score(0.2, 1.0, 0.5) == doctest::Approx(0.7));
  PosteriorTable t;
  t.scene_id = "x";
  PairPosterior pp;
  PosteriorEntry e;
  e.predicate = 3;
  e.s_tilde = 0.2;
  e.q = 1.0;
  pp.entries.push_back(e);
  t.pairs.push_back(pp);
  CHECK(final_scores(t, 0.5).pairs[0].s_hat.at(3) == doctest::Approx(0.7));
  CHECK_THROWS_AS(final_scores(t, -1.0), DataError);
}

TEST_CASE("contradiction keeps the higher score") {
  const auto lat = spatial();
  const DecodeConfig c;
  CHECK(decode_pair({{0, 0.7}, {1, 0.4}}, lat, c) == std::vector<PredicateId>{0});
  CHECK(decode_pair({{0, 0.5}, {1, 0.5}}, lat, c) == std::vector<PredicateId>{0});  // tie: lower index
  CHECK(decode_pair({{1, 0.6}}, lat, c) == std::vector<PredicateId>{1});
}

TEST_CASE("equal-depth synonyms keep the higher score and add the parent") {
  const auto lat = spatial();
  DecodeConfig c;
  CHECK(decode_pair({{2, 0.8}, {3, 0.75}, {4, 0.2}}, lat, c) == std::vector<PredicateId>{2, 4});
  c.keep_parent = false;
  CHECK(decode_pair({{2, 0.8}, {3, 0.75}, {4, 0.2}}, lat, c) == std::vector<PredicateId>{2});
  c.keep_parent = true;
  // parent below theta / 2 is not added
  CHECK(decode_pair({{2, 0.8}, {4, 0.1}}, lat, c) == std::vector<PredicateId>{2});
}

TEST_CASE("a strictly more specific synonym survives next to a coarser one") {
  const auto lat = spatial();
  const DecodeConfig c;
  // 6 has depth 0, 5 has depth 1: 5 survives below 6, and its parent 4 is added.
  CHECK(decode_pair({{6, 0.9}, {5, 0.8}, {4, 0.2}}, lat, c) == std::vector<PredicateId>{6, 5, 4});
  // The reverse order drops the coarser synonym.
  CHECK(decode_pair({{5, 0.9}, {6, 0.8}}, lat, c) == std::vector<PredicateId>{5});
}

TEST_CASE("cap, threshold and the lattice-free path") {
  const auto lat = spatial();
  DecodeConfig c;
  c.per_pair_cap = 1;
  CHECK(decode_pair({{0, 0.9}, {2, 0.8}}, lat, c) == std::vector<PredicateId>{0});
  c.per_pair_cap = 5;
  c.threshold = 0.85;
  CHECK(decode_pair({{0, 0.9}, {2, 0.8}}, lat, c) == std::vector<PredicateId>{0});
  DecodeConfig off;
  off.lattice_guided = false;
  CHECK(decode_pair({{0, 0.7}, {1, 0.4}, {2, 0.8}, {3, 0.75}}, lat, off) == std::vector<PredicateId>{2, 3, 0, 1});
  DecodeConfig bad;
  bad.per_pair_cap = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("decoder invariants on random tables") {
  std::mt19937_64 rng(17);
  std::size_t checked = 0;
  for (int t = 0; t < 300; ++t) {
    const auto lat = random_lattice(rng, 20);
    const auto scores = random_scores(rng, 20, 4, 12);
    for (bool keep : {true, false}) {
      DecodeConfig c;
      c.keep_parent = keep;
      const auto g = decode_graph(scores, lat, c);

      // Sorted output, no Con pair on the same ordered pair.
      for (std::size_t i = 1; i < g.triplets.size(); ++i) CHECK(g.triplets[i - 1].score >= g.triplets[i].score);
      for (const auto& a : g.triplets)
        for (const auto& b : g.triplets)
          if (a.subj == b.subj && a.obj == b.obj) CHECK_FALSE(lat.con_connected(a.pred, b.pred));

      // Threshold monotonicity.
      std::set<Triplet> prev = triplets(g);
      for (double th : {0.4, 0.5, 0.8}) {
        c.threshold = th;
        const auto next = triplets(decode_graph(scores, lat, c));
        for (const auto& x : next) CHECK(prev.count(x));
        prev = next;
      }
      c.threshold = 0.3;

      // Idempotence.
      const auto again = decode_graph(restrict_to_graph(scores, g), lat, c);
      CHECK(triplets(again) == triplets(g));

      // Score dominance: a Con partner that outscores a kept predicate was
      // itself removed by a third predicate scoring at least as high.
      for (const auto& ps : scores.pairs) {
        const auto kept = decode_pair(ps.s_hat, lat, c);
        for (PredicateId k : kept)
          for (const auto& nb : lat.con(k)) {
            if (!ps.s_hat.count(nb.id) || ps.s_hat.at(nb.id) <= ps.s_hat.at(k)) continue;
            bool beaten = false;
            for (const auto& nb2 : lat.con(nb.id))
              if (nb2.id != k && ps.s_hat.count(nb2.id) && ps.s_hat.at(nb2.id) >= ps.s_hat.at(nb.id)) beaten = true;
            CHECK(beaten);
          }
      }
      ++checked;
    }
  }
  CHECK(checked == 600);
}

TEST_CASE("graph json round trip and rendering") {
  const auto vocab = relic::test::random_vocab(7, 3, 2);
  SceneScores s;
  s.scene_id = "z";
  s.pairs.push_back({{0, 1}, {{0, 0.9}, {2, 0.5}}});
  s.pairs.push_back({{1, 0}, {{5, 0.7}}});
  const auto g = decode_graph(s, spatial(), {});
  REQUIRE(g.triplets.size() == 3);
  CHECK(g.triplets[0].pred == 0);
  CHECK(g.triplets[1].pred == 5);
  const auto back = graph_from_json(graph_to_json(g, vocab), vocab);
  CHECK(triplets(back) == triplets(g));
  CHECK(render_graph(g, vocab, nullptr).find("p5") != std::string::npos);
  CHECK_THROWS_AS(graph_from_json(nlohmann::json{{"scene_id", "z"}}, vocab), DataError);
}
