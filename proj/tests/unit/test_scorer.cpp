#include "doctest.h"
#include "helpers.hpp"

#include "relic/forward.hpp"
#include "relic/scorer.hpp"

#include <algorithm>
#include <numeric>

using namespace relic;
using relic::test::unit;

namespace {

ProjectedText text_of(const std::vector<Vector>& cols) {
  ProjectedText t;
  t.columns.resize(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < cols.size(); ++r) t.columns.col(static_cast<Eigen::Index>(r)) = cols[r];
  t.norms = t.columns.colwise().norm().transpose();
  return t;
}

PairProjection joint_of(Vector u) {
  PairProjection p;
  p.pair_repr = u;
  p.joint = u;
  p.joint_norm = u.norm();
  return p;
}

SceneInstance two_boxes(Box a, Box b) {
  SceneInstance s;
  s.id = "g";
  s.objects = {relic::test::object(0, "a", a, Vector::Constant(2, 0.5)),
               relic::test::object(1, "b", b, Vector::Constant(2, -0.5))};
  return s;
}

}  // namespace

TEST_CASE("iou and geometry hand cases") {
  const Box unit_box{0, 0, 1, 1};
  const auto same = pair_geometry(unit_box, unit_box);
  CHECK(same[0] == 0.0);
  CHECK(same[1] == 0.0);
  CHECK(same[4] == 1.0);
  CHECK(same[5] == 0.0);
  CHECK(box_iou({0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}) == 0.0);
  CHECK(box_iou({0, 0, 1, 1}, {0.25, 0.25, 0.75, 0.75}) == doctest::Approx(0.25));
}

TEST_CASE("geometry symmetry under swapping subject and object") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int t = 0; t < 100; ++t) {
    const Box a{u(rng), u(rng), 0.5 + u(rng), 0.5 + u(rng)};
    const Box b{u(rng), u(rng), 0.5 + u(rng), 0.5 + u(rng)};
    const auto ab = pair_geometry(a, b);
    const auto ba = pair_geometry(b, a);
    CHECK(ab[0] == doctest::Approx(-ba[0]));
    CHECK(ab[1] == doctest::Approx(-ba[1]));
    CHECK(ab[2] == doctest::Approx(-ba[2]));
    CHECK(ab[3] == doctest::Approx(-ba[3]));
    CHECK(ab[4] == doctest::Approx(ba[4]));
    CHECK(ab[5] == doctest::Approx(ba[5]));
    CHECK(ab[4] >= 0.0);
    CHECK(ab[4] <= 1.0);
  }
}

TEST_CASE("pair feature assembly") {
  auto s = two_boxes({0, 0, 0.5, 0.5}, {0.25, 0.25, 1, 1});
  const auto pf = build_pair_feature(s, 0, 1);
  REQUIRE(pf.input.size() == 3 * 2 + kGeometryDim);
  CHECK(pf.union_feature == Vector::Constant(2, 0.5));  // element-wise max
  s.union_features[{0, 1}] = Vector::Constant(2, 7.0);
  CHECK(build_pair_feature(s, 0, 1).union_feature == Vector::Constant(2, 7.0));
  CHECK_THROWS_AS(build_pair_feature(s, 0, 0), DataError);
  CHECK_THROWS_AS(build_pair_feature(s, 0, 5), DataError);
}

TEST_CASE("cosine score hand cases") {
  const auto text = text_of({unit({1, 1}), Vector::Unit(2, 1), Vector::Unit(2, 0) * 3.0});
  const Vector s = compatibility_scores(joint_of(Vector::Unit(2, 0)), text);
  CHECK(s[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(s[1] == 0.0);
  CHECK(s[2] == doctest::Approx(1.0));

  ModelDims d{2, 2, 2, 2, 4};
  auto params = init_params(d, {}, 1);
  params.weights.pair_proj.setZero();
  auto scene = two_boxes({0, 0, 0.5, 0.5}, {0.2, 0.2, 0.9, 0.9});
  const auto vocab = relic::test::random_vocab(3, 2, 1);
  CHECK_THROWS_AS(compatibility_scores(params, build_pair_feature(scene, 0, 1), vocab), NumericalError);
  const auto wrong = relic::test::random_vocab(3, 3, 1);
  params = init_params(d, {}, 1);
  CHECK_THROWS_AS(compatibility_scores(params, build_pair_feature(scene, 0, 1), wrong), DataError);
}

TEST_CASE("raw scores are bounded by one") {
  ModelDims d{2, 5, 6, 4, 3};
  const auto vocab = relic::test::random_vocab(40, 5, 3);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto params = init_params(d, {}, 100 + t);
    const auto scene = relic::test::random_scene("b", 3, 2, 7 + t);
    const Vector s = compatibility_scores(params, build_pair_feature(scene, 0, 2), vocab);
    CHECK(s.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("candidate proposal") {
  Vector s(3);
  s << 0.9, 0.1, 0.5;
  CHECK(propose_candidates(s, 2) == std::vector<PredicateId>{0, 2});
  CHECK(propose_candidates(s, 3).size() == 3);
  CHECK(propose_candidates(s, 10).size() == 3);
  CHECK(propose_candidates(Vector::Constant(4, 0.3), 2) == std::vector<PredicateId>{0, 1});
  CHECK_THROWS_AS(propose_candidates(s, 0), DataError);
}

TEST_CASE("candidate monotonicity in K and full-sort oracle") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    Vector s = relic::test::random_vector(25, rng);
    s[3] = s[7];  // a tie
    std::vector<PredicateId> order(25);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
    for (int k = 1; k <= 25; ++k) {
      const auto c = propose_candidates(s, k);
      CHECK(c == std::vector<PredicateId>(order.begin(), order.begin() + k));
      if (k > 1) {
        const auto prev = propose_candidates(s, k - 1);
        CHECK(std::equal(prev.begin(), prev.end(), c.begin()));
      }
    }
  }
}

TEST_CASE("forward pass is deterministic and annotated recall is total with K = |vocab|") {
  const auto vocab = relic::test::random_vocab(12, 4, 8);
  const auto lat = build_lattice(vocab, {}, 0.8);
  ModelDims d{3, 4, 4, 4, 3};
  Hyperparameters h;
  h.top_k = 12;
  const auto params = init_params(d, h, 5);
  auto scene = relic::test::random_scene("c", 3, 3, 2);
  scene.annotations = AnnotationTable({{0, 4, 1}, {2, 9, 0}});
  const auto text = project_text(params, vocab);
  const auto a = forward_scene(params, lat, text, scene, Propagation::from(h));
  const auto b = forward_scene(params, lat, text, scene, Propagation::from(h));
  REQUIRE(a.pairs.size() == 6);
  std::size_t found = 0;
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    CHECK(a.pairs[k].candidates == b.pairs[k].candidates);
    CHECK(a.pairs[k].calibrated == b.pairs[k].calibrated);
    for (PredicateId r : scene.annotations.predicates(a.pairs[k].feature.pair))
      found += std::count(a.pairs[k].candidates.begin(), a.pairs[k].candidates.end(), r);
  }
  CHECK(found == scene.annotations.size());
}
