#include "doctest.h"
#include "helpers.hpp"

#include "relic/completion.hpp"
#include "relic/forward.hpp"

#include <random>

using namespace relic;

namespace {

PairPosterior with_q(std::vector<std::pair<PredicateId, double>> qs) {
  PairPosterior pp;
  std::sort(qs.begin(), qs.end());
  for (auto [r, q] : qs) {
    PosteriorEntry e;
    e.predicate = r;
    e.q = q;
    pp.entries.push_back(e);
  }
  return pp;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Bench {
  PredicateVocabulary vocab = relic::test::random_vocab(10, 4, 21);
  RelationLattice lattice;
  ModelParams params;
  SceneInstance scene = relic::test::random_scene("s", 3, 3, 4);

  Bench() {
    LatticeRules rules;
    rules.entailments = {{"p1", "p0"}, {"p2", "p0"}};
    rules.contradictions = {{"p3", "p4"}, {"p1", "p5"}};
    lattice = build_lattice(vocab, rules, 0.6);
    Hyperparameters h;
    h.top_k = 4;
    params = init_params(ModelDims{3, 4, 4, 4, 5}, h, 9);
    params.weights.evidence = {1.3, 0.7, 0.4, 0.9, 1.1, 0.8};
    scene.annotations = AnnotationTable({{0, 1, 1}, {1, 3, 2}});
  }
};

}  // namespace

TEST_CASE("consistency term hand sums") {
  const RelationLattice lat(4, {{0, 1, EdgeKind::Sim, 0.8},
                                {1, 0, EdgeKind::Sim, 0.8},
                                {2, 3, EdgeKind::Sim, 0.5},
                                {3, 2, EdgeKind::Sim, 0.5},
                                {1, 2, EdgeKind::Ent, 0.9}});
  CHECK(consistency_term(RelationLattice(4, {}), with_q({{1, 1.0}}), 0) == 0.0);
  CHECK(consistency_term(lat, with_q({{1, 1.0}}), 0) == doctest::Approx(0.8));
  // node 2: sim neighbour 3 (w 0.5, q 0.4) and ent child 1 (w 0.9, q 1.0)
  CHECK(consistency_term(lat, with_q({{1, 1.0}, {3, 0.4}}), 2) == doctest::Approx(1.1));
  // untracked neighbours count as q = 0
  CHECK(consistency_term(lat, with_q({}), 2) == 0.0);
}

TEST_CASE("contradiction term hand sums") {
  const RelationLattice lat(3, {{0, 1, EdgeKind::Con, 0.6},
                                {1, 0, EdgeKind::Con, 0.6},
                                {0, 2, EdgeKind::Con, 0.4},
                                {2, 0, EdgeKind::Con, 0.4}});
  CHECK(contradiction_term(RelationLattice(3, {}), with_q({{1, 1.0}}), 0) == 0.0);
  const RelationLattice one(2, {{0, 1, EdgeKind::Con, 1.0}, {1, 0, EdgeKind::Con, 1.0}});
  CHECK(contradiction_term(one, with_q({{1, 1.0}}), 0) == 1.0);
  CHECK(contradiction_term(lat, with_q({{1, 0.5}, {2, 0.25}}), 0) == doctest::Approx(0.4));
}

TEST_CASE("negative reliability hand cases and bounds") {
  CHECK(negative_reliability(1.0, 3.0, -2.0, 1.0, 1.0) == 0.0);
  CHECK(negative_reliability(0.2, 1.0, 0.0, 1.0, 0.0) == doctest::Approx(0.8 * 0.731059).epsilon(1e-6));
  CHECK(negative_reliability(0.0, 0.7, 0.3, 0.0, 0.0) == 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(-3.0, 3.0);
  for (int t = 0; t < 500; ++t) {
    const double q = u(rng), n = 2 * u(rng), s = w(rng), eta = 2 * u(rng), mu = 2 * u(rng);
    const double rho = negative_reliability(q, n, s, eta, mu);
    CHECK(rho >= 0.0);
    CHECK(rho <= 1.0 - q + 1e-12);
    CHECK(negative_reliability(q, n, s + 0.3, eta, mu) <= rho);
    CHECK(negative_reliability(q, n + 0.3, s, eta, mu) >= rho);
  }
}

TEST_CASE("posterior formula hand cases") {
  // q = sigmoid(alpha s + beta c + gamma g - delta n)
  CHECK(logistic(1.0 * 0.0) == 0.5);
  CHECK(logistic(1.0 * 0.4 + 1.0 * 0.8 - 1.0 * 0.2) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("context scorer matches a scalar re-evaluation and clamps") {
  ContextWeights w;
  w.hidden.resize(3, 4);
  w.hidden << 0.1, -0.2, 0.3, 0.05, 0.2, 0.1, -0.1, 0.4, -0.3, 0.2, 0.1, 0.0;
  w.hidden_bias = Vector(3);
  w.hidden_bias << 0.01, -0.02, 0.03;
  w.out = Vector(3);
  w.out << 0.5, -0.4, 0.3;
  w.out_bias = 0.1;
  Vector ctx(2), rel(2);
  ctx << 0.7, -0.1;
  rel << 0.2, 0.9;
  const double xs[4] = {0.7, -0.1, 0.2, 0.9};
  double g = w.out_bias;
  for (int h = 0; h < 3; ++h) {
    double pre = w.hidden_bias[h];
    for (int k = 0; k < 4; ++k) pre += w.hidden(h, k) * xs[k];
    g += w.out[h] * std::tanh(pre);
  }
  CHECK(evaluate_context(w, ctx, rel).g == doctest::Approx(g).epsilon(1e-14));

  ContextWeights zero = w;
  zero.hidden.setZero();
  zero.hidden_bias.setZero();
  zero.out.setZero();
  zero.out_bias = 0.0;
  CHECK(evaluate_context(zero, ctx, rel).g == 0.0);

  ContextWeights big = zero;
  big.out_bias = 9.0;
  CHECK(evaluate_context(big, ctx, rel).g == kContextClamp);
  big.out_bias = -9.0;
  CHECK(evaluate_context(big, ctx, rel).g == -kContextClamp);
  CHECK_THROWS_AS(evaluate_context(w, ctx, Vector::Zero(3)), DataError);
}

TEST_CASE("density prior hand cases") {
  const DensityPrior def;
  // coincident full-image boxes
  CHECK(density_prior(def, {0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(3.0 * logistic(4.0)).epsilon(1e-12));
  CHECK(density_prior(def, {0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(2.946).epsilon(1e-3));
  DensityPrior flat;
  flat.overlap = flat.proximity = flat.salience = 0.0;
  CHECK(density_prior(flat, {0, 0, 0.1, 0.1}, {0.6, 0.6, 0.9, 0.8}) == 1.5);
  // tiny disjoint boxes at opposite corners: IoU 0, salience 0.005
  const double e = std::sqrt(0.005);
  const Box a{0, 0, e, e}, b{1 - e, 1 - e, 1, 1};
  const double dist = (1 - e);  // centre distance / sqrt 2
  CHECK(density_prior(def, a, b) == doctest::Approx(3.0 * logistic(0.0 + (1 - dist) + 0.005)).epsilon(1e-12));
  DensityPrior far = def;
  far.proximity = 0.0;
  CHECK(density_prior(far, a, b) == doctest::Approx(1.5037).epsilon(1e-4));
}

TEST_CASE("initial and refreshed tables follow the posterior contracts") {
  Bench b;
  const auto text = project_text(b.params, b.vocab);
  const auto prop = Propagation::from(b.params.hyper);
  const auto fwd = forward_scene(b.params, b.lattice, text, b.scene, prop);
  const CompletionOptions opts;
  const auto init = init_posteriors(b.params, b.lattice, b.scene, fwd, opts);
  const auto& ev = b.params.weights.evidence;
  for (const auto& pp : init.pairs)
    for (const auto& e : pp.entries) {
      if (e.annotated)
        CHECK(e.q == 1.0);
      else
        CHECK(e.q == doctest::Approx(logistic(ev.alpha * e.s_tilde)).epsilon(1e-14));
    }

  auto table = init;
  for (int it = 0; it < 4; ++it) {
    const auto next = update_posteriors(b.params, b.lattice, b.vocab, b.scene, fwd, table, opts);
    CHECK(check_posterior_invariants(next).empty());
    for (std::size_t k = 0; k < next.pairs.size(); ++k) {
      const auto& pp = next.pairs[k];
      const Vector ctx = context_summary(b.scene, fwd.pairs[k].feature, table, k, b.vocab);
      CHECK(pp.context == ctx);
      for (const auto& e : pp.entries) {
        CHECK(e.c == consistency_term(b.lattice, table.pairs[k], e.predicate));
        CHECK(e.n == contradiction_term(b.lattice, table.pairs[k], e.predicate));
        const double g = graph_context_term(b.params, ctx, b.vocab[e.predicate].embedding);
        CHECK(e.g == g);
        if (e.annotated) {
          CHECK(e.q == 1.0);
          CHECK(e.rho == 0.0);
        } else {
          const double q = logistic(ev.alpha * e.s_tilde + ev.beta * e.c + ev.gamma * e.g - ev.delta * e.n);
          CHECK(e.q == doctest::Approx(q).epsilon(1e-13));
          CHECK(e.rho == doctest::Approx((1 - q) * logistic(ev.eta * e.n - ev.mu * e.s_tilde)).epsilon(1e-13));
        }
      }
    }
    // Same previous table, same result.
    const auto again = update_posteriors(b.params, b.lattice, b.vocab, b.scene, fwd, table, opts);
    for (std::size_t k = 0; k < next.pairs.size(); ++k)
      for (std::size_t a = 0; a < next.pairs[k].entries.size(); ++a)
        CHECK(next.pairs[k].entries[a].q == again.pairs[k].entries[a].q);
    table = next;
  }
}

TEST_CASE("toggles switch completion and reliable negatives off") {
  Bench b;
  const auto text = project_text(b.params, b.vocab);
  const auto fwd = forward_scene(b.params, b.lattice, text, b.scene, Propagation::from(b.params.hyper));
  CompletionOptions off;
  off.latent_completion = false;
  off.reliable_negatives = false;
  auto t = init_posteriors(b.params, b.lattice, b.scene, fwd, off);
  t = update_posteriors(b.params, b.lattice, b.vocab, b.scene, fwd, t, off);
  for (const auto& pp : t.pairs)
    for (const auto& e : pp.entries) {
      CHECK(e.q == (e.annotated ? 1.0 : 0.0));
      CHECK(e.rho == 1.0 - e.q);
    }
  CompletionOptions blind;
  blind.use_annotations = false;
  const auto u = init_posteriors(b.params, b.lattice, b.scene, fwd, blind);
  for (const auto& pp : u.pairs)
    for (const auto& e : pp.entries) CHECK_FALSE(e.annotated);
}

TEST_CASE("context mean is zero when neighbouring pairs carry no weight") {
  Bench b;
  const auto text = project_text(b.params, b.vocab);
  const auto fwd = forward_scene(b.params, b.lattice, text, b.scene, Propagation::from(b.params.hyper));
  auto t = init_posteriors(b.params, b.lattice, b.scene, fwd, {});
  for (auto& pp : t.pairs) pp.candidates.clear();
  const Vector ctx = context_summary(b.scene, fwd.pairs[0].feature, t, 0, b.vocab);
  CHECK(ctx.tail(b.vocab.dim()) == Vector::Zero(b.vocab.dim()));
  CHECK(ctx.head(kCategoryDim) == category_embedding(b.scene.objects[0].category));
  CHECK(category_embedding("table").norm() == doctest::Approx(1.0));
}

TEST_CASE("invariant checker flags broken entries") {
  PosteriorTable t;
  t.scene_id = "x";
  PairPosterior pp;
  PosteriorEntry a;
  a.predicate = 0;
  a.annotated = true;
  a.q = 0.9;
  PosteriorEntry b;
  b.predicate = 1;
  b.q = 0.6;
  b.rho = 0.5;
  pp.entries = {a, b};
  t.pairs.push_back(pp);
  CHECK(check_posterior_invariants(t).size() == 2);
}
