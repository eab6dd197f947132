#include "doctest.h"
#include "helpers.hpp"

#include "relic/learning.hpp"

#include <cmath>

using namespace relic;

namespace {

struct Fixture {
  PredicateVocabulary vocab = relic::test::random_vocab(12, 4, 31);
  RelationLattice lattice;
  ModelParams params;
  std::vector<SceneInstance> scenes;

  explicit Fixture(int n_scenes = 2, std::uint64_t seed = 3) {
    LatticeRules rules;
    rules.entailments = {{"p1", "p0"}, {"p2", "p0"}, {"p3", "p1"}};
    rules.contradictions = {{"p4", "p5"}, {"p2", "p6"}};
    lattice = build_lattice(vocab, rules, 0.6);
    Hyperparameters h;
    h.top_k = 5;
    params = init_params(ModelDims{3, 4, 4, 4, 5}, h, seed);
    for (int i = 0; i < n_scenes; ++i) {
      auto s = relic::test::random_scene("s" + std::to_string(i), 3, 3, seed * 10 + i);
      s.annotations = AnnotationTable({{0, 1, 1}, {0, 0, 1}, {1, 4, 2}, {2, 7, 0}});
      scenes.push_back(std::move(s));
    }
  }

  std::vector<const SceneInstance*> ptrs() const {
    std::vector<const SceneInstance*> p;
    for (const auto& s : scenes) p.push_back(&s);
    return p;
  }
};

std::vector<const PosteriorTable*> ptrs(const std::vector<PosteriorTable>& t) {
  std::vector<const PosteriorTable*> p;
  for (const auto& x : t) p.push_back(&x);
  return p;
}

double softplus_ref(double x) { return std::log(1.0 + std::exp(x)); }

}  // namespace

TEST_CASE("risk hand cases") {
  CHECK(positive_risk({0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(positive_risk({20.0}) < 1e-8);
  CHECK(positive_risk({0.0, 0.0}) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(positive_risk({}) == 0.0);
  CHECK(unlabeled_risk({{0.3, 0.0, 0.0}, {-1.0, 0.0, 0.0}}) == 0.0);
  CHECK(unlabeled_risk({{0.0, 1.0, 0.0}}) == doctest::Approx(std::log(2.0)));
  CHECK(unlabeled_risk({{0.0, 0.5, 0.5}}) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(unlabeled_risk({}) == 0.0);
}

TEST_CASE("fully annotated candidates: the q-weighted term equals the positive risk") {
  const std::vector<double> s{0.3, -0.2, 0.9, 1.4};
  std::vector<UnlabeledTerm> terms;
  for (double x : s) terms.push_back({x, 1.0, 0.0});
  CHECK(unlabeled_risk(terms) == doctest::Approx(positive_risk(s)).epsilon(1e-15));
}

TEST_CASE("lattice and compactness hand cases") {
  const RelationLattice ent(2, {{0, 1, EdgeKind::Ent, 0.9}});
  CHECK(pair_lattice_loss(ent, {0.7, 0.9}) == 0.0);
  CHECK(pair_lattice_loss(ent, {0.9, 0.7}) == doctest::Approx(0.2));
  const RelationLattice con(2, {{0, 1, EdgeKind::Con, 1.0}, {1, 0, EdgeKind::Con, 1.0}});
  CHECK(pair_lattice_loss(con, {0.5, 0.5}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(pair_lattice_loss(con, {0.5}), DataError);
  CHECK(pair_compactness_loss(1.0, 1.0) == 0.0);
  CHECK(pair_compactness_loss(1.2, 1.0) == doctest::Approx(0.2));
  CHECK(pair_compactness_loss(0.0, 1.7) == 1.7);
}

TEST_CASE("total loss composition") {
  const auto zero = total_loss(0, 0, 0, 0, 1.0, 0.1, 0.01);
  CHECK(zero.L_total == 0.0);
  const auto l = total_loss(0.6, 0.4, 2.0, 3.0, 1.0, 0.1, 0.01);
  CHECK(l.L_PU == 1.0);
  CHECK(l.L_total == doctest::Approx(1.23));
  const auto bare = total_loss(0.6, 0.4, 2.0, 3.0, 1.0, 0.0, 0.0);
  CHECK(bare.L_total == bare.L_PU);
}

TEST_CASE("batch objective matches independent loss oracles") {
  Fixture f;
  const auto prop = Propagation::from(f.params.hyper);
  const auto tables = build_posterior_tables(f.params, f.lattice, f.vocab, f.ptrs(), prop, {}, 2);
  ObjectiveOptions opts;
  opts.prop = prop;
  const auto obj = evaluate_objective(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, false);

  std::vector<double> pos;
  std::vector<UnlabeledTerm> unl;
  double lat = 0.0, cmp = 0.0;
  for (const auto& t : tables)
    for (const auto& pp : t.pairs) {
      std::vector<double> q(f.vocab.size(), 0.0);
      double qsum = 0.0;
      for (const auto& e : pp.entries) {
        if (e.annotated)
          pos.push_back(e.s_tilde);
        else
          unl.push_back({e.s_tilde, e.q, e.rho});
        q[static_cast<std::size_t>(e.predicate)] = e.q;
        if (e.candidate) qsum += e.q;
      }
      lat += pair_lattice_loss(f.lattice, q);
      cmp += pair_compactness_loss(qsum, pp.density_prior);
    }
  const double n = static_cast<double>(tables.size());
  CHECK(obj.loss.R_p_plus == doctest::Approx(positive_risk(pos)).epsilon(1e-12));
  CHECK(obj.loss.R_u == doctest::Approx(unlabeled_risk(unl)).epsilon(1e-12));
  CHECK(obj.loss.L_lat == doctest::Approx(lat / n).epsilon(1e-12));
  CHECK(obj.loss.L_cmp == doctest::Approx(cmp / n).epsilon(1e-12));
  CHECK(obj.loss.positives == pos.size());
  CHECK(obj.loss.unlabeled == unl.size());
  const auto& h = f.params.hyper;
  CHECK(obj.loss.L_PU == obj.loss.R_p_plus + h.lambda_u * obj.loss.R_u);
  CHECK(obj.loss.L_total == obj.loss.L_PU + h.lambda_lat * obj.loss.L_lat + h.lambda_cmp * obj.loss.L_cmp);
}

TEST_CASE("warmup objective uses only background negatives") {
  Fixture f;
  const auto tables = build_posterior_tables(f.params, f.lattice, f.vocab, f.ptrs(), Propagation::none(), {}, 0);
  ObjectiveOptions opts;
  opts.warmup = true;
  const auto obj = evaluate_objective(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, false);
  double u = 0.0;
  std::size_t n = 0;
  for (const auto& t : tables)
    for (const auto& pp : t.pairs)
      for (const auto& e : pp.entries)
        if (e.background) {
          u += softplus_ref(e.s);
          ++n;
        }
  CHECK(obj.loss.unlabeled == n);
  if (n) CHECK(obj.loss.R_u == doctest::Approx(u / static_cast<double>(n)).epsilon(1e-12));
  CHECK(obj.loss.L_lat == 0.0);
  CHECK(obj.loss.L_cmp == 0.0);
}

TEST_CASE("empty positive set is flagged and contributes zero") {
  Fixture f;
  for (auto& s : f.scenes) s.annotations = AnnotationTable();
  const auto prop = Propagation::from(f.params.hyper);
  const auto tables = build_posterior_tables(f.params, f.lattice, f.vocab, f.ptrs(), prop, {}, 1);
  ObjectiveOptions opts;
  opts.prop = prop;
  const auto obj = evaluate_objective(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, false);
  CHECK(obj.loss.empty_positive);
  CHECK(obj.loss.R_p_plus == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  Fixture f;
  const auto prop = Propagation::from(f.params.hyper);
  const auto tables = build_posterior_tables(f.params, f.lattice, f.vocab, f.ptrs(), prop, {}, 1);

  SUBCASE("recompute (default)") {
    ObjectiveOptions opts;
    opts.prop = prop;
    const auto r = check_gradients(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts);
    CHECK(r.coordinates == f.params.weights.size());
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.max_abs_error_zero_grad < 1e-8);
  }
  SUBCASE("frozen q") {
    ObjectiveOptions opts;
    opts.prop = prop;
    opts.q_gradient = QGradientMode::Frozen;
    const auto r = check_gradients(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.max_abs_error_zero_grad < 1e-8);
  }
  SUBCASE("live q") {
    ObjectiveOptions opts;
    opts.prop = prop;
    opts.q_gradient = QGradientMode::Live;
    const auto r = check_gradients(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("warmup") {
    ObjectiveOptions opts;
    opts.warmup = true;
    const auto r = check_gradients(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("linear scorer only, single positive") {
    Fixture g(1);
    g.scenes[0].annotations = AnnotationTable({{0, 2, 1}});
    auto p = g.params;
    p.hyper.lambda_sim = p.hyper.lambda_ent = p.hyper.lambda_con = 0.0;
    p.weights.evidence.gamma = 0.0;
    const auto t = build_posterior_tables(p, g.lattice, g.vocab, g.ptrs(), Propagation::none(), {}, 1);
    ObjectiveOptions opts;
    const auto r = check_gradients(p, g.lattice, g.vocab, g.ptrs(), ptrs(t), opts);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("sampled coordinates") {
    ObjectiveOptions opts;
    opts.prop = prop;
    const auto r = check_gradients(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, 1e-5, 40, 9);
    CHECK(r.coordinates == 40);
    CHECK(r.entries.size() == 40);
  }
}

TEST_CASE("frozen targets: the objective reads q and rho from the table") {
  Fixture f;
  const auto prop = Propagation::from(f.params.hyper);
  auto tables = build_posterior_tables(f.params, f.lattice, f.vocab, f.ptrs(), prop, {}, 1);
  ObjectiveOptions opts;
  opts.prop = prop;
  const auto a = evaluate_objective(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, false);
  for (auto& t : tables)
    for (auto& pp : t.pairs)
      for (auto& e : pp.entries)
        if (!e.annotated) {
          e.q *= 0.5;
          e.rho = 1.0 - e.q;
        }
  const auto b = evaluate_objective(f.params, f.lattice, f.vocab, f.ptrs(), ptrs(tables), opts, false);
  CHECK(a.loss.R_u != b.loss.R_u);
  // L_lat is recomputed from the current parameters, so editing the table's q leaves it alone.
  CHECK(a.loss.L_lat == b.loss.L_lat);
}

TEST_CASE("training: zero steps, determinism and descent") {
  Fixture f(1, 5);
  TrainConfig none;
  none.warmup_steps = 0;
  none.joint_steps = 0;
  const auto r0 = train(f.scenes, f.vocab, f.lattice, f.params, none);
  CHECK(r0.params.weights.flatten() == f.params.weights.flatten());
  CHECK(r0.log.empty());

  TrainConfig c;
  c.warmup_steps = 0;
  c.joint_steps = 200;
  c.learning_rate = 0.2;
  c.batch_size = 1;
  std::vector<std::string> problems;
  const auto a = train(f.scenes, f.vocab, f.lattice, f.params, c,
                       [&](const StepRecord&, const std::vector<const PosteriorTable*>& used) {
                         for (const auto* t : used)
                           for (auto& p : check_posterior_invariants(*t)) problems.push_back(p);
                       });
  REQUIRE_FALSE(a.diverged);
  REQUIRE(a.log.size() == 200);
  CHECK(problems.empty());
  CHECK(a.log.back().loss.L_total < a.log.front().loss.L_total);
  const auto b = train(f.scenes, f.vocab, f.lattice, f.params, c);
  CHECK(a.params.weights.flatten() == b.params.weights.flatten());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss.L_total == b.log[i].loss.L_total);

  const auto csv = training_log_csv(a.log);
  CHECK(csv.rfind("step,stage,R_p_plus,R_u,L_PU,L_lat,L_cmp,L_total\n", 0) == 0);
}

TEST_CASE("evidence weights stay non-negative and thread count does not change results") {
  Fixture f(3, 8);
  TrainConfig c;
  c.warmup_steps = 5;
  c.joint_steps = 30;
  c.learning_rate = 0.5;
  c.batch_size = 2;
  const auto one = train(f.scenes, f.vocab, f.lattice, f.params, c);
  c.threads = 3;
  const auto three = train(f.scenes, f.vocab, f.lattice, f.params, c);
  CHECK(one.params.weights.flatten() == three.params.weights.flatten());
  const auto& e = one.params.weights.evidence;
  for (double v : {e.alpha, e.beta, e.gamma, e.delta, e.eta, e.mu}) CHECK(v >= 0.0);
}

TEST_CASE("training config validation and overrides") {
  TrainConfig c;
  CHECK_THROWS_AS(apply_train_overrides(c, {{"learning_rate", 0.0}}), DataError);
  TrainConfig d;
  CHECK_THROWS_AS(apply_train_overrides(d, {{"bogus", 1}}), DataError);
  TrainConfig e;
  apply_train_overrides(e, {{"joint_steps", 3}, {"q_gradient", "frozen"}});
  CHECK(e.joint_steps == 3);
  CHECK(e.q_gradient == QGradientMode::Frozen);
  CHECK_THROWS_AS(q_gradient_mode_from_string("sometimes"), DataError);
  Fixture f(1);
  CHECK_THROWS_AS(train({}, f.vocab, f.lattice, f.params, TrainConfig{}), DataError);
}
