#include "relic/completion.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace relic {

const PosteriorEntry* PairPosterior::find(PredicateId r) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), r,
                             [](const PosteriorEntry& e, PredicateId id) { return e.predicate < id; });
  return it != entries.end() && it->predicate == r ? &*it : nullptr;
}

double PairPosterior::q_of(PredicateId r) const {
  const auto* e = find(r);
  return e ? e->q : 0.0;
}

Vector category_embedding(const std::string& category) {
  std::mt19937_64 rng(fnv1a64(category) ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(kCategoryDim);
  for (int k = 0; k < kCategoryDim; ++k) v[k] = normal(rng);
  return v / v.norm();
}

double consistency_term(const RelationLattice& lattice, const PairPosterior& prev, PredicateId r) {
  double c = 0.0;
  for (const auto& nb : lattice.sim(r)) c += nb.weight * prev.q_of(nb.id);
  for (const auto& nb : lattice.children(r)) c += nb.weight * prev.q_of(nb.id);
  return c;
}

double contradiction_term(const RelationLattice& lattice, const PairPosterior& prev, PredicateId r) {
  double n = 0.0;
  for (const auto& nb : lattice.con(r)) n += nb.weight * prev.q_of(nb.id);
  return n;
}

double negative_reliability(double q, double n, double s_tilde, double eta, double mu) {
  return (1.0 - q) * sigmoid(eta * n - mu * s_tilde);
}

namespace {

struct WeightedSum {
  Vector sum;
  double weight = 0.0;
};

std::vector<WeightedSum> candidate_sums(const PosteriorTable& table, const PredicateVocabulary& vocab) {
  const Matrix& T = vocab.embedding_matrix();
  std::vector<WeightedSum> out(table.pairs.size());
  for (std::size_t k = 0; k < table.pairs.size(); ++k) {
    out[k].sum = Vector::Zero(vocab.dim());
    for (PredicateId r : table.pairs[k].candidates) {
      const double q = table.pairs[k].q_of(r);
      out[k].sum += q * T.row(r).transpose();
      out[k].weight += q;
    }
  }
  return out;
}

bool shares_endpoint(OrderedPair a, OrderedPair b) {
  return a.subj == b.subj || a.subj == b.obj || a.obj == b.subj || a.obj == b.obj;
}

Vector assemble_context(const SceneInstance& scene, const PairFeature& feature, const Vector& mean) {
  Vector z(2 * kCategoryDim + kGeometryDim + mean.size());
  z << category_embedding(scene.object(feature.pair.subj).category),
      category_embedding(scene.object(feature.pair.obj).category),
      Eigen::Map<const Vector>(feature.geometry.data(), kGeometryDim), mean;
  return z;
}

Vector context_from_sums(const SceneInstance& scene, const PairFeature& feature, const PosteriorTable& prev,
                         const std::vector<WeightedSum>& sums, std::size_t index, int dim) {
  Vector acc = Vector::Zero(dim);
  double weight = 0.0;
  const OrderedPair self = prev.pairs[index].pair;
  for (std::size_t k = 0; k < prev.pairs.size(); ++k) {
    if (k == index || !shares_endpoint(self, prev.pairs[k].pair)) continue;
    acc += sums[k].sum;
    weight += sums[k].weight;
  }
  if (weight > 0.0) acc /= weight;
  return assemble_context(scene, feature, acc);
}

void require_aligned(const SceneInstance& scene, const SceneForward& forward, const PosteriorTable* prev) {
  const auto pairs = scene.ordered_pairs();
  if (forward.pairs.size() != pairs.size()) throw DataError("forward pass does not match scene '" + scene.id + "'");
  if (prev && prev->pairs.size() != pairs.size())
    throw DataError("previous posterior table does not match scene '" + scene.id + "'");
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (forward.pairs[k].feature.pair != pairs[k] || (prev && prev->pairs[k].pair != pairs[k]))
      throw DataError("pair order mismatch in scene '" + scene.id + "'");
  }
}

std::vector<PosteriorEntry> tracked_entries(const RelationLattice& lattice, const SceneInstance& scene,
                                            const PairForward& pf, const CompletionOptions& opts) {
  std::set<PredicateId> annotated;
  if (opts.use_annotations)
    for (PredicateId r : scene.annotations.predicates(pf.feature.pair)) annotated.insert(r);
  std::set<PredicateId> ids(pf.candidates.begin(), pf.candidates.end());
  ids.insert(annotated.begin(), annotated.end());
  const std::set<PredicateId> cand(pf.candidates.begin(), pf.candidates.end());
  std::vector<PosteriorEntry> entries;
  entries.reserve(ids.size());
  for (PredicateId r : ids) {
    PosteriorEntry e;
    e.predicate = r;
    e.annotated = annotated.count(r) > 0;
    e.candidate = cand.count(r) > 0;
    if (!e.annotated && e.candidate)
      for (const auto& nb : lattice.con(r))
        if (annotated.count(nb.id)) e.background = true;
    e.s = pf.raw[r];
    e.s_tilde = pf.calibrated[r];
    entries.push_back(e);
  }
  return entries;
}

}  // namespace

Vector context_summary(const SceneInstance& scene, const PairFeature& feature, const PosteriorTable& prev,
                       std::size_t index, const PredicateVocabulary& vocab) {
  return context_from_sums(scene, feature, prev, candidate_sums(prev, vocab), index, vocab.dim());
}

ContextActivation evaluate_context(const ContextWeights& w, const Vector& context, const Vector& relation_embedding) {
  const Eigen::Index base = context.size();
  if (base + relation_embedding.size() != w.hidden.cols())
    throw DataError("context summary dimension does not match context scorer");
  ContextActivation a;
  Vector pre = w.hidden.leftCols(base) * context + w.hidden.rightCols(relation_embedding.size()) * relation_embedding +
               w.hidden_bias;
  a.hidden = pre.array().tanh().matrix();
  a.pre_clamp = w.out.dot(a.hidden) + w.out_bias;
  a.g = std::clamp(a.pre_clamp, -kContextClamp, kContextClamp);
  return a;
}

double graph_context_term(const ModelParams& params, const Vector& context, const Vector& relation_embedding) {
  return evaluate_context(params.weights.context, context, relation_embedding).g;
}

double density_prior(const DensityPrior& prior, const Box& subj, const Box& obj) {
  const auto geom = pair_geometry(subj, obj);
  const double iou = geom[4];
  const double dist = geom[5];
  const double salience = 0.5 * (subj.area() + obj.area());
  return prior.max_relations *
         sigmoid(prior.overlap * iou + prior.proximity * (1.0 - dist) + prior.salience * salience);
}

PosteriorTable init_posteriors(const ModelParams& params, const RelationLattice& lattice, const SceneInstance& scene,
                               const SceneForward& forward, const CompletionOptions& opts) {
  require_aligned(scene, forward, nullptr);
  const auto& ev = params.weights.evidence;
  PosteriorTable table;
  table.scene_id = scene.id;
  table.pairs.reserve(forward.pairs.size());
  for (const auto& pf : forward.pairs) {
    PairPosterior pp;
    pp.pair = pf.feature.pair;
    pp.candidates = pf.candidates;
    pp.entries = tracked_entries(lattice, scene, pf, opts);
    pp.density_prior = density_prior(params.hyper.density, scene.object(pp.pair.subj).box,
                                     scene.object(pp.pair.obj).box);
    for (auto& e : pp.entries) {
      e.q = e.annotated ? 1.0 : (opts.latent_completion ? sigmoid(ev.alpha * e.s_tilde) : 0.0);
      e.rho = opts.reliable_negatives ? negative_reliability(e.q, 0.0, e.s_tilde, ev.eta, ev.mu) : 1.0 - e.q;
    }
    pp.context = Vector::Zero(2 * kCategoryDim + kGeometryDim + params.dims.embed_dim);
    table.pairs.push_back(std::move(pp));
  }
  return table;
}

PosteriorTable update_posteriors(const ModelParams& params, const RelationLattice& lattice,
                                 const PredicateVocabulary& vocab, const SceneInstance& scene,
                                 const SceneForward& forward, const PosteriorTable& prev,
                                 const CompletionOptions& opts) {
  require_aligned(scene, forward, &prev);
  const auto& ev = params.weights.evidence;
  const Matrix& T = vocab.embedding_matrix();
  const auto sums = candidate_sums(prev, vocab);
  PosteriorTable table;
  table.scene_id = scene.id;
  table.pairs.reserve(forward.pairs.size());
  for (std::size_t k = 0; k < forward.pairs.size(); ++k) {
    const auto& pf = forward.pairs[k];
    const auto& before = prev.pairs[k];
    PairPosterior pp;
    pp.pair = pf.feature.pair;
    pp.candidates = pf.candidates;
    pp.entries = tracked_entries(lattice, scene, pf, opts);
    pp.density_prior = before.density_prior;
    pp.context = context_from_sums(scene, pf.feature, prev, sums, k, vocab.dim());
    for (auto& e : pp.entries) {
      e.c = consistency_term(lattice, before, e.predicate);
      e.n = contradiction_term(lattice, before, e.predicate);
      e.g = graph_context_term(params, pp.context, T.row(e.predicate).transpose());
      if (!std::isfinite(e.s_tilde) || !std::isfinite(e.c) || !std::isfinite(e.n) || !std::isfinite(e.g))
        throw NumericalError("non-finite evidence term in scene '" + scene.id + "'");
      if (e.annotated)
        e.q = 1.0;
      else if (opts.latent_completion)
        e.q = sigmoid(ev.alpha * e.s_tilde + ev.beta * e.c + ev.gamma * e.g - ev.delta * e.n);
      else
        e.q = 0.0;
      e.rho = opts.reliable_negatives ? negative_reliability(e.q, e.n, e.s_tilde, ev.eta, ev.mu) : 1.0 - e.q;
    }
    table.pairs.push_back(std::move(pp));
  }
  return table;
}

std::vector<std::string> check_posterior_invariants(const PosteriorTable& table) {
  std::vector<std::string> problems;
  for (const auto& pp : table.pairs) {
    for (const auto& e : pp.entries) {
      auto where = [&] {
        return table.scene_id + " (" + std::to_string(pp.pair.subj) + "," + std::to_string(pp.pair.obj) + ") r=" +
               std::to_string(e.predicate);
      };
      if (!(std::isfinite(e.q) && std::isfinite(e.rho) && std::isfinite(e.s_tilde)))
        problems.push_back("non-finite entry at " + where());
      if (e.q < 0.0 || e.q > 1.0) problems.push_back("q outside [0,1] at " + where());
      if (e.rho < 0.0 || e.rho > 1.0) problems.push_back("rho outside [0,1] at " + where());
      if (e.rho > 1.0 - e.q + 1e-9) problems.push_back("rho exceeds 1 - q at " + where());
      if (e.annotated && e.q != 1.0) problems.push_back("annotated entry with q != 1 at " + where());
    }
  }
  return problems;
}

nlohmann::json posterior_table_to_json(const PosteriorTable& table, const PredicateVocabulary& vocab,
                                       double lambda_q) {
  nlohmann::json j;
  j["scene_id"] = table.scene_id;
  j["pairs"] = nlohmann::json::array();
  for (const auto& pp : table.pairs) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : pp.entries)
      entries.push_back({{"predicate", vocab[e.predicate].phrase},
                         {"annotated", e.annotated},
                         {"candidate", e.candidate},
                         {"s", e.s},
                         {"s_tilde", e.s_tilde},
                         {"q", e.q},
                         {"rho", e.rho},
                         {"c", e.c},
                         {"n", e.n},
                         {"g", e.g},
                         {"s_hat", e.s_tilde + lambda_q * e.q}});
    j["pairs"].push_back({{"subj", pp.pair.subj}, {"obj", pp.pair.obj}, {"entries", std::move(entries)}});
  }
  return j;
}

}  // namespace relic
