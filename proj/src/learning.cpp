#include "relic/learning.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace relic {

double positive_risk(const std::vector<double>& s_tilde) {
  if (s_tilde.empty()) return 0.0;
  double sum = 0.0;
  for (double s : s_tilde) sum += neg_log_sigmoid(s);
  return sum / static_cast<double>(s_tilde.size());
}

double unlabeled_risk(const std::vector<UnlabeledTerm>& terms) {
  if (terms.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : terms) sum += t.q * neg_log_sigmoid(t.s_tilde) + t.rho * neg_log_one_minus_sigmoid(t.s_tilde);
  return sum / static_cast<double>(terms.size());
}

double pair_lattice_loss(const RelationLattice& lattice, const std::vector<double>& q) {
  if (q.size() != lattice.node_count()) throw DataError("q vector length does not match lattice");
  double loss = 0.0;
  for (const auto& e : lattice.edges()) {
    const double qa = q[static_cast<std::size_t>(e.src)];
    const double qb = q[static_cast<std::size_t>(e.dst)];
    if (e.kind == EdgeKind::Con && e.src < e.dst) loss += qa * qb;
    if (e.kind == EdgeKind::Ent) loss += std::max(0.0, qa - qb);
  }
  return loss;
}

double pair_compactness_loss(double candidate_q_sum, double rho_den) { return std::abs(candidate_q_sum - rho_den); }

LossBreakdown total_loss(double R_p_plus, double R_u, double L_lat, double L_cmp, double lambda_u, double lambda_lat,
                         double lambda_cmp) {
  LossBreakdown b;
  b.R_p_plus = R_p_plus;
  b.R_u = R_u;
  b.L_lat = L_lat;
  b.L_cmp = L_cmp;
  b.lambda_u = lambda_u;
  b.lambda_lat = lambda_lat;
  b.lambda_cmp = lambda_cmp;
  b.L_PU = R_p_plus + lambda_u * R_u;
  b.L_total = b.L_PU + lambda_lat * L_lat + lambda_cmp * L_cmp;
  return b;
}

const char* to_string(QGradientMode mode) {
  switch (mode) {
    case QGradientMode::Frozen: return "frozen";
    case QGradientMode::Recompute: return "recompute";
    case QGradientMode::Live: return "live";
  }
  return "recompute";
}

QGradientMode q_gradient_mode_from_string(const std::string& s) {
  if (s == "frozen") return QGradientMode::Frozen;
  if (s == "recompute") return QGradientMode::Recompute;
  if (s == "live") return QGradientMode::Live;
  throw DataError("unknown q gradient mode '" + s + "' (expected frozen, recompute or live)");
}

namespace {

double dsigmoid(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

struct Normalizers {
  double positives = 0.0;
  double unlabeled = 0.0;
  double scenes = 0.0;
};

struct SceneTerms {
  double pos_sum = 0.0;
  double u_sum = 0.0;
  double lat = 0.0;
  double cmp = 0.0;
  std::optional<Trainables> grad;
};

// Backprop of calibrate(): d/ds_tilde -> d/ds.
Vector backprop_calibration(const RelationLattice& lattice, const Propagation& prop, const Vector& bar,
                            const Vector& g_tilde) {
  Vector g_bar = g_tilde;
  if (prop.con != 0.0) {
    for (Eigen::Index r = 0; r < g_tilde.size(); ++r) {
      if (g_tilde[r] == 0.0) continue;
      for (const auto& nb : lattice.con(static_cast<PredicateId>(r)))
        g_bar[nb.id] -= prop.con * nb.weight * dsigmoid(bar[nb.id]) * g_tilde[r];
    }
  }
  if (prop.sim == 0.0 && prop.ent == 0.0) return g_bar;
  Vector g_raw = g_bar;
  for (Eigen::Index x = 0; x < g_bar.size(); ++x) {
    const auto id = static_cast<PredicateId>(x);
    double acc = 0.0;
    if (prop.sim != 0.0)
      for (const auto& nb : lattice.sim(id)) acc += prop.sim * nb.weight * g_bar[nb.id];
    if (prop.ent != 0.0)
      for (const auto& nb : lattice.parents(id)) acc += prop.ent * nb.weight * g_bar[nb.id];
    g_raw[x] += acc;
  }
  return g_raw;
}

void backprop_context(const ContextWeights& w, const Vector& context, const Vector& t_r, double scale,
                      ContextWeights& g) {
  const ContextActivation a = evaluate_context(w, context, t_r);
  if (a.pre_clamp < -kContextClamp || a.pre_clamp > kContextClamp) return;
  g.out += scale * a.hidden;
  g.out_bias += scale;
  const Vector dh = (scale * w.out.array() * (1.0 - a.hidden.array().square())).matrix();
  const Eigen::Index base = context.size();
  g.hidden.leftCols(base).noalias() += dh * context.transpose();
  g.hidden.rightCols(t_r.size()).noalias() += dh * t_r.transpose();
  g.hidden_bias += dh;
}

SceneTerms scene_objective(const ModelParams& params, const RelationLattice& lattice, const PredicateVocabulary& vocab,
                           const ProjectedText& text, const SceneInstance& scene, const PosteriorTable& table,
                           const ObjectiveOptions& opts, const Normalizers& norm, bool with_grad) {
  const auto& W = params.weights;
  const auto& ev = W.evidence;
  const auto& hp = params.hyper;
  const Matrix& T = vocab.embedding_matrix();
  const auto pairs = scene.ordered_pairs();
  if (table.pairs.size() != pairs.size()) throw DataError("posterior table does not match scene '" + scene.id + "'");
  const bool q_has_grad =
      !opts.warmup && opts.q_gradient != QGradientMode::Frozen && opts.toggles.latent_completion;
  const bool live = opts.q_gradient == QGradientMode::Live && !opts.warmup;

  SceneTerms out;
  Matrix g_text;
  if (with_grad) {
    out.grad = Trainables::zeros(params.dims);
    g_text = Matrix::Zero(text.columns.rows(), text.columns.cols());
  }

  const std::size_t V = vocab.size();
  std::vector<int> slot(V, -1);

  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pp = table.pairs[k];
    if (pp.pair != pairs[k]) throw DataError("pair order mismatch in scene '" + scene.id + "'");
    PairForward pf;
    pf.feature = build_pair_feature(scene, pp.pair.subj, pp.pair.obj);
    pf.projection = project_pair(params, pf.feature);
    pf.raw = compatibility_scores(pf.projection, text);
    calibrate(lattice, opts.prop, pf);
    const Vector& st = pf.calibrated;

    const std::size_t n_entries = pp.entries.size();
    for (std::size_t a = 0; a < n_entries; ++a) slot[static_cast<std::size_t>(pp.entries[a].predicate)] = static_cast<int>(a);

    Vector g_tilde;
    if (with_grad) g_tilde = Vector::Zero(static_cast<Eigen::Index>(V));

    // Live posterior values; equal to the frozen ones when params match the table.
    std::vector<double> q(n_entries, 0.0), dq(n_entries, 0.0), z(n_entries, 0.0), gval(n_entries, 0.0);
    if (!opts.warmup) {
      for (std::size_t a = 0; a < n_entries; ++a) {
        const auto& e = pp.entries[a];
        if (opts.q_gradient == QGradientMode::Frozen) {
          q[a] = e.q;
          continue;
        }
        if (e.annotated) {
          q[a] = 1.0;
        } else if (opts.toggles.latent_completion) {
          gval[a] = evaluate_context(W.context, pp.context, T.row(e.predicate).transpose()).g;
          z[a] = ev.alpha * st[e.predicate] + ev.beta * e.c + ev.gamma * gval[a] - ev.delta * e.n;
          q[a] = sigmoid(z[a]);
        }
      }
    }

    double q_sum = 0.0;
    for (std::size_t a = 0; a < n_entries; ++a) {
      const auto& e = pp.entries[a];
      const double s = st[e.predicate];
      if (e.annotated) {
        out.pos_sum += neg_log_sigmoid(s);
        if (with_grad) g_tilde[e.predicate] += -(1.0 - sigmoid(s)) / norm.positives;
      } else if (opts.warmup) {
        if (e.background) {
          out.u_sum += neg_log_one_minus_sigmoid(s);
          if (with_grad) g_tilde[e.predicate] += sigmoid(s) / norm.unlabeled;
        }
      } else {
        double qa = e.q;
        double rho = e.rho;
        double arg = 0.0;
        if (live) {
          qa = q[a];
          if (opts.toggles.reliable_negatives) {
            arg = ev.eta * e.n - ev.mu * s;
            rho = (1.0 - qa) * sigmoid(arg);
          } else {
            rho = 1.0 - qa;
          }
        }
        const double pos = opts.toggles.pu_learning ? qa : 0.0;
        out.u_sum += pos * neg_log_sigmoid(s) + rho * neg_log_one_minus_sigmoid(s);
        if (with_grad) {
          g_tilde[e.predicate] += hp.lambda_u * (pos * (sigmoid(s) - 1.0) + rho * sigmoid(s)) / norm.unlabeled;
          if (live) {
            const double dL_drho = hp.lambda_u * neg_log_one_minus_sigmoid(s) / norm.unlabeled;
            if (opts.toggles.pu_learning) dq[a] += hp.lambda_u * neg_log_sigmoid(s) / norm.unlabeled;
            if (opts.toggles.reliable_negatives) {
              const double ds = dsigmoid(arg);
              dq[a] += -sigmoid(arg) * dL_drho;
              g_tilde[e.predicate] += -(1.0 - qa) * ds * ev.mu * dL_drho;
              out.grad->evidence.eta += (1.0 - qa) * ds * e.n * dL_drho;
              out.grad->evidence.mu += -(1.0 - qa) * ds * s * dL_drho;
            } else {
              dq[a] += -dL_drho;
            }
          }
        }
      }
      if (!opts.warmup) {
        // Lattice loss: Con products once per unordered pair, Ent hinge from each tracked child.
        for (const auto& nb : lattice.con(e.predicate)) {
          const int b = slot[static_cast<std::size_t>(nb.id)];
          if (b < 0 || nb.id < e.predicate) continue;
          out.lat += q[a] * q[static_cast<std::size_t>(b)];
          dq[a] += hp.lambda_lat / norm.scenes * q[static_cast<std::size_t>(b)];
          dq[static_cast<std::size_t>(b)] += hp.lambda_lat / norm.scenes * q[a];
        }
        for (const auto& nb : lattice.parents(e.predicate)) {
          const int b = slot[static_cast<std::size_t>(nb.id)];
          const double qp = b < 0 ? 0.0 : q[static_cast<std::size_t>(b)];
          const double gap = q[a] - qp;
          if (gap > 0.0) {
            out.lat += gap;
            dq[a] += hp.lambda_lat / norm.scenes;
            if (b >= 0) dq[static_cast<std::size_t>(b)] -= hp.lambda_lat / norm.scenes;
          }
        }
        if (e.candidate) q_sum += q[a];
      }
    }

    if (!opts.warmup) {
      const double diff = q_sum - pp.density_prior;
      out.cmp += std::abs(diff);
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      for (std::size_t a = 0; a < n_entries; ++a)
        if (pp.entries[a].candidate) dq[a] += hp.lambda_cmp / norm.scenes * sign;
    }

    if (with_grad) {
      auto& G = *out.grad;
      if (q_has_grad) {
        for (std::size_t a = 0; a < n_entries; ++a) {
          const auto& e = pp.entries[a];
          if (e.annotated || dq[a] == 0.0) continue;
          const double dz = dq[a] * q[a] * (1.0 - q[a]);
          const double s = st[e.predicate];
          g_tilde[e.predicate] += dz * ev.alpha;
          G.evidence.alpha += dz * s;
          G.evidence.beta += dz * e.c;
          G.evidence.gamma += dz * gval[a];
          G.evidence.delta += -dz * e.n;
          if (ev.gamma != 0.0)
            backprop_context(W.context, pp.context, T.row(e.predicate).transpose(), dz * ev.gamma, G.context);
        }
      }

      const Vector g_raw = backprop_calibration(lattice, opts.prop, pf.bar, g_tilde);
      const Vector& u = pf.projection.joint;
      const double nu = pf.projection.joint_norm;
      Vector g_u = Vector::Zero(u.size());
      for (Eigen::Index r = 0; r < g_raw.size(); ++r) {
        const double gr = g_raw[r];
        if (gr == 0.0) continue;
        const double nv = text.norms[r];
        const double s = pf.raw[r];
        const auto v = text.columns.col(r);
        g_u.noalias() += gr * (v / (nu * nv) - s * u / (nu * nu));
        g_text.col(r).noalias() += gr * (u / (nu * nv) - s * v / (nv * nv));
      }
      G.visual_proj.noalias() += g_u * pf.projection.pair_repr.transpose();
      const Vector g_p = W.visual_proj.transpose() * g_u;
      G.pair_proj.noalias() += g_p * pf.feature.input.transpose();
    }

    for (const auto& e : pp.entries) slot[static_cast<std::size_t>(e.predicate)] = -1;
  }

  if (with_grad) out.grad->text_proj.noalias() += g_text * T;
  return out;
}

}  // namespace

Objective evaluate_objective(const ModelParams& params, const RelationLattice& lattice,
                             const PredicateVocabulary& vocab, const std::vector<const SceneInstance*>& scenes,
                             const std::vector<const PosteriorTable*>& tables, const ObjectiveOptions& opts,
                             bool with_grad, int threads) {
  if (scenes.size() != tables.size()) throw DataError("scene and posterior-table counts differ");
  std::size_t positives = 0, unlabeled = 0;
  for (const auto* t : tables) {
    for (const auto& pp : t->pairs) {
      for (const auto& e : pp.entries) {
        if (e.annotated)
          ++positives;
        else if (opts.warmup ? e.background : true)
          ++unlabeled;
      }
    }
  }
  Normalizers norm;
  norm.positives = static_cast<double>(std::max<std::size_t>(positives, 1));
  norm.unlabeled = static_cast<double>(std::max<std::size_t>(unlabeled, 1));
  norm.scenes = static_cast<double>(std::max<std::size_t>(scenes.size(), 1));

  const ProjectedText text = project_text(params, vocab);
  std::vector<SceneTerms> terms(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    terms[i] = scene_objective(params, lattice, vocab, text, *scenes[i], *tables[i], opts, norm, with_grad);
  });

  double pos = 0.0, u = 0.0, lat = 0.0, cmp = 0.0;
  Objective obj;
  if (with_grad) obj.grad = Trainables::zeros(params.dims);
  for (auto& t : terms) {
    pos += t.pos_sum;
    u += t.u_sum;
    lat += t.lat;
    cmp += t.cmp;
    if (with_grad) obj.grad->add_scaled(*t.grad, 1.0);
  }
  const double R_p = positives ? pos / norm.positives : 0.0;
  const double R_u = unlabeled ? u / norm.unlabeled : 0.0;
  if (opts.warmup) {
    obj.loss = total_loss(R_p, R_u, 0.0, 0.0, 1.0, 0.0, 0.0);
  } else {
    const auto& h = params.hyper;
    obj.loss = total_loss(R_p, R_u, lat / norm.scenes, cmp / norm.scenes, h.lambda_u, h.lambda_lat, h.lambda_cmp);
  }
  obj.loss.positives = positives;
  obj.loss.unlabeled = unlabeled;
  obj.loss.empty_positive = positives == 0;
  return obj;
}

void TrainConfig::validate() const {
  if (warmup_steps < 0 || joint_steps < 0) throw DataError("step counts must be non-negative");
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be positive");
  if (batch_size < 1) throw DataError("batch size must be >= 1");
  if (posterior_iterations < 1) throw DataError("posterior iterations must be >= 1");
  if (threads < 1) throw DataError("thread count must be >= 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"warmup_steps", c.warmup_steps},
          {"joint_steps", c.joint_steps},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"posterior_iterations", c.posterior_iterations},
          {"q_gradient", to_string(c.q_gradient)},
          {"lattice_reasoning", c.toggles.lattice_reasoning},
          {"latent_completion", c.toggles.latent_completion},
          {"reliable_negatives", c.toggles.reliable_negatives},
          {"pu_learning", c.toggles.pu_learning}};
}

void apply_train_overrides(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "warmup_steps") c.warmup_steps = value.get<int>();
    else if (key == "joint_steps") c.joint_steps = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "posterior_iterations") c.posterior_iterations = value.get<int>();
    else if (key == "q_gradient") c.q_gradient = q_gradient_mode_from_string(value.get<std::string>());
    else if (key == "lattice_reasoning") c.toggles.lattice_reasoning = value.get<bool>();
    else if (key == "latent_completion") c.toggles.latent_completion = value.get<bool>();
    else if (key == "reliable_negatives") c.toggles.reliable_negatives = value.get<bool>();
    else if (key == "pu_learning") c.toggles.pu_learning = value.get<bool>();
    else throw DataError("unknown training config key '" + key + "'");
  }
  c.validate();
}

std::vector<PosteriorTable> build_posterior_tables(const ModelParams& params, const RelationLattice& lattice,
                                                   const PredicateVocabulary& vocab,
                                                   const std::vector<const SceneInstance*>& scenes,
                                                   const Propagation& prop, const CompletionOptions& copts,
                                                   int iterations, int threads) {
  const ProjectedText text = project_text(params, vocab);
  std::vector<PosteriorTable> tables(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const SceneForward fwd = forward_scene(params, lattice, text, *scenes[i], prop);
    PosteriorTable t = init_posteriors(params, lattice, *scenes[i], fwd, copts);
    for (int it = 0; it < iterations; ++it) t = update_posteriors(params, lattice, vocab, *scenes[i], fwd, t, copts);
    tables[i] = std::move(t);
  });
  return tables;
}

namespace {

// Epoch-wise shuffled batches; each epoch reseeds from (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch, std::uint64_t seed) : n_(n), batch_(static_cast<std::size_t>(batch)), seed_(seed) {}

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < std::min(batch_, n_)) {
      if (pos_ >= order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (epoch_ + 1)));
    std::shuffle(order_.begin(), order_.end(), rng);
    ++epoch_;
    pos_ = 0;
  }

  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void project_evidence(EvidenceWeights& e) {
  for (double* v : {&e.alpha, &e.beta, &e.gamma, &e.delta, &e.eta, &e.mu}) *v = std::max(0.0, *v);
}

bool loss_finite(const LossBreakdown& l) {
  return std::isfinite(l.L_total) && std::isfinite(l.R_p_plus) && std::isfinite(l.R_u) && std::isfinite(l.L_lat) &&
         std::isfinite(l.L_cmp);
}

}  // namespace

TrainResult train(const std::vector<SceneInstance>& scenes, const PredicateVocabulary& vocab,
                  const RelationLattice& lattice, const ModelParams& init, const TrainConfig& config,
                  const StepObserver& observer) {
  config.validate();
  validate_params(init);
  if (scenes.empty()) throw DataError("training set is empty");
  if (lattice.node_count() != vocab.size()) throw DataError("lattice size does not match vocabulary");

  TrainResult result;
  result.params = init;
  ModelParams& params = result.params;
  const CompletionOptions copts = config.toggles.completion(true);
  BatchSampler sampler(scenes.size(), config.batch_size, config.seed);
  int step = 0;

  auto sgd = [&](const Objective& obj, const std::string& stage,
                 const std::vector<const PosteriorTable*>& used) -> bool {
    if (!loss_finite(obj.loss) || !obj.grad->all_finite()) {
      result.diverged = true;
      result.message = "non-finite loss or gradient at step " + std::to_string(step) + " (" + stage + ")";
      return false;
    }
    Trainables next = params.weights;
    next.add_scaled(*obj.grad, -config.learning_rate);
    project_evidence(next.evidence);
    if (!next.all_finite()) {
      result.diverged = true;
      result.message = "non-finite parameters after step " + std::to_string(step) + " (" + stage + ")";
      return false;
    }
    params.weights = std::move(next);
    StepRecord rec{step, stage, obj.loss};
    result.log.push_back(rec);
    if (observer) observer(rec, used);
    return true;
  };

  // Stage 1: scorer warmup on raw scores.
  ObjectiveOptions warm;
  warm.prop = Propagation::none();
  warm.toggles = config.toggles;
  warm.warmup = true;
  for (int s = 0; s < config.warmup_steps; ++s) {
    ++step;
    const auto idx = sampler.next();
    std::vector<const SceneInstance*> batch;
    for (auto i : idx) batch.push_back(&scenes[i]);
    const ProjectedText text = project_text(params, vocab);
    std::vector<PosteriorTable> tables(batch.size());
    parallel_for(batch.size(), config.threads, [&](std::size_t b) {
      const SceneForward fwd = forward_scene(params, lattice, text, *batch[b], warm.prop);
      tables[b] = init_posteriors(params, lattice, *batch[b], fwd, copts);
    });
    std::vector<const PosteriorTable*> used;
    for (const auto& t : tables) used.push_back(&t);
    const Objective obj = evaluate_objective(params, lattice, vocab, batch, used, warm, true, config.threads);
    if (!sgd(obj, "warmup", used)) return result;
  }

  // Stage 2: calibrated scores and initial posterior tables for every scene.
  ObjectiveOptions joint;
  joint.prop = config.toggles.propagation(params.hyper);
  joint.toggles = config.toggles;
  joint.q_gradient = config.q_gradient;
  std::vector<const SceneInstance*> all;
  for (const auto& s : scenes) all.push_back(&s);
  std::vector<PosteriorTable> tables;
  if (config.joint_steps > 0) tables = build_posterior_tables(params, lattice, vocab, all, joint.prop, copts, 0, config.threads);

  // Stage 3: joint loop.
  for (int s = 0; s < config.joint_steps; ++s) {
    ++step;
    const auto idx = sampler.next();
    std::vector<const SceneInstance*> batch;
    for (auto i : idx) batch.push_back(&scenes[i]);
    const ProjectedText text = project_text(params, vocab);
    try {
      parallel_for(idx.size(), config.threads, [&](std::size_t b) {
        const SceneForward fwd = forward_scene(params, lattice, text, *batch[b], joint.prop);
        PosteriorTable t = std::move(tables[idx[b]]);
        for (int it = 0; it < config.posterior_iterations; ++it)
          t = update_posteriors(params, lattice, vocab, *batch[b], fwd, t, copts);
        tables[idx[b]] = std::move(t);
      });
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = std::string("posterior update failed at step ") + std::to_string(step) + ": " + e.what();
      return result;
    }
    std::vector<const PosteriorTable*> used;
    for (auto i : idx) used.push_back(&tables[i]);
    const Objective obj = evaluate_objective(params, lattice, vocab, batch, used, joint, true, config.threads);
    if (!sgd(obj, "joint", used)) return result;
  }
  return result;
}

std::string training_log_csv(const std::vector<StepRecord>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "step,stage,R_p_plus,R_u,L_PU,L_lat,L_cmp,L_total\n";
  for (const auto& r : log)
    out << r.step << ',' << r.stage << ',' << r.loss.R_p_plus << ',' << r.loss.R_u << ',' << r.loss.L_PU << ','
        << r.loss.L_lat << ',' << r.loss.L_cmp << ',' << r.loss.L_total << '\n';
  return out.str();
}

GradientCheckReport check_gradients(const ModelParams& params, const RelationLattice& lattice,
                                    const PredicateVocabulary& vocab, const std::vector<const SceneInstance*>& scenes,
                                    const std::vector<const PosteriorTable*>& tables, const ObjectiveOptions& opts,
                                    double eps, std::size_t coordinates, std::uint64_t seed) {
  if (!(eps > 0.0)) throw DataError("finite-difference step must be positive");
  const Objective base = evaluate_objective(params, lattice, vocab, scenes, tables, opts, true);
  const std::vector<double> analytic = base.grad->flatten();
  const std::vector<double> theta = params.weights.flatten();

  std::vector<std::string> names;
  std::vector<std::size_t> offsets;
  {
    std::size_t off = 0;
    params.weights.visit([&](const char* name, const double*, std::size_t n) {
      names.emplace_back(name);
      offsets.push_back(off);
      off += n;
    });
  }

  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coordinates > 0 && coordinates < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradientCheckReport report;
  ModelParams probe = params;
  for (std::size_t c : coords) {
    std::vector<double> x = theta;
    x[c] = theta[c] + eps;
    probe.weights.assign(x);
    const double up = evaluate_objective(probe, lattice, vocab, scenes, tables, opts, false).loss.L_total;
    x[c] = theta[c] - eps;
    probe.weights.assign(x);
    const double down = evaluate_objective(probe, lattice, vocab, scenes, tables, opts, false).loss.L_total;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[c];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});

    const auto block = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), c) - offsets.begin()) - 1;
    report.entries.push_back({names[block], c - offsets[block], a, numeric, rel});
    if (a == 0.0) report.max_abs_error_zero_grad = std::max(report.max_abs_error_zero_grad, std::abs(numeric));
    else report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.coordinates = coords.size();
  return report;
}

}  // namespace relic
