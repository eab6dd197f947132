#include "relic/params.hpp"

#include <random>

namespace relic {

Trainables Trainables::zeros(const ModelDims& dims) {
  Trainables t;
  t.pair_proj = Matrix::Zero(dims.pair_dim, dims.pair_input_dim());
  t.visual_proj = Matrix::Zero(dims.joint_dim, dims.pair_dim);
  t.text_proj = Matrix::Zero(dims.joint_dim, dims.embed_dim);
  t.context.hidden = Matrix::Zero(dims.context_hidden, dims.context_input_dim());
  t.context.hidden_bias = Vector::Zero(dims.context_hidden);
  t.context.out = Vector::Zero(dims.context_hidden);
  t.context.out_bias = 0.0;
  t.evidence = {0, 0, 0, 0, 0, 0};
  return t;
}

std::size_t Trainables::size() const {
  std::size_t n = 0;
  visit([&](const char*, const double*, std::size_t count) { n += count; });
  return n;
}

std::vector<double> Trainables::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  visit([&](const char*, const double* data, std::size_t count) { out.insert(out.end(), data, data + count); });
  return out;
}

void Trainables::assign(const std::vector<double>& flat) {
  if (flat.size() != size()) throw DataError("parameter vector length mismatch");
  std::size_t offset = 0;
  visit([&](const char*, double* data, std::size_t count) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + count), data);
    offset += count;
  });
}

void Trainables::add_scaled(const Trainables& other, double scale) {
  pair_proj += scale * other.pair_proj;
  visual_proj += scale * other.visual_proj;
  text_proj += scale * other.text_proj;
  context.hidden += scale * other.context.hidden;
  context.hidden_bias += scale * other.context.hidden_bias;
  context.out += scale * other.context.out;
  context.out_bias += scale * other.context.out_bias;
  evidence.alpha += scale * other.evidence.alpha;
  evidence.beta += scale * other.evidence.beta;
  evidence.gamma += scale * other.evidence.gamma;
  evidence.delta += scale * other.evidence.delta;
  evidence.eta += scale * other.evidence.eta;
  evidence.mu += scale * other.evidence.mu;
}

bool Trainables::all_finite() const {
  bool ok = true;
  visit([&](const char*, const double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) ok = ok && std::isfinite(data[i]);
  });
  return ok;
}

ModelParams init_params(const ModelDims& dims, const Hyperparameters& hyper, std::uint64_t seed) {
  if (dims.object_dim <= 0 || dims.embed_dim < 2 || dims.pair_dim <= 0 || dims.joint_dim <= 0 ||
      dims.context_hidden <= 0)
    throw DataError("model dimensions must be positive");
  ModelParams p;
  p.dims = dims;
  p.hyper = hyper;
  p.weights = Trainables::zeros(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Matrix& m, double scale) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * normal(rng);
  };
  fill(p.weights.pair_proj, 1.0 / std::sqrt(static_cast<double>(dims.pair_input_dim())));
  fill(p.weights.visual_proj, 1.0 / std::sqrt(static_cast<double>(dims.pair_dim)));
  fill(p.weights.text_proj, 1.0 / std::sqrt(static_cast<double>(dims.embed_dim)));
  fill(p.weights.context.hidden, 0.5 / std::sqrt(static_cast<double>(dims.context_input_dim())));
  for (Eigen::Index h = 0; h < p.weights.context.out.size(); ++h)
    p.weights.context.out[h] = 0.5 / std::sqrt(static_cast<double>(dims.context_hidden)) * normal(rng);
  p.weights.evidence = EvidenceWeights{};
  return p;
}

void validate_params(const ModelParams& params) {
  const auto& d = params.dims;
  const auto& w = params.weights;
  if (w.pair_proj.rows() != d.pair_dim || w.pair_proj.cols() != d.pair_input_dim() ||
      w.visual_proj.rows() != d.joint_dim || w.visual_proj.cols() != d.pair_dim ||
      w.text_proj.rows() != d.joint_dim || w.text_proj.cols() != d.embed_dim ||
      w.context.hidden.rows() != d.context_hidden || w.context.hidden.cols() != d.context_input_dim() ||
      w.context.hidden_bias.size() != d.context_hidden || w.context.out.size() != d.context_hidden)
    throw DataError("parameter shapes do not match model dimensions");
  if (!w.all_finite()) throw NumericalError("non-finite parameter value");
  if (params.hyper.top_k < 1) throw DataError("top_k must be >= 1");
  const auto& e = w.evidence;
  for (double v : {e.alpha, e.beta, e.gamma, e.delta, e.eta, e.mu})
    if (v < 0.0) throw DataError("evidence weights must be non-negative");
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols) {
  if (static_cast<int>(j.size()) != rows) throw DataError("checkpoint matrix has wrong row count");
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto row = j.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<int>(row.size()) != cols) throw DataError("checkpoint matrix has wrong column count");
    for (int c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

Vector vector_from(const nlohmann::json& j, int n) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n) throw DataError("checkpoint vector has wrong length");
  return Eigen::Map<const Vector>(v.data(), n);
}

}  // namespace

nlohmann::json hyper_to_json(const Hyperparameters& h) {
  return {{"lambda_sim", h.lambda_sim},
          {"lambda_ent", h.lambda_ent},
          {"lambda_con", h.lambda_con},
          {"lambda_u", h.lambda_u},
          {"lambda_lat", h.lambda_lat},
          {"lambda_cmp", h.lambda_cmp},
          {"lambda_q", h.lambda_q},
          {"top_k", h.top_k},
          {"density",
           {{"overlap", h.density.overlap},
            {"proximity", h.density.proximity},
            {"salience", h.density.salience},
            {"max_relations", h.density.max_relations}}}};
}

void apply_hyper_overrides(Hyperparameters& h, const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda_sim") h.lambda_sim = value.get<double>();
    else if (key == "lambda_ent") h.lambda_ent = value.get<double>();
    else if (key == "lambda_con") h.lambda_con = value.get<double>();
    else if (key == "lambda_u") h.lambda_u = value.get<double>();
    else if (key == "lambda_lat") h.lambda_lat = value.get<double>();
    else if (key == "lambda_cmp") h.lambda_cmp = value.get<double>();
    else if (key == "lambda_q") h.lambda_q = value.get<double>();
    else if (key == "top_k") h.top_k = value.get<int>();
    else if (key == "density") {
      for (const auto& [dk, dv] : value.items()) {
        if (dk == "overlap") h.density.overlap = dv.get<double>();
        else if (dk == "proximity") h.density.proximity = dv.get<double>();
        else if (dk == "salience") h.density.salience = dv.get<double>();
        else if (dk == "max_relations") h.density.max_relations = dv.get<double>();
        else throw DataError("unknown density key '" + dk + "'");
      }
    } else {
      throw DataError("unknown hyperparameter '" + key + "'");
    }
  }
  for (double v : {h.lambda_sim, h.lambda_ent, h.lambda_con, h.lambda_u, h.lambda_lat, h.lambda_cmp, h.lambda_q})
    if (v < 0.0) throw DataError("loss and propagation weights must be non-negative");
  if (h.top_k < 1) throw DataError("top_k must be >= 1");
}

nlohmann::json params_to_json(const ModelParams& params) {
  const auto& d = params.dims;
  const auto& w = params.weights;
  nlohmann::json j;
  j["format"] = "relic-params";
  j["version"] = 1;
  j["dims"] = {{"object_dim", d.object_dim},
               {"embed_dim", d.embed_dim},
               {"pair_dim", d.pair_dim},
               {"joint_dim", d.joint_dim},
               {"context_hidden", d.context_hidden}};
  j["hyper"] = hyper_to_json(params.hyper);
  j["pair_proj"] = matrix_to_json(w.pair_proj);
  j["visual_proj"] = matrix_to_json(w.visual_proj);
  j["text_proj"] = matrix_to_json(w.text_proj);
  j["context"] = {{"hidden", matrix_to_json(w.context.hidden)},
                  {"hidden_bias", std::vector<double>(w.context.hidden_bias.data(),
                                                      w.context.hidden_bias.data() + w.context.hidden_bias.size())},
                  {"out", std::vector<double>(w.context.out.data(), w.context.out.data() + w.context.out.size())},
                  {"out_bias", w.context.out_bias}};
  const auto& e = w.evidence;
  j["evidence"] = {{"alpha", e.alpha}, {"beta", e.beta}, {"gamma", e.gamma},
                   {"delta", e.delta}, {"eta", e.eta},   {"mu", e.mu}};
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "relic-params") throw DataError("not a parameter checkpoint");
  if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");
  ModelParams p;
  const auto& d = j.at("dims");
  p.dims.object_dim = d.at("object_dim").get<int>();
  p.dims.embed_dim = d.at("embed_dim").get<int>();
  p.dims.pair_dim = d.at("pair_dim").get<int>();
  p.dims.joint_dim = d.at("joint_dim").get<int>();
  p.dims.context_hidden = d.at("context_hidden").get<int>();
  apply_hyper_overrides(p.hyper, j.at("hyper"));
  auto& w = p.weights;
  w.pair_proj = matrix_from_json(j.at("pair_proj"), p.dims.pair_dim, p.dims.pair_input_dim());
  w.visual_proj = matrix_from_json(j.at("visual_proj"), p.dims.joint_dim, p.dims.pair_dim);
  w.text_proj = matrix_from_json(j.at("text_proj"), p.dims.joint_dim, p.dims.embed_dim);
  const auto& c = j.at("context");
  w.context.hidden = matrix_from_json(c.at("hidden"), p.dims.context_hidden, p.dims.context_input_dim());
  w.context.hidden_bias = vector_from(c.at("hidden_bias"), p.dims.context_hidden);
  w.context.out = vector_from(c.at("out"), p.dims.context_hidden);
  w.context.out_bias = c.at("out_bias").get<double>();
  const auto& e = j.at("evidence");
  w.evidence = {e.at("alpha").get<double>(), e.at("beta").get<double>(), e.at("gamma").get<double>(),
                e.at("delta").get<double>(), e.at("eta").get<double>(),  e.at("mu").get<double>()};
  validate_params(p);
  return p;
}

}  // namespace relic
