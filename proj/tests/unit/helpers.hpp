#pragma once

#include "relic/lattice.hpp"
#include "relic/params.hpp"
#include "relic/scene.hpp"

#include <random>
#include <string>
#include <vector>

namespace relic::test {

inline Vector unit(std::vector<double> v) {
  Vector x = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  return x / x.norm();
}

inline PredicateVocabulary vocab_of(const std::vector<std::string>& phrases, const std::vector<Vector>& embeddings,
                                    const std::vector<bool>& seen = {}) {
  std::vector<PredicateEntry> entries;
  for (std::size_t i = 0; i < phrases.size(); ++i)
    entries.push_back({phrases[i], embeddings[i], seen.empty() ? true : bool(seen[i])});
  return PredicateVocabulary(std::move(entries));
}

// n phrases "p0".."p{n-1}" with random unit embeddings.
inline PredicateVocabulary random_vocab(std::size_t n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::string> phrases;
  std::vector<Vector> embs;
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(dim);
    for (int k = 0; k < dim; ++k) v[k] = normal(rng);
    phrases.push_back("p" + std::to_string(i));
    embs.push_back(v / v.norm());
  }
  return vocab_of(phrases, embs);
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline ObjectInstance object(ObjectId id, const std::string& category, Box box, Vector feature) {
  return {id, category, box, std::move(feature)};
}

// Objects laid out on a diagonal with random features.
inline SceneInstance random_scene(const std::string& id, int objects, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneInstance s;
  s.id = id;
  for (int i = 0; i < objects; ++i) {
    const double o = 0.1 * i;
    s.objects.push_back(object(i, i % 2 ? "cup" : "table", {o, o, o + 0.4, o + 0.3}, random_vector(dim, rng)));
  }
  return s;
}

}  // namespace relic::test
