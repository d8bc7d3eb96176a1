#pragma once

// Randomized library inputs shared by the tests and the acceptance binary.

#include <random>

#include "airexo/policy.hpp"

namespace fixtures {

/// Database with n entries, random features (small integers when `ties`, so
/// equal distances occur) and random chunks.
inline airexo::NeighborDatabase random_database(std::mt19937_64& rng, std::size_t n, std::size_t horizon,
                                                bool ties) {
  airexo::NeighborDatabase db;
  db.feature_dim = airexo::feature_dim(airexo::kDefaultFeaturizer);
  db.horizon = horizon;
  db.mean.assign(db.feature_dim, 0.0);
  db.stddev.assign(db.feature_dim, 1.0);
  db.demo_ids = {"a", "b"};
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> small(-2, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < db.feature_dim; ++j) db.features.push_back(ties ? small(rng) : g(rng));
    for (std::size_t j = 0; j < horizon * db.action_dim; ++j) db.actions.push_back(g(rng));
    db.domains.push_back(rng() % 2 ? airexo::Domain::kTeleoperated : airexo::Domain::kInTheWild);
    db.demo_index.push_back(static_cast<std::uint32_t>(rng() % 2));
    db.frame_index.push_back(static_cast<std::uint32_t>(i));
    db.padded.push_back(0);
  }
  return db;
}

inline std::vector<std::vector<double>> rows(const airexo::NeighborDatabase& db) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < db.size(); ++i) out.emplace_back(db.feature(i).begin(), db.feature(i).end());
  return out;
}

inline std::vector<std::vector<double>> chunks(const airexo::NeighborDatabase& db) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < db.size(); ++i) out.emplace_back(db.chunk(i).begin(), db.chunk(i).end());
  return out;
}

inline std::vector<bool> teleop(const airexo::NeighborDatabase& db) {
  std::vector<bool> out;
  for (auto d : db.domains) out.push_back(d == airexo::Domain::kTeleoperated);
  return out;
}

}  // namespace fixtures
