#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "airexo/control_loop.hpp"
#include "airexo/kernels.hpp"
#include "airexo/recorder.hpp"

namespace airexo {

inline constexpr const char* kDatabaseSchema = "airexo-db/1";
inline constexpr const char* kDefaultFeaturizer = "joint_gripper";
/// 14 joint positions followed by the left and right gripper widths.
inline constexpr std::size_t kActionDim = 16;
inline constexpr double kFeatureStdFloor = 1e-8;
inline constexpr double kNeighborEpsilon = 1e-8;

/// Unnormalized feature vector of a recorded frame or a live state.
std::vector<double> raw_features(const Demonstration& demo, const DemoFrame& frame,
                                 const std::string& featurizer = kDefaultFeaturizer);
std::vector<double> raw_features(const SimState& state, const std::string& featurizer = kDefaultFeaturizer);
std::size_t feature_dim(const std::string& featurizer);

std::array<double, kActionDim> frame_action(const Demonstration& demo, const DemoFrame& frame);
DualArmCommand action_to_command(std::span<const double> action);

struct DatasetAssembly {
  std::vector<Demonstration> pretrain;
  std::vector<Demonstration> finetune;
  double domain_weight = 3.0;

  void validate() const;
};

struct NeighborDatabase {
  std::string featurizer = kDefaultFeaturizer;
  std::size_t feature_dim = 0;
  std::size_t action_dim = kActionDim;
  std::size_t horizon = 20;
  double target_hz = 5.0;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> demo_ids;
  /// Row-major normalized features, one row per entry.
  std::vector<double> features;
  /// horizon x action_dim values per entry.
  std::vector<double> actions;
  std::vector<Domain> domains;
  std::vector<std::uint32_t> demo_index;
  std::vector<std::uint32_t> frame_index;
  std::vector<std::uint8_t> padded;

  std::size_t size() const { return domains.size(); }
  std::span<const double> feature(std::size_t i) const { return {features.data() + i * feature_dim, feature_dim}; }
  std::span<const double> chunk(std::size_t i) const {
    return {actions.data() + i * horizon * action_dim, horizon * action_dim};
  }
  /// z-normalizes a raw feature with the database statistics.
  std::vector<double> normalize(std::span<const double> raw) const;
  bool operator==(const NeighborDatabase&) const = default;
};

/// Resamples every demonstration to target_hz and adds one entry per frame,
/// in-the-wild demonstrations first. Chunks hold the next `horizon` actions,
/// padded by repeating the final action.
NeighborDatabase build_database(const DatasetAssembly& assembly, const std::string& featurizer, double target_hz,
                                std::size_t horizon);

std::string serialize_database(const NeighborDatabase& db);
NeighborDatabase parse_database(std::string_view bytes);
void save_database(const NeighborDatabase& db, const std::filesystem::path& path);
NeighborDatabase load_database(const std::filesystem::path& path);

struct Prediction {
  std::vector<double> chunk;
  std::vector<std::size_t> neighbors;
  std::vector<double> distances;
  std::vector<double> weights;
};

/// Inverse-distance weighted average of the k nearest chunks (ties by lower
/// index), with teleoperated neighbors weighted by domain_weight.
Prediction knn_predict(const NeighborDatabase& db, std::span<const double> query, std::size_t k,
                       double domain_weight, kernels::Exec exec = kernels::Exec::kOpenMP);

/// sum_i exp(-k * age_i) a_i / sum_i exp(-k * age_i), accumulated in the given order.
std::vector<double> ensemble_fuse(const std::vector<std::pair<std::size_t, std::vector<double>>>& predictions,
                                  double k);

class EnsembleBuffer {
 public:
  EnsembleBuffer(std::size_t horizon, std::size_t action_dim, double k = 0.01);

  /// Adds a chunk predicted at the current step (age 0), returns the fused
  /// action for this step, then ages the buffer and evicts chunks whose age
  /// reaches the horizon.
  std::vector<double> step(std::span<const double> chunk);
  std::size_t pending() const { return pending_.size(); }
  void clear() { pending_.clear(); }

 private:
  struct Entry {
    std::size_t age;
    std::vector<double> chunk;
  };
  std::size_t horizon_;
  std::size_t action_dim_;
  double k_;
  std::deque<Entry> pending_;
};

struct PolicyConfig {
  std::size_t k = 5;
  double domain_weight = 3.0;
  double ensemble_k = 0.01;
  double duration_s = 60.0;
  /// Step budget from the task protocol, if any.
  std::optional<int> max_steps;
};

struct PolicyEpisode {
  Demonstration record;
  LoopStats stats;
  bool aborted = false;
};

/// Closed loop at the control rate: featurize the live state, predict a
/// chunk, fuse it through the ensemble buffer and command the result.
PolicyEpisode run_policy(const NeighborDatabase& db, RobotBackend& backend, const WorldConfig& world,
                         const LoopConfig& loop, const PolicyConfig& policy, const LoopOptions& options = {});

}  // namespace airexo
