#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "airexo/simulator.hpp"

namespace airexo {

inline constexpr std::array<double, 3> kSuccessThresholds{0.4, 0.6, 0.8};
inline constexpr double kEdgeTolerance = 1e-9;

struct TrialResult {
  std::string task_id;
  double completion_overall = 0.0;
  double completion_left = 0.0;
  double completion_right = 0.0;
  /// Gather Balls: completion >= each of kSuccessThresholds.
  std::array<bool, 3> success_at{};
  /// Curtained Shelf: the throw stage was reached.
  bool success = false;
  bool collided = false;
  std::optional<StageFlags> stage_flags;
  double duration_s = 0.0;
  bool aborted = false;
};

struct EvaluationReport {
  std::string task_id;
  std::vector<TrialResult> trials;
  double mean_completion = 0.0;
  double mean_completion_left = 0.0;
  double mean_completion_right = 0.0;
  std::array<double, 3> success_rate{};
  double shelf_success_rate = 0.0;
  double collision_rate = 0.0;
  std::array<double, kStageCount> stage_rates{};
  std::size_t aborted = 0;
};

/// Balls strictly inside the triangle count 1, within kEdgeTolerance of an
/// edge 0.5. Left/right completion use each ball's spawn cluster.
TrialResult score_gather_balls(const GatherBallsWorld& world, const std::vector<CollisionEvent>& collisions,
                               double duration_s, bool aborted = false);
TrialResult score_curtained_shelf(const CurtainedShelfWorld& world, const std::vector<CollisionEvent>& collisions,
                                  double duration_s, bool aborted = false);
/// Dispatches on the world held by the state; throws kState for a world
/// other than `expected`.
TrialResult score_trial(const SimState& state, TaskKind expected, double duration_s, bool aborted = false);

EvaluationReport aggregate(const std::vector<TrialResult>& trials);

nlohmann::json to_json(const TrialResult& t);
TrialResult trial_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvaluationReport& r);
/// Fixed-layout table: completion columns and success at each threshold for
/// Gather Balls, per-stage rates for Curtained Shelf.
std::string format_table(const EvaluationReport& r);

}  // namespace airexo
