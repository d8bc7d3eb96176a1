#include "airexo/metrics.hpp"

#include <cstdio>

namespace airexo {

TrialResult score_gather_balls(const GatherBallsWorld& world, const std::vector<CollisionEvent>& collisions,
                               double duration_s, bool aborted) {
  if (world.balls.size() != world.cluster.size() || world.balls.empty()) {
    throw Error(ErrorKind::kState, "gather world has inconsistent ball data");
  }
  std::array<double, 2> credit{0.0, 0.0};
  std::array<double, 2> count{0.0, 0.0};
  for (std::size_t i = 0; i < world.balls.size(); ++i) {
    const std::size_t side = index_of(world.cluster[i]);
    credit[side] += triangle_credit(world.triangle, world.balls[i], kEdgeTolerance);
    count[side] += 1.0;
  }
  TrialResult r;
  r.task_id = task_id(TaskKind::kGatherBalls);
  r.completion_left = count[0] > 0 ? credit[0] / count[0] : 0.0;
  r.completion_right = count[1] > 0 ? credit[1] / count[1] : 0.0;
  r.completion_overall = (credit[0] + credit[1]) / static_cast<double>(world.balls.size());
  for (std::size_t i = 0; i < kSuccessThresholds.size(); ++i) {
    r.success_at[i] = r.completion_overall >= kSuccessThresholds[i];
  }
  r.collided = !collisions.empty();
  r.duration_s = duration_s;
  r.aborted = aborted;
  return r;
}

TrialResult score_curtained_shelf(const CurtainedShelfWorld& world, const std::vector<CollisionEvent>& collisions,
                                  double duration_s, bool aborted) {
  TrialResult r;
  r.task_id = task_id(TaskKind::kCurtainedShelf);
  r.stage_flags = world.stage_flags;
  r.success = world.stage_flags[static_cast<int>(Stage::kThrow)];
  r.collided = !collisions.empty();
  r.duration_s = duration_s;
  r.aborted = aborted;
  return r;
}

TrialResult score_trial(const SimState& state, TaskKind expected, double duration_s, bool aborted) {
  if (state.task() != expected) {
    throw Error(ErrorKind::kState, std::string("expected a ") + task_id(expected) + " world");
  }
  if (const auto* g = std::get_if<GatherBallsWorld>(&state.world)) {
    return score_gather_balls(*g, state.collisions, duration_s, aborted);
  }
  return score_curtained_shelf(std::get<CurtainedShelfWorld>(state.world), state.collisions, duration_s, aborted);
}

EvaluationReport aggregate(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw Error(ErrorKind::kInvalidInput, "no trials to aggregate");
  EvaluationReport r;
  r.task_id = trials.front().task_id;
  r.trials = trials;
  const double n = static_cast<double>(trials.size());
  for (const auto& t : trials) {
    if (t.task_id != r.task_id) throw Error(ErrorKind::kInvalidInput, "trials from different tasks");
    r.mean_completion += t.completion_overall;
    r.mean_completion_left += t.completion_left;
    r.mean_completion_right += t.completion_right;
    for (std::size_t i = 0; i < 3; ++i) r.success_rate[i] += t.success_at[i] ? 1.0 : 0.0;
    r.shelf_success_rate += t.success ? 1.0 : 0.0;
    r.collision_rate += t.collided ? 1.0 : 0.0;
    if (t.stage_flags) {
      for (int s = 0; s < kStageCount; ++s) r.stage_rates[s] += (*t.stage_flags)[s] ? 1.0 : 0.0;
    }
    if (t.aborted) ++r.aborted;
  }
  r.mean_completion /= n;
  r.mean_completion_left /= n;
  r.mean_completion_right /= n;
  for (double& v : r.success_rate) v /= n;
  r.shelf_success_rate /= n;
  r.collision_rate /= n;
  for (double& v : r.stage_rates) v /= n;
  return r;
}

nlohmann::json to_json(const TrialResult& t) {
  nlohmann::json j = {{"task", t.task_id},
                      {"completion", {{"overall", t.completion_overall}, {"left", t.completion_left}, {"right", t.completion_right}}},
                      {"success_at", {{"0.4", t.success_at[0]}, {"0.6", t.success_at[1]}, {"0.8", t.success_at[2]}}},
                      {"collided", t.collided},
                      {"duration_s", t.duration_s},
                      {"aborted", t.aborted}};
  if (t.stage_flags) {
    nlohmann::json s;
    for (int i = 0; i < kStageCount; ++i) s[stage_name(static_cast<Stage>(i))] = (*t.stage_flags)[i];
    j["stages"] = s;
    j["success"] = t.success;
  }
  return j;
}

TrialResult trial_from_json(const nlohmann::json& j) {
  try {
    TrialResult t;
    t.task_id = j.at("task").get<std::string>();
    const auto& c = j.at("completion");
    t.completion_overall = c.at("overall").get<double>();
    t.completion_left = c.at("left").get<double>();
    t.completion_right = c.at("right").get<double>();
    const auto& s = j.at("success_at");
    t.success_at = {s.at("0.4").get<bool>(), s.at("0.6").get<bool>(), s.at("0.8").get<bool>()};
    t.success = j.value("success", false);
    t.collided = j.at("collided").get<bool>();
    t.duration_s = j.at("duration_s").get<double>();
    t.aborted = j.at("aborted").get<bool>();
    if (j.contains("stages")) {
      StageFlags f{};
      for (int i = 0; i < kStageCount; ++i) f[i] = j.at("stages").at(stage_name(static_cast<Stage>(i))).get<bool>();
      t.stage_flags = f;
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("trial result: ") + e.what());
  }
}

nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  nlohmann::json stages;
  for (int i = 0; i < kStageCount; ++i) stages[stage_name(static_cast<Stage>(i))] = r.stage_rates[i];
  return {{"schema", "airexo-report/1"},
          {"task", r.task_id},
          {"trial_count", r.trials.size()},
          {"aborted", r.aborted},
          {"mean_completion", {{"overall", r.mean_completion}, {"left", r.mean_completion_left}, {"right", r.mean_completion_right}}},
          {"success_rate", {{"0.4", r.success_rate[0]}, {"0.6", r.success_rate[1]}, {"0.8", r.success_rate[2]}}},
          {"shelf_success_rate", r.shelf_success_rate},
          {"collision_rate", r.collision_rate},
          {"stage_rates", stages},
          {"trials", trials}};
}

std::string format_table(const EvaluationReport& r) {
  char line[256];
  std::string out;
  if (r.task_id == task_id(TaskKind::kGatherBalls)) {
    out += "| Trials | c Left (%) | c Right (%) | c Overall (%) | c>=40 (%) | c>=60 (%) | c>=80 (%) | Collision (%) |\n";
    out += "|-------:|-----------:|------------:|--------------:|----------:|----------:|----------:|--------------:|\n";
    std::snprintf(line, sizeof line, "| %6zu | %10.1f | %11.1f | %13.1f | %9.1f | %9.1f | %9.1f | %13.1f |\n",
                  r.trials.size(), 100 * r.mean_completion_left, 100 * r.mean_completion_right,
                  100 * r.mean_completion, 100 * r.success_rate[0], 100 * r.success_rate[1],
                  100 * r.success_rate[2], 100 * r.collision_rate);
  } else {
    out += "| Trials | Reach in (%) | Push aside (%) | Approach (%) | Grasp (%) | Throw (%) | Collision (%) |\n";
    out += "|-------:|-------------:|---------------:|-------------:|----------:|----------:|--------------:|\n";
    std::snprintf(line, sizeof line, "| %6zu | %12.1f | %14.1f | %12.1f | %9.1f | %9.1f | %13.1f |\n",
                  r.trials.size(), 100 * r.stage_rates[0], 100 * r.stage_rates[1], 100 * r.stage_rates[2],
                  100 * r.stage_rates[3], 100 * r.stage_rates[4], 100 * r.collision_rate);
  }
  out += line;
  return out;
}

}  // namespace airexo
