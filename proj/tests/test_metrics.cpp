#include "doctest.h"

#include <random>

#include "airexo/metrics.hpp"

using namespace airexo;

namespace {

const std::array<Point2, 3> kTri{Point2{0.0, 0.0}, Point2{1.0, 0.0}, Point2{0.0, 1.0}};

GatherBallsWorld world_with(int inside, int edge, int outside) {
  GatherBallsWorld w;
  w.triangle = kTri;
  const auto add = [&](Point2 p) {
    w.balls.push_back(p);
    w.cluster.push_back(w.balls.size() % 2 ? Arm::kLeft : Arm::kRight);
  };
  for (int i = 0; i < inside; ++i) add({0.2, 0.2});
  for (int i = 0; i < edge; ++i) add({0.5, 0.0});
  for (int i = 0; i < outside; ++i) add({2.0, 2.0});
  return w;
}

}  // namespace

TEST_CASE("half credit for balls on the triangle boundary") {
  CHECK(triangle_credit(kTri, {0.2, 0.2}) == 1.0);
  CHECK(triangle_credit(kTri, {0.5, 0.5}) == 0.5);
  CHECK(triangle_credit(kTri, {0.0, 0.0}) == 0.5);
  CHECK(triangle_credit(kTri, {0.0, 0.3}) == 0.5);
  CHECK(triangle_credit(kTri, {0.6, 0.6}) == 0.0);
  CHECK(triangle_credit(kTri, {-1e-6, 0.3}) == 0.0);
}

TEST_CASE("completion and thresholds for a mixed layout") {
  const auto r = score_gather_balls(world_with(35, 41, 4), {}, 60.0);
  CHECK(r.completion_overall == doctest::Approx(0.69375).epsilon(1e-15));
  CHECK(r.success_at == std::array<bool, 3>{true, true, false});
  CHECK_FALSE(r.collided);

  // Exactly at a threshold counts as success.
  const auto at = score_gather_balls(world_with(48, 0, 32), {}, 60.0);
  CHECK(at.completion_overall == 0.6);
  CHECK(at.success_at == std::array<bool, 3>{true, true, false});
  CHECK(score_gather_balls(world_with(0, 0, 80), {CollisionEvent{}}, 1.0).collided);
}

TEST_CASE("per-cluster completion uses the spawn cluster") {
  GatherBallsWorld w;
  w.triangle = kTri;
  w.balls = {{0.2, 0.2}, {0.2, 0.2}, {5, 5}, {0.5, 0.0}};
  w.cluster = {Arm::kLeft, Arm::kLeft, Arm::kRight, Arm::kRight};
  const auto r = score_gather_balls(w, {}, 1.0);
  CHECK(r.completion_left == 1.0);
  CHECK(r.completion_right == 0.25);
  CHECK(r.completion_overall == 2.5 / 4);
  w.cluster.pop_back();
  CHECK_THROWS_AS(score_gather_balls(w, {}, 1.0), Error);
}

TEST_CASE("randomized scoring agrees with counting and stays monotone") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int inside = static_cast<int>(rng() % 81);
    const int edge = static_cast<int>(rng() % (81 - inside));
    const auto r = score_gather_balls(world_with(inside, edge, 80 - inside - edge), {}, 1.0);
    const double expect = (inside + 0.5 * edge) / 80.0;
    CHECK(r.completion_overall == doctest::Approx(expect).epsilon(1e-14));
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.success_at[i] == (expect >= kSuccessThresholds[i]));
    CHECK((!r.success_at[2] || r.success_at[1]));
    CHECK((!r.success_at[1] || r.success_at[0]));

    // Shelf stages latch in order, so aggregated rates never increase.
    std::vector<TrialResult> shelf;
    for (int s = 0; s < 20; ++s) {
      CurtainedShelfWorld sw;
      const int reached = static_cast<int>(rng() % (kStageCount + 1));
      for (int k = 0; k < reached; ++k) sw.stage_flags[k] = true;
      shelf.push_back(score_curtained_shelf(sw, {}, 1.0));
      CHECK(shelf.back().success == (reached == kStageCount));
    }
    const auto rep = aggregate(shelf);
    for (int k = 1; k < kStageCount; ++k) CHECK(rep.stage_rates[k] <= rep.stage_rates[k - 1]);
    CHECK(rep.shelf_success_rate == rep.stage_rates[kStageCount - 1]);
  }
}

TEST_CASE("aggregate averages and rejects bad input") {
  const auto a = score_gather_balls(world_with(80, 0, 0), {}, 1.0);
  const auto b = score_gather_balls(world_with(0, 0, 80), {CollisionEvent{}}, 1.0);
  const auto r = aggregate({a, b, a, a});
  CHECK(r.mean_completion == 0.75);
  CHECK(r.success_rate == std::array<double, 3>{0.75, 0.75, 0.75});
  CHECK(r.collision_rate == 0.25);
  CHECK_THROWS_AS(aggregate({}), Error);
  CHECK_THROWS_AS(aggregate({a, score_curtained_shelf({}, {}, 1.0)}), Error);
}

TEST_CASE("trial and report JSON") {
  const auto g = score_gather_balls(world_with(35, 41, 4), {}, 12.5);
  const auto gb = trial_from_json(to_json(g));
  CHECK(gb.completion_overall == g.completion_overall);
  CHECK(gb.success_at == g.success_at);
  CHECK_FALSE(gb.stage_flags.has_value());
  CHECK_FALSE(to_json(g).contains("success"));

  CurtainedShelfWorld sw;
  sw.stage_flags = {true, true, true, false, false};
  const auto s = score_curtained_shelf(sw, {}, 30.0, true);
  const auto sb = trial_from_json(to_json(s));
  CHECK(sb.stage_flags == s.stage_flags);
  CHECK(sb.aborted);
  CHECK_FALSE(sb.success);
  CHECK_THROWS_AS(trial_from_json(nlohmann::json{{"task", "gather_balls"}}), Error);

  const auto rep = to_json(aggregate({s}));
  CHECK(rep.at("schema") == "airexo-report/1");
  CHECK(rep.at("stage_rates").at(stage_name(Stage::kApproach)) == 1.0);
}

TEST_CASE("tables have one header and one data row") {
  const auto t = format_table(aggregate({score_gather_balls(world_with(35, 41, 4), {}, 1.0)}));
  CHECK(t.find("69.4") != std::string::npos);
  CHECK(std::count(t.begin(), t.end(), '\n') == 3);
  CurtainedShelfWorld sw;
  sw.stage_flags = {true, true, false, false, false};
  const auto s = format_table(aggregate({score_curtained_shelf(sw, {}, 1.0)}));
  CHECK(s.find("Push aside") != std::string::npos);
  CHECK(s.find("100.0") != std::string::npos);
}
