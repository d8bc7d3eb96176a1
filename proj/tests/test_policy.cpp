#include "doctest.h"

#include <random>

#include "airexo/scenarios.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace airexo;

namespace {

Demonstration line_demo(std::string id, Domain domain, int n, double offset) {
  Demonstration d;
  d.id = std::move(id);
  d.domain = domain;
  d.task_id = "gather_balls";
  d.calibration_ref = "default";
  for (int i = 0; i < n; ++i) {
    DemoFrame f;
    f.t = i * 200'000'000LL;
    for (int j = 0; j < 14; ++j) f.joint_pos[j] = offset + 0.01 * i * (j + 1);
    f.tcp_pos[6] = f.tcp_pos[13] = 1.0;
    d.frames.push_back(f);
  }
  return d;
}

}  // namespace

TEST_CASE("database entry counts, domains and padding") {
  DatasetAssembly a;
  for (int i = 0; i < 10; ++i) a.finetune.push_back(line_demo("t" + std::to_string(i), Domain::kTeleoperated, 300, i));
  const auto db = build_database(a, kDefaultFeaturizer, 5.0, 20);
  CHECK(db.size() == 3000);
  CHECK(db.feature_dim == 16);

  a.pretrain.push_back(line_demo("w", Domain::kInTheWild, 50, 0.5));
  const auto mixed = build_database(a, kDefaultFeaturizer, 5.0, 20);
  CHECK(mixed.size() == 3050);
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    CHECK(mixed.domains[i] == (i < 50 ? Domain::kInTheWild : Domain::kTeleoperated));
    CHECK(mixed.demo_ids[mixed.demo_index[i]][0] == (i < 50 ? 'w' : 't'));
  }

  DatasetAssembly tiny;
  tiny.finetune.push_back(line_demo("two", Domain::kTeleoperated, 2, 0.0));
  const auto t = build_database(tiny, kDefaultFeaturizer, 5.0, 20);
  REQUIRE(t.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(t.padded[i] == 1);
    const auto c = t.chunk(i);
    for (std::size_t h = 0; h < 20; ++h) CHECK(c[h * 16 + 13] == tiny.finetune[0].frames[1].joint_pos[13]);
  }
}

TEST_CASE("chunks hold the next H actions") {
  DatasetAssembly a;
  a.finetune.push_back(line_demo("d", Domain::kTeleoperated, 40, 0.0));
  const auto db = build_database(a, kDefaultFeaturizer, 5.0, 5);
  const auto& frames = a.finetune[0].frames;
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto c = db.chunk(i);
    for (std::size_t h = 0; h < 5; ++h) {
      const std::size_t src = std::min(i + 1 + h, frames.size() - 1);
      CHECK(c[h * 16 + 2] == frames[src].joint_pos[2]);
    }
    CHECK(db.padded[i] == (i + 5 > 39 ? 1 : 0));
  }
}

TEST_CASE("features are z-normalized with a floor for constant dimensions") {
  DatasetAssembly a;
  for (int i = 0; i < 3; ++i) a.finetune.push_back(line_demo("t" + std::to_string(i), Domain::kTeleoperated, 60, i * 0.1));
  const auto db = build_database(a, kDefaultFeaturizer, 5.0, 20);
  for (std::size_t j = 0; j < db.feature_dim; ++j) {
    long double s = 0, ss = 0;
    for (std::size_t i = 0; i < db.size(); ++i) s += db.feature(i)[j];
    const long double m = s / db.size();
    for (std::size_t i = 0; i < db.size(); ++i) ss += (db.feature(i)[j] - m) * (db.feature(i)[j] - m);
    const double sd = std::sqrt(static_cast<double>(ss / db.size()));
    CHECK(std::abs(static_cast<double>(m)) < 1e-9);
    if (j < 14) {
      CHECK(std::abs(sd - 1.0) < 1e-9);
    } else {
      // Gripper widths are constant (no grippers in this world).
      CHECK(db.stddev[j] == kFeatureStdFloor);
      CHECK(sd == 0.0);
      for (std::size_t i = 0; i < db.size(); ++i) CHECK(db.feature(i)[j] == 0.0);
    }
  }
  const auto& f = a.finetune[0].frames[7];
  CHECK(raw_features(a.finetune[0], f) == raw_features(a.finetune[0], f));
}

TEST_CASE("database build errors") {
  CHECK_THROWS_AS(build_database({}, kDefaultFeaturizer, 5.0, 20), Error);
  DatasetAssembly a;
  a.finetune.push_back(line_demo("d", Domain::kTeleoperated, 10, 0.0));
  try {
    build_database(a, "dino_v2", 5.0, 20);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfiguration);
  }
  a.pretrain.push_back(line_demo("x", Domain::kTeleoperated, 10, 0.0));
  CHECK_THROWS_AS(build_database(a, kDefaultFeaturizer, 5.0, 20), Error);
}

TEST_CASE("knn hand examples") {
  NeighborDatabase db;
  db.feature_dim = 16;
  db.horizon = 1;
  db.mean.assign(16, 0.0);
  db.stddev.assign(16, 1.0);
  db.demo_ids = {"x"};
  auto add = [&](double x, double action) {
    for (int j = 0; j < 16; ++j) db.features.push_back(j == 0 ? x : 0.0);
    for (int j = 0; j < 16; ++j) db.actions.push_back(action);
    db.domains.push_back(Domain::kInTheWild);
    db.demo_index.push_back(0);
    db.frame_index.push_back(static_cast<std::uint32_t>(db.frame_index.size()));
    db.padded.push_back(0);
  };
  add(1.0, 0.0);
  add(-3.0, 4.0);
  std::vector<double> q(16, 0.0);
  const auto p = knn_predict(db, q, 2, 1.0);
  CHECK(std::abs(p.weights[0] - 0.75) < 1e-8);
  CHECK(std::abs(p.chunk[0] - 1.0) < 1e-8);
  // With eps folded into the oracle the match is at machine precision.
  const double w0 = 1 / (1 + 1e-8), w1 = 1 / (3 + 1e-8);
  CHECK(std::abs(p.chunk[0] - 4 * w1 / (w0 + w1)) < 1e-12);

  // Nearest self with k = 1.
  q[0] = -3.0;
  const auto self = knn_predict(db, q, 1, 1.0);
  CHECK(self.neighbors == std::vector<std::size_t>{1});
  CHECK(self.chunk[5] == 4.0);

  // Equidistant duplicates resolve to the lower index.
  add(1.0, 9.0);
  q[0] = 1.0;
  CHECK(knn_predict(db, q, 1, 1.0).neighbors == std::vector<std::size_t>{0});
  q[0] = 0.0;
  CHECK(knn_predict(db, q, 2, 1.0).neighbors == std::vector<std::size_t>{0, 2});

  CHECK_THROWS_AS(knn_predict(db, q, 0, 1.0), Error);
  CHECK_THROWS_AS(knn_predict(db, q, 4, 1.0), Error);
  CHECK_THROWS_AS(knn_predict(db, std::vector<double>(3), 1, 1.0), Error);
  CHECK_THROWS_AS(knn_predict(NeighborDatabase{}, q, 1, 1.0), Error);
}

TEST_CASE("knn matches the exhaustive oracle exactly") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 1000;
    const auto db = fixtures::random_database(rng, n, 2, trial % 2 == 0);
    const auto rows = fixtures::rows(db);
    const auto chunks = fixtures::chunks(db);
    const auto tele = fixtures::teleop(db);
    for (std::size_t k : {1, 5, 20}) {
      if (k > n) continue;
      std::vector<double> q(16);
      for (double& v : q) v = trial % 2 == 0 ? static_cast<double>(static_cast<int>(rng() % 5) - 2) : std::normal_distribution<double>()(rng);
      for (auto exec : {kernels::Exec::kSerial, kernels::Exec::kOpenMP}) {
        const auto p = knn_predict(db, q, k, 3.0, exec);
        CHECK(p.neighbors == oracle::knn(rows, q, k));
        CHECK(p.chunk == oracle::knn_chunk(rows, chunks, tele, q, k, 3.0));
      }
    }
  }
}

TEST_CASE("uniform distances over the whole database give the plain mean") {
  NeighborDatabase db;
  db.feature_dim = 16;
  db.horizon = 1;
  db.mean.assign(16, 0.0);
  db.stddev.assign(16, 1.0);
  db.demo_ids = {"x"};
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) db.features.push_back(j == i ? 1.0 : 0.0);
    for (int j = 0; j < 16; ++j) db.actions.push_back(i);
    db.domains.push_back(Domain::kInTheWild);
    db.demo_index.push_back(0);
    db.frame_index.push_back(i);
    db.padded.push_back(0);
  }
  const auto p = knn_predict(db, std::vector<double>(16, 0.0), 16, 1.0);
  CHECK(p.chunk[3] == doctest::Approx(7.5).epsilon(1e-14));
}

TEST_CASE("a larger domain weight never lowers the teleoperated weight mass") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto db = fixtures::random_database(rng, 200, 1, false);
    std::vector<double> q(16);
    for (double& v : q) v = std::normal_distribution<double>()(rng);
    double prev = -1;
    for (double m : {0.5, 1.0, 2.0, 3.0, 10.0}) {
      const auto p = knn_predict(db, q, 10, m);
      double mass = 0;
      for (std::size_t r = 0; r < p.neighbors.size(); ++r) {
        if (db.domains[p.neighbors[r]] == Domain::kTeleoperated) mass += p.weights[r];
      }
      CHECK(mass >= prev - 1e-15);
      prev = mass;
    }
  }
}

TEST_CASE("temporal ensemble examples") {
  const double fused = ensemble_fuse({{0, {1.0}}, {1, {2.0}}, {2, {3.0}}}, 0.01)[0];
  CHECK(std::abs(fused - 1.99333) < 1e-5);
  CHECK(std::abs(fused - oracle::ensemble({{0, 1.0}, {1, 2.0}, {2, 3.0}}, 0.01)) < 1e-15);
  CHECK(ensemble_fuse({{0, {4.25}}}, 0.01)[0] == 4.25);
  CHECK(ensemble_fuse({{0, {1.0}}, {1, {2.0}}, {2, {4.0}}}, 0.0)[0] == 7.0 / 3.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::pair<std::size_t, std::vector<double>>> preds;
    const int n = 1 + static_cast<int>(rng() % 20);
    double lo = 1e9, hi = -1e9;
    for (int a = 0; a < n; ++a) {
      const double v = u(rng);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      preds.push_back({static_cast<std::size_t>(a), {v}});
    }
    const double f = ensemble_fuse(preds, std::uniform_real_distribution<double>(0, 1)(rng))[0];
    CHECK(f >= lo - 1e-12);
    CHECK(f <= hi + 1e-12);
  }
}

TEST_CASE("ensemble buffer ages and evicts chunks") {
  EnsembleBuffer b(3, 1, 0.0);
  // Chunks predict (step, step + 1, step + 2) offsets for consecutive steps.
  CHECK(b.step(std::vector<double>{10, 11, 12})[0] == 10);
  CHECK(b.step(std::vector<double>{20, 21, 22})[0] == (11.0 + 20.0) / 2);
  CHECK(b.step(std::vector<double>{30, 31, 32})[0] == (12.0 + 21.0 + 30.0) / 3);
  CHECK(b.pending() == 2);
  CHECK(b.step(std::vector<double>{40, 41, 42})[0] == (22.0 + 31.0 + 40.0) / 3);
  CHECK_THROWS_AS(b.step(std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(EnsembleBuffer(0, 1), Error);
}

TEST_CASE("database files round trip") {
  std::mt19937_64 rng(2);
  const auto db = fixtures::random_database(rng, 50, 4, false);
  const std::string bytes = serialize_database(db);
  const auto back = parse_database(bytes);
  CHECK(back == db);
  CHECK(serialize_database(back) == bytes);
  CHECK_THROWS_AS(parse_database(bytes.substr(0, bytes.size() - 1)), Error);
  CHECK_THROWS_AS(parse_database("NOTADB"), Error);
}

TEST_CASE("policy episodes respect the protocol and the database") {
  const Rig rig;
  const auto run = scripted_teleop(rig, 2, scripted_operator(rig, 2));
  DatasetAssembly a;
  a.finetune.push_back(run.demo);
  const auto db = build_database(a, kDefaultFeaturizer, 5.0, 20);
  SimBackend backend(Simulator(rig.robot, rig.world), 2);
  PolicyConfig pc = protocol_policy_config(rig.world, 1);
  std::vector<DualArmCommand> cmds;
  LoopOptions opt;
  opt.observer = [&](const TickRecord& r) { cmds.push_back(*r.command); };
  const auto ep = run_policy(db, backend, rig.world, rig.loop, pc, opt);
  CHECK(ep.stats.ticks_executed <= 300);
  CHECK(ep.record.metadata.at("source") == "policy");
  CHECK_FALSE(ep.aborted);
  // Self-imitation tracks the demonstration within one velocity-capped step.
  const auto& frames = run.demo.frames;
  double worst = 0;
  for (std::size_t t = 0; t < ep.record.frames.size(); ++t) {
    for (int j = 0; j < 14; ++j) worst = std::max(worst, std::abs(ep.record.frames[t].joint_pos[j] - frames[t].joint_pos[j]));
  }
  CHECK(worst <= 0.2 + 1e-9);

  SimBackend other(Simulator(rig.robot, rig.world), 2);
  CHECK_THROWS_AS(run_policy(NeighborDatabase{}, other, rig.world, rig.loop, pc), Error);
  SimBackend shelf(Simulator(rig.robot, WorldConfig::curtained_shelf()), 0);
  CHECK_THROWS_AS(run_policy(db, shelf, rig.world, rig.loop, pc), Error);
}
