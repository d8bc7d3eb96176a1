#include "airexo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace airexo {

namespace {

constexpr char kDbMagic[8] = {'A', 'I', 'R', 'E', 'X', 'O', 'D', 'B'};

void check_featurizer(const std::string& id) {
  if (id != kDefaultFeaturizer) throw Error(ErrorKind::kConfiguration, "unknown featurizer '" + id + "'");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
  std::string_view in;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (in.size() - pos < n) throw Error(ErrorKind::kSchema, "database file truncated");
  }
  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64() { return std::bit_cast<double>(le(8)); }
};

}  // namespace

std::size_t feature_dim(const std::string& featurizer) {
  check_featurizer(featurizer);
  return kDualArmJoints + 2;
}

std::vector<double> raw_features(const Demonstration& demo, const DemoFrame& frame, const std::string& featurizer) {
  check_featurizer(featurizer);
  std::vector<double> f(frame.joint_pos.begin(), frame.joint_pos.end());
  f.push_back(demo.gripper_width(frame, Arm::kLeft));
  f.push_back(demo.gripper_width(frame, Arm::kRight));
  return f;
}

std::vector<double> raw_features(const SimState& state, const std::string& featurizer) {
  check_featurizer(featurizer);
  std::vector<double> f;
  f.reserve(kDualArmJoints + 2);
  for (Arm a : kArms) f.insert(f.end(), state.arm(a).q.begin(), state.arm(a).q.end());
  if (f.size() != static_cast<std::size_t>(kDualArmJoints)) throw Error(ErrorKind::kSchema, "state joint count mismatch");
  for (Arm a : kArms) f.push_back(state.arm(a).gripper_width);
  return f;
}

std::array<double, kActionDim> frame_action(const Demonstration& demo, const DemoFrame& frame) {
  std::array<double, kActionDim> a{};
  std::copy(frame.joint_pos.begin(), frame.joint_pos.end(), a.begin());
  a[14] = demo.gripper_width(frame, Arm::kLeft);
  a[15] = demo.gripper_width(frame, Arm::kRight);
  return a;
}

DualArmCommand action_to_command(std::span<const double> action) {
  if (action.size() != kActionDim) throw Error(ErrorKind::kSchema, "action must have 16 values");
  DualArmCommand c;
  for (Arm a : kArms) {
    const auto off = index_of(a) * kArmJoints;
    c.joints[index_of(a)].assign(action.begin() + static_cast<std::ptrdiff_t>(off),
                                 action.begin() + static_cast<std::ptrdiff_t>(off + kArmJoints));
  }
  c.gripper_widths = {action[14], action[15]};
  return c;
}

void DatasetAssembly::validate() const {
  if (pretrain.empty() && finetune.empty()) throw Error(ErrorKind::kConfiguration, "dataset assembly is empty");
  for (const auto& d : pretrain) {
    if (d.domain != Domain::kInTheWild) throw Error(ErrorKind::kSchema, "pretrain set holds a teleoperated demo " + d.id);
  }
  for (const auto& d : finetune) {
    if (d.domain != Domain::kTeleoperated) throw Error(ErrorKind::kSchema, "finetune set holds an in-the-wild demo " + d.id);
  }
  if (!(domain_weight > 0.0)) throw Error(ErrorKind::kConfiguration, "domain_weight must be positive");
}

std::vector<double> NeighborDatabase::normalize(std::span<const double> raw) const {
  if (raw.size() != feature_dim) {
    throw Error(ErrorKind::kSchema, "feature dim mismatch " + std::to_string(raw.size()) + " != " +
                                        std::to_string(feature_dim));
  }
  std::vector<double> out(feature_dim);
  for (std::size_t j = 0; j < feature_dim; ++j) out[j] = (raw[j] - mean[j]) / stddev[j];
  return out;
}

NeighborDatabase build_database(const DatasetAssembly& assembly, const std::string& featurizer, double target_hz,
                                std::size_t horizon) {
  assembly.validate();
  if (horizon == 0) throw Error(ErrorKind::kConfiguration, "chunk horizon must be positive");
  NeighborDatabase db;
  db.featurizer = featurizer;
  db.feature_dim = feature_dim(featurizer);
  db.horizon = horizon;
  db.target_hz = target_hz;
  std::vector<double> raw;
  auto add = [&](const Demonstration& src) {
    const Demonstration d = resample(src, target_hz);
    const auto di = static_cast<std::uint32_t>(db.demo_ids.size());
    db.demo_ids.push_back(d.id);
    std::vector<std::array<double, kActionDim>> acts;
    acts.reserve(d.frames.size());
    for (const auto& f : d.frames) acts.push_back(frame_action(d, f));
    const std::size_t n = d.frames.size();
    for (std::size_t j = 0; j < n; ++j) {
      const auto f = raw_features(d, d.frames[j], featurizer);
      if (f.size() != db.feature_dim) throw Error(ErrorKind::kSchema, "feature dim mismatch in " + d.id);
      raw.insert(raw.end(), f.begin(), f.end());
      for (std::size_t h = 0; h < horizon; ++h) {
        const auto& a = acts[std::min(j + 1 + h, n - 1)];
        db.actions.insert(db.actions.end(), a.begin(), a.end());
      }
      db.domains.push_back(d.domain);
      db.demo_index.push_back(di);
      db.frame_index.push_back(static_cast<std::uint32_t>(j));
      db.padded.push_back(j + horizon > n - 1 ? 1 : 0);
    }
  };
  for (const auto& d : assembly.pretrain) add(d);
  for (const auto& d : assembly.finetune) add(d);

  const std::size_t n = db.size(), dim = db.feature_dim;
  db.mean.assign(dim, 0.0);
  db.stddev.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += raw[i * dim + j];
      constant = constant && raw[i * dim + j] == raw[j];
    }
    const double mean = constant ? raw[j] : sum / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (raw[i * dim + j] - mean) * (raw[i * dim + j] - mean);
    db.mean[j] = mean;
    db.stddev[j] = std::max(std::sqrt(var / static_cast<double>(n)), kFeatureStdFloor);
  }
  db.features.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) db.features[i * dim + j] = (raw[i * dim + j] - db.mean[j]) / db.stddev[j];
  }
  return db;
}

std::string serialize_database(const NeighborDatabase& db) {
  nlohmann::json h = {{"schema", kDatabaseSchema},      {"featurizer", db.featurizer},
                      {"feature_dim", db.feature_dim},  {"action_dim", db.action_dim},
                      {"horizon", db.horizon},          {"target_hz", db.target_hz},
                      {"count", db.size()},             {"demos", db.demo_ids},
                      {"mean", db.mean},                {"std", db.stddev}};
  const std::string header = h.dump();
  std::string out(kDbMagic, sizeof kDbMagic);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (std::size_t i = 0; i < db.size(); ++i) {
    put_u32(out, db.demo_index[i]);
    put_u32(out, db.frame_index[i]);
    out.push_back(db.domains[i] == Domain::kTeleoperated ? 0 : 1);
    out.push_back(static_cast<char>(db.padded[i]));
    for (double v : db.feature(i)) put_f64(out, v);
    for (double v : db.chunk(i)) put_f64(out, v);
  }
  return out;
}

NeighborDatabase parse_database(std::string_view bytes) {
  Cursor c{bytes};
  c.need(8);
  if (bytes.substr(0, 8) != std::string_view(kDbMagic, 8)) throw Error(ErrorKind::kSchema, "not a database file");
  c.pos = 8;
  const auto hlen = static_cast<std::size_t>(c.le(4));
  c.need(hlen);
  NeighborDatabase db;
  std::size_t count = 0;
  try {
    const auto h = nlohmann::json::parse(bytes.substr(c.pos, hlen));
    c.pos += hlen;
    if (h.at("schema").get<std::string>() != kDatabaseSchema) throw Error(ErrorKind::kSchema, "unsupported database schema");
    db.featurizer = h.at("featurizer").get<std::string>();
    db.feature_dim = h.at("feature_dim").get<std::size_t>();
    db.action_dim = h.at("action_dim").get<std::size_t>();
    db.horizon = h.at("horizon").get<std::size_t>();
    db.target_hz = h.at("target_hz").get<double>();
    db.demo_ids = h.at("demos").get<std::vector<std::string>>();
    db.mean = h.at("mean").get<std::vector<double>>();
    db.stddev = h.at("std").get<std::vector<double>>();
    count = h.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("database header: ") + e.what());
  }
  if (db.feature_dim != feature_dim(db.featurizer) || db.mean.size() != db.feature_dim ||
      db.stddev.size() != db.feature_dim || db.action_dim != kActionDim) {
    throw Error(ErrorKind::kSchema, "database dims inconsistent");
  }
  for (std::size_t i = 0; i < count; ++i) {
    db.demo_index.push_back(static_cast<std::uint32_t>(c.le(4)));
    db.frame_index.push_back(static_cast<std::uint32_t>(c.le(4)));
    db.domains.push_back(c.le(1) == 0 ? Domain::kTeleoperated : Domain::kInTheWild);
    db.padded.push_back(static_cast<std::uint8_t>(c.le(1)));
    for (std::size_t j = 0; j < db.feature_dim; ++j) db.features.push_back(c.f64());
    for (std::size_t j = 0; j < db.horizon * db.action_dim; ++j) db.actions.push_back(c.f64());
    if (db.demo_index.back() >= db.demo_ids.size()) throw Error(ErrorKind::kSchema, "entry refers to unknown demo");
  }
  if (c.pos != bytes.size()) throw Error(ErrorKind::kSchema, "trailing bytes in database file");
  return db;
}

void save_database(const NeighborDatabase& db, const std::filesystem::path& path) {
  const std::string bytes = serialize_database(db);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

NeighborDatabase load_database(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_database(ss.str());
}

Prediction knn_predict(const NeighborDatabase& db, std::span<const double> query, std::size_t k,
                       double domain_weight, kernels::Exec exec) {
  const std::size_t n = db.size();
  if (n == 0) throw Error(ErrorKind::kState, "neighbor database is empty");
  if (k < 1 || k > n) throw Error(ErrorKind::kInvalidInput, "k must be in [1, " + std::to_string(n) + "]");
  if (query.size() != db.feature_dim) {
    throw Error(ErrorKind::kSchema, "feature dim mismatch " + std::to_string(query.size()) + " != " +
                                        std::to_string(db.feature_dim));
  }
  std::vector<double> sq(n);
  kernels::squared_distances(exec, db.features, db.feature_dim, query, sq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return sq[a] < sq[b] || (sq[a] == sq[b] && a < b); });
  Prediction p;
  p.neighbors.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  double total = 0.0;
  for (std::size_t i : p.neighbors) {
    const double d = std::sqrt(sq[i]);
    const double m = db.domains[i] == Domain::kTeleoperated ? domain_weight : 1.0;
    p.distances.push_back(d);
    p.weights.push_back(m / (d + kNeighborEpsilon));
    total += p.weights.back();
  }
  for (double& w : p.weights) w /= total;
  p.chunk.assign(db.horizon * db.action_dim, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const auto c = db.chunk(p.neighbors[r]);
    for (std::size_t j = 0; j < c.size(); ++j) p.chunk[j] += p.weights[r] * c[j];
  }
  return p;
}

std::vector<double> ensemble_fuse(const std::vector<std::pair<std::size_t, std::vector<double>>>& predictions,
                                  double k) {
  if (predictions.empty()) throw Error(ErrorKind::kInvalidInput, "nothing to fuse");
  const std::size_t dim = predictions.front().second.size();
  std::vector<double> num(dim, 0.0);
  double den = 0.0;
  for (const auto& [age, a] : predictions) {
    if (a.size() != dim) throw Error(ErrorKind::kSchema, "ensemble prediction size mismatch");
    const double w = std::exp(-k * static_cast<double>(age));
    den += w;
    for (std::size_t j = 0; j < dim; ++j) num[j] += w * a[j];
  }
  for (double& v : num) v /= den;
  return num;
}

EnsembleBuffer::EnsembleBuffer(std::size_t horizon, std::size_t action_dim, double k)
    : horizon_(horizon), action_dim_(action_dim), k_(k) {
  if (horizon == 0 || action_dim == 0) throw Error(ErrorKind::kConfiguration, "ensemble needs a positive horizon");
  if (!(k >= 0.0)) throw Error(ErrorKind::kConfiguration, "ensemble k must be non-negative");
}

std::vector<double> EnsembleBuffer::step(std::span<const double> chunk) {
  if (chunk.size() != horizon_ * action_dim_) throw Error(ErrorKind::kSchema, "chunk size mismatch");
  pending_.push_front({0, std::vector<double>(chunk.begin(), chunk.end())});
  std::vector<std::pair<std::size_t, std::vector<double>>> preds;
  preds.reserve(pending_.size());
  for (const auto& e : pending_) {
    const auto off = static_cast<std::ptrdiff_t>(e.age * action_dim_);
    preds.emplace_back(e.age, std::vector<double>(e.chunk.begin() + off,
                                                  e.chunk.begin() + off + static_cast<std::ptrdiff_t>(action_dim_)));
  }
  auto fused = ensemble_fuse(preds, k_);
  for (auto& e : pending_) ++e.age;
  while (!pending_.empty() && pending_.back().age >= horizon_) pending_.pop_back();
  return fused;
}

PolicyEpisode run_policy(const NeighborDatabase& db, RobotBackend& backend, const WorldConfig& world,
                         const LoopConfig& loop, const PolicyConfig& policy, const LoopOptions& options) {
  if (db.size() == 0) throw Error(ErrorKind::kState, "neighbor database is empty");
  if (policy.k < 1 || policy.k > db.size()) throw Error(ErrorKind::kInvalidInput, "k out of range for database");
  if (backend.task() != world.task) throw Error(ErrorKind::kWorldType, "world config does not match backend");
  EnsembleBuffer buffer(db.horizon, db.action_dim, policy.ensemble_k);
  SessionRecorder recorder(backend.robot(), world, backend.seed(), "");
  auto next = [&](const TickInput& in) {
    const auto q = db.normalize(raw_features(*in.state, db.featurizer));
    const Prediction p = knn_predict(db, q, policy.k, policy.domain_weight);
    CommandDecision d;
    d.kind = CommandDecision::Kind::kCommand;
    d.command = action_to_command(buffer.step(p.chunk));
    return d;
  };
  LoopOptions opt = options;
  opt.observer = [&](const TickRecord& r) {
    recorder.on_tick(r);
    if (options.observer) options.observer(r);
  };
  std::int64_t ticks = loop.ticks_for(policy.duration_s);
  if (policy.max_steps) ticks = std::min<std::int64_t>(ticks, *policy.max_steps);
  PolicyEpisode ep;
  ep.stats = run_loop(next, backend, loop, ticks, opt);
  ep.aborted = ep.stats.aborted;
  if (recorder.frame_count() >= 2) {
    ep.record = recorder.finish(make_session_id("policy"));
    ep.record.metadata["source"] = "policy";
    ep.record.metadata["k"] = policy.k;
    ep.record.metadata["aborted"] = ep.aborted;
  }
  return ep;
}

}  // namespace airexo
