#pragma once

// End-to-end pipelines built from the modules: scripted teleoperation and
// in-the-wild recordings, and seeded policy evaluation.

#include <cstdint>
#include <vector>

#include "airexo/metrics.hpp"
#include "airexo/operators.hpp"
#include "airexo/policy.hpp"
#include "airexo/recorder.hpp"

namespace airexo {

struct Rig {
  RobotModel robot = RobotModel::defaults();
  WorldConfig world = WorldConfig::gather_balls();
  CalibrationRecord calibration = default_calibration();
  std::string calibration_ref = "default";
  LoopConfig loop;
};

/// Script for a seed: varied gather sweep, or the shelf pick for the object
/// position the seed produces.
ScriptedOperator scripted_operator(const Rig& rig, std::uint64_t seed, std::array<bool, 2> active = {true, true});

struct TeleopRun {
  Demonstration demo;
  SimState final_state;
  LoopStats stats;
};

/// Virtual-time teleoperation driven by the scripted exoskeleton stream
/// (30 Hz), recorded at the control rate.
TeleopRun scripted_teleop(const Rig& rig, std::uint64_t seed, const ScriptedOperator& op);

/// Exoskeleton-only recording of the script at ~13 Hz with timing jitter.
Demonstration scripted_in_the_wild(const Rig& rig, std::uint64_t seed, const ScriptedOperator& op);

/// Runs the policy once per seed and scores each final state.
std::vector<TrialResult> evaluate_policy(const Rig& rig, const NeighborDatabase& db, const PolicyConfig& policy,
                                         const std::vector<std::uint64_t>& seeds);

PolicyConfig protocol_policy_config(const WorldConfig& world, std::size_t k);

}  // namespace airexo
