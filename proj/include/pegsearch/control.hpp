#pragma once
//
// Cartesian impedance control of the peg and the finite-state machine that
// sequences approach, rim probing, lateral move, and insertion. The outer
// machine decides at 50 Hz; the impedance law is evaluated every simulation
// step (1 kHz) against the command issued for the current period.

#include "pegsearch/geom.hpp"
#include "pegsearch/pomdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pegsearch::control {

using geom::Mat3;
using geom::PegHoleGeometry;
using geom::RigidPose;
using geom::Vec2;
using geom::Vec3;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

//! Raised when the Euler parameterization approaches gimbal lock; callers
//! route it to the Fail state instead of dividing by a vanishing cosine.
struct EulerSingularity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPitchGuard = std::numbers::pi / 2.0 - 0.1;

//==============================================================================
// Z-Y-X Euler machinery
//==============================================================================

//! Angles (roll, pitch, yaw) with R = Rz(yaw) Ry(pitch) Rx(roll).
inline Vec3 euler_zyx(const Mat3 &R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return Vec3(roll, pitch, yaw);
}

inline Mat3 rotation_zyx(const Vec3 &rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

//! World angular velocity per unit Euler rate: omega = T(rpy) * d(rpy)/dt.
inline Mat3 euler_rate_matrix(const Vec3 &rpy) {
  const double cp = std::cos(rpy.y()), sp = std::sin(rpy.y());
  const double cy = std::cos(rpy.z()), sy = std::sin(rpy.z());
  Mat3 T;
  T << cp * cy, -sy, 0.0, //
      cp * sy, cy, 0.0,   //
      -sp, 0.0, 1.0;
  return T;
}

//! Block-diagonal map from (linear velocity, Euler rates) to a world twist:
//! A(rpy) = blkdiag(I, T(rpy)). Identity at zero attitude; singular at
//! pitch +-pi/2, guarded well before that.
inline Mat6 euler_rate_map(const Vec3 &rpy) {
  if (std::abs(rpy.y()) >= kPitchGuard)
    throw EulerSingularity("euler_rate_map: pitch near +-pi/2");
  Mat6 A = Mat6::Identity();
  A.block<3, 3>(3, 3) = euler_rate_matrix(rpy);
  return A;
}

//==============================================================================
// Impedance law and wrench transforms
//==============================================================================

//! One 50 Hz command: a pose/twist setpoint with gains, plus a feedforward
//! wrench about the peg body origin in world axes.
struct ControllerCommand {
  RigidPose desired;
  Vec6 desired_twist = Vec6::Zero();
  Mat6 kp = Mat6::Zero();
  Mat6 kd = Mat6::Zero();
  Vec6 feedforward = Vec6::Zero();
};

//! What the controller senses each step.
struct SensorSnapshot {
  RigidPose pose;
  Vec6 twist = Vec6::Zero();            // realized (linear, angular)
  Vec6 external_wrench = Vec6::Zero();  // contact reaction on the peg
  double time = 0.0;
};

inline Vec3 wrap_angles(Vec3 a) {
  for (int i = 0; i < 3; ++i)
    a(i) = std::remainder(a(i), 2.0 * std::numbers::pi);
  return a;
}

//! Pose error as (position difference, wrapped Z-Y-X Euler difference).
inline Vec6 pose_error(const RigidPose &desired, const RigidPose &actual) {
  Vec6 err;
  err.head<3>() = desired.position - actual.position;
  err.tail<3>() = wrap_angles(euler_zyx(desired.rotation) - euler_zyx(actual.rotation));
  return err;
}

//! Task-space impedance: spring on the pose error mapped through the
//! transposed-inverse Euler-rate map, damping on the twist error, plus the
//! commanded feedforward.
inline Vec6 impedance_wrench(const ControllerCommand &cmd,
                             const SensorSnapshot &sense) {
  const Vec3 rpy = euler_zyx(sense.pose.rotation);
  if (std::abs(rpy.y()) >= kPitchGuard)
    throw EulerSingularity("impedance_wrench: pitch near +-pi/2");
  const Mat3 T = euler_rate_matrix(rpy);
  Mat6 A_inv_T = Mat6::Identity();
  A_inv_T.block<3, 3>(3, 3) = T.transpose().inverse();
  const Vec6 spring = cmd.kp * pose_error(cmd.desired, sense.pose);
  return A_inv_T * spring - cmd.kd * (sense.twist - cmd.desired_twist) +
         cmd.feedforward;
}

//! Equivalent wrench about the body origin of a force (and optional torque)
//! acting at a world point: the force carries over, the torque picks up the
//! moment arm.
inline Vec6 feedforward_wrench(const Vec3 &force, const Vec3 &world_point,
                               const Vec3 &body_origin,
                               const Vec3 &torque = Vec3::Zero()) {
  Vec6 w;
  w.head<3>() = force;
  w.tail<3>() = torque + (world_point - body_origin).cross(force);
  return w;
}

//==============================================================================
// Gains and configuration
//==============================================================================

inline Mat6 diag_gains(const Vec3 &linear, const Vec3 &rotational) {
  Mat6 g = Mat6::Zero();
  g.diagonal().head<3>() = linear;
  g.diagonal().tail<3>() = rotational;
  return g;
}

struct StateGains {
  Mat6 kp = Mat6::Zero();
  Mat6 kd = Mat6::Zero();
};

//! Everything the controller needs: loop timing, the probe schedule, event
//! thresholds, and per-state impedance gains. Defaults reproduce the desk
//! setup (10 mm peg, 1 mm clearance).
struct ControlConfig {
  double fsm_period = 0.02;
  int probe_count = 6;
  double probe_force = 10.0;
  double probe_ramp_time = 0.2;
  double probe_hold_time = 0.3;
  double probe_settle_time = 0.6;
  double press_force = 5.0;

  double contact_force_threshold = 3.0;
  double insertion_depth_trigger = 1e-3;
  double insertion_speed_trigger = 1e-3;
  double stall_window = 1.0;
  double stall_min_descent = 1e-4;
  int reset_budget = 0;

  double approach_press_depth = 0.005;
  double approach_timeout = 10.0;
  double reset_duration = 1.0;

  double move_speed = 0.010;
  double move_budget_scale = 3.0;
  double move_budget_slack = 0.015;

  double insert_overdrive = 0.005; // setpoint below the hole bottom
  double tilt_detection_floor = pomdp::kTiltDetectionFloor;

  // gains: approach and settle phases hold the peg stiffly; probing is
  // rotationally soft so a rim force can tilt the peg; move is laterally
  // stiff and vertically soft so the press force rules the normal load;
  // insertion is laterally compliant so the bore can center the peg
  StateGains approach{diag_gains({1000, 1000, 1000}, {30, 30, 30}),
                      diag_gains({40, 40, 40}, {1, 1, 1})};
  StateGains tilt{diag_gains({50, 50, 50}, {5, 5, 5}),
                  diag_gains({5, 5, 5}, {0.01, 0.01, 0.01})};
  StateGains move{diag_gains({1000, 1000, 100}, {30, 30, 30}),
                  diag_gains({40, 40, 10}, {1, 1, 1})};
  StateGains insert{diag_gains({200, 200, 1000}, {30, 30, 30}),
                    diag_gains({20, 20, 40}, {1, 1, 1})};
};

//==============================================================================
// Finite-state machine
//==============================================================================

enum class FsmState { Approach, Tilt, Move, Insert, Finish, Fail, Reset, Spiral };

inline const char *to_string(FsmState s) {
  switch (s) {
  case FsmState::Approach: return "Approach";
  case FsmState::Tilt: return "Tilt";
  case FsmState::Move: return "Move";
  case FsmState::Insert: return "Insert";
  case FsmState::Finish: return "Finish";
  case FsmState::Fail: return "Fail";
  case FsmState::Reset: return "Reset";
  case FsmState::Spiral: return "Spiral";
  }
  return "?";
}

//! Edges the machine is allowed to take. The probing pipeline runs
//! Approach -> Tilt -> Move -> Insert -> Finish; blind search swaps the two
//! middle states for Spiral; any pre-terminal state may fail, and a failed
//! run may reset back to the approach if the budget allows.
inline bool legal_fsm_edge(FsmState from, FsmState to) {
  using S = FsmState;
  switch (from) {
  case S::Approach: return to == S::Tilt || to == S::Spiral || to == S::Fail;
  case S::Tilt: return to == S::Move || to == S::Fail;
  case S::Move: return to == S::Insert || to == S::Fail;
  case S::Spiral: return to == S::Insert || to == S::Fail;
  case S::Insert: return to == S::Finish || to == S::Fail;
  case S::Fail: return to == S::Reset;
  case S::Reset: return to == S::Approach;
  case S::Finish: return false;
  }
  return false;
}

struct Transition {
  FsmState from = FsmState::Approach;
  FsmState to = FsmState::Approach;
  double time = 0.0;
};

enum class SearchMethod { Active, SpiralPath, LissajousPath };

//! Lateral search offset from the search entry point as a function of time
//! in the search state, paired with the time at which the pattern is spent.
struct SearchPath {
  std::function<Vec2(double)> offset;
  double max_duration = 0.0;
};

//! Sequencer for one episode. Construct, then each 50 Hz period call tick()
//! with the latest snapshot and hold the returned command for the period;
//! feed observe() with every inner-rate sample so probe windows see the
//! full trajectory.
class FsmController {
public:
  FsmController(ControlConfig cfg, PegHoleGeometry geometry,
                SearchMethod method, SearchPath path = {})
      : cfg_(std::move(cfg)), geom_(geometry), method_(method),
        path_(std::move(path)) {
    policy_.probe_count = cfg_.probe_count;
    belief_ = pomdp::initial_belief();
    ticks_ramp_ = to_ticks(cfg_.probe_ramp_time);
    ticks_hold_ = to_ticks(cfg_.probe_hold_time);
    ticks_settle_ = to_ticks(cfg_.probe_settle_time);
  }

  //! 1 kHz sample feed; recorded only while a probe window is open.
  void observe(const Vec3 &sensed_position, bool inserted) {
    if (recording_) {
      window_.push_back(sensed_position);
      window_inserted_ = window_inserted_ || inserted;
    }
  }

  ControllerCommand tick(const SensorSnapshot &sense) {
    if (!started_) {
      started_ = true;
      home_ = sense.pose;
    }
    const FsmState before = state_;
    switch (state_) {
    case FsmState::Approach: tick_approach(sense); break;
    case FsmState::Tilt: tick_tilt(sense); break;
    case FsmState::Move: tick_move(sense); break;
    case FsmState::Insert: tick_insert(sense); break;
    case FsmState::Spiral: tick_search(sense); break;
    case FsmState::Fail: tick_fail(sense); break;
    case FsmState::Reset: tick_reset(sense); break;
    case FsmState::Finish: command_hold(sense); break;
    }
    if (state_ == before)
      ++state_ticks_;
    return cmd_;
  }

  FsmState state() const { return state_; }
  const pomdp::Belief &belief() const { return belief_; }
  const pomdp::PolicyState &policy() const { return policy_; }
  const std::vector<Transition> &transitions() const { return transitions_; }
  const std::string &failure_reason() const { return failure_reason_; }
  bool terminal() const {
    return state_ == FsmState::Finish ||
           (state_ == FsmState::Fail && resets_used_ >= cfg_.reset_budget);
  }
  bool succeeded() const { return state_ == FsmState::Finish; }

  //! Tilt axes accepted during this episode, with the observation time.
  struct TiltRecord {
    geom::Chord axis;
    Vec2 estimate = Vec2::Zero();
    double time = 0.0;
  };
  const std::vector<TiltRecord> &tilt_records() const { return tilt_records_; }

private:
  long to_ticks(double seconds) const {
    return std::max<long>(1, std::lround(seconds / cfg_.fsm_period));
  }
  double state_time() const { return double(state_ticks_) * cfg_.fsm_period; }

  void change_state(FsmState to, const SensorSnapshot &sense) {
    transitions_.push_back({state_, to, sense.time});
    state_ = to;
    state_ticks_ = 0;
    state_entry_pose_ = sense.pose;
    if (to == FsmState::Insert)
      stall_history_.clear();
    if (to == FsmState::Tilt)
      begin_probe(sense);
  }

  void command_hold(const SensorSnapshot &sense) {
    cmd_ = ControllerCommand{};
    cmd_.desired = sense.pose;
    cmd_.kp = cfg_.approach.kp;
    cmd_.kd = cfg_.approach.kd;
  }

  RigidPose upright_at(const Vec2 &xy, double z) const {
    RigidPose p;
    p.position = Vec3(xy.x(), xy.y(), z);
    return p;
  }

  bool insertion_detected(const SensorSnapshot &sense) const {
    return sense.pose.position.z() < -cfg_.insertion_depth_trigger &&
           sense.twist.head<2>().norm() < cfg_.insertion_speed_trigger;
  }

  //--- Approach ---------------------------------------------------------
  void tick_approach(const SensorSnapshot &sense) {
    cmd_ = ControllerCommand{};
    cmd_.desired = upright_at(home_.position.head<2>(), -cfg_.approach_press_depth);
    cmd_.kp = cfg_.approach.kp;
    cmd_.kd = cfg_.approach.kd;
    const bool in_contact =
        sense.external_wrench(2) >= cfg_.contact_force_threshold &&
        sense.pose.position.z() < 2e-3;
    if (in_contact) {
      change_state(method_ == SearchMethod::Active ? FsmState::Tilt
                                                   : FsmState::Spiral,
                   sense);
      return;
    }
    if (state_time() > cfg_.approach_timeout)
      fail("approach_timeout", sense);
  }

  //--- Tilt probing -----------------------------------------------------
  void begin_probe(const SensorSnapshot &sense) {
    const pomdp::Action a =
        pomdp::next_action(policy_, belief_, geom_, cfg_.fsm_period);
    if (a.type != pomdp::Action::Type::TiltProbe) {
      fail("probe_exhausted", sense);
      return;
    }
    probe_index_ = a.probe_index;
    probe_tick0_ = state_ticks_;
    window_.clear();
    window_inserted_ = false;
    recording_ = true;
    pending_obs_.reset();
  }

  void tick_tilt(const SensorSnapshot &sense) {
    if (state_ == FsmState::Fail)
      return; // probe exhaustion during entry
    const long t = state_ticks_ - probe_tick0_;
    const long ramp_end = ticks_ramp_;
    const long hold_end = ticks_ramp_ + ticks_hold_;
    const long settle_end = hold_end + ticks_settle_;

    if (t < hold_end) {
      // active probe: rotationally soft, setpoint tracks the sensed pose so
      // only the rim force loads the peg
      const double scale =
          t < ramp_end ? double(t + 1) / double(ramp_end) : 1.0;
      const Vec3 body_pt =
          pomdp::probe_point_body(probe_index_, cfg_.probe_count, geom_.peg_radius);
      const Vec3 world_pt = sense.pose.position + sense.pose.rotation * body_pt;
      cmd_ = ControllerCommand{};
      cmd_.desired = sense.pose;
      cmd_.kp = cfg_.tilt.kp;
      cmd_.kd = cfg_.tilt.kd;
      cmd_.feedforward = feedforward_wrench(
          Vec3(0, 0, -cfg_.probe_force * scale), world_pt, sense.pose.position);
      return;
    }

    if (recording_) { // window just closed: classify once
      recording_ = false;
      pending_obs_ = pomdp::classify_observation(window_, window_inserted_, geom_,
                                                 cfg_.tilt_detection_floor);
      belief_ = pomdp::update_belief(belief_, *pending_obs_, geom_);
      if (pending_obs_->type == pomdp::Observation::Type::Tilted)
        tilt_records_.push_back({pending_obs_->axis, belief_.point, sense.time});
    }

    // settle: press the peg flat again before deciding
    cmd_ = ControllerCommand{};
    cmd_.desired = upright_at(state_entry_pose_.position.head<2>(), 0.0);
    cmd_.kp = cfg_.approach.kp;
    cmd_.kd = cfg_.approach.kd;
    cmd_.feedforward.segment<3>(0) = Vec3(0, 0, -cfg_.press_force);

    if (t + 1 >= settle_end) {
      if (pending_obs_ &&
          pending_obs_->type != pomdp::Observation::Type::Static) {
        change_state(FsmState::Move, sense);
        return;
      }
      begin_probe(sense); // may fail on exhaustion
    }
  }

  //--- Move -------------------------------------------------------------
  void tick_move(const SensorSnapshot &sense) {
    const pomdp::Action a =
        pomdp::next_action(policy_, belief_, geom_, cfg_.fsm_period);
    const Vec2 dir = a.type == pomdp::Action::Type::Move
                         ? Vec2(a.direction)
                         : Vec2(Vec2::Zero());
    const double advance = cfg_.move_speed * state_time();
    // the estimated magnitude can collapse under sensing noise (shallow-arc
    // curvature is ill-conditioned), so never budget below the geometric
    // worst case of a barely-overlapping peg
    const double reach =
        std::max(belief_.point.norm(), 2.0 * geom_.peg_radius);
    const double budget = cfg_.move_budget_scale * reach + cfg_.move_budget_slack;

    cmd_ = ControllerCommand{};
    cmd_.desired =
        upright_at(state_entry_pose_.position.head<2>() + advance * dir, 0.0);
    cmd_.kp = cfg_.move.kp;
    cmd_.kd = cfg_.move.kd;
    cmd_.feedforward.segment<3>(0) = Vec3(0, 0, -cfg_.press_force);

    if (insertion_detected(sense)) {
      belief_ = pomdp::update_belief(
          belief_, {pomdp::Observation::Type::Inserted, {}}, geom_);
      change_state(FsmState::Insert, sense);
      return;
    }
    if (advance > budget)
      fail("move_overshoot", sense);
  }

  //--- Insert -----------------------------------------------------------
  void tick_insert(const SensorSnapshot &sense) {
    cmd_ = ControllerCommand{};
    cmd_.desired = upright_at(state_entry_pose_.position.head<2>(),
                              -(geom_.hole_depth + cfg_.insert_overdrive));
    cmd_.kp = cfg_.insert.kp;
    cmd_.kd = cfg_.insert.kd;

    const double z = sense.pose.position.z();
    if (z <= -(geom_.hole_depth - 1e-4)) {
      change_state(FsmState::Finish, sense);
      command_hold(sense);
      return;
    }
    stall_history_.push_back({sense.time, z});
    while (stall_history_.size() > 1 &&
           stall_history_.front().first < sense.time - cfg_.stall_window)
      stall_history_.pop_front();
    if (!stall_history_.empty() &&
        sense.time - stall_history_.front().first >=
            cfg_.stall_window - 0.5 * cfg_.fsm_period &&
        stall_history_.front().second - z < cfg_.stall_min_descent)
      fail("insert_stall", sense);
  }

  //--- Blind search -----------------------------------------------------
  void tick_search(const SensorSnapshot &sense) {
    if (!path_.offset) {
      fail("no_search_path", sense);
      return;
    }
    const Vec2 offset = path_.offset(std::min(state_time(), path_.max_duration));
    cmd_ = ControllerCommand{};
    cmd_.desired =
        upright_at(state_entry_pose_.position.head<2>() + offset, 0.0);
    cmd_.kp = cfg_.move.kp;
    cmd_.kd = cfg_.move.kd;
    cmd_.feedforward.segment<3>(0) = Vec3(0, 0, -cfg_.press_force);

    if (insertion_detected(sense)) {
      change_state(FsmState::Insert, sense);
      return;
    }
    if (state_time() > path_.max_duration)
      fail("search_exhausted", sense);
  }

  //--- Fail / Reset -----------------------------------------------------
  void fail(const std::string &reason, const SensorSnapshot &sense) {
    if (failure_reason_.empty())
      failure_reason_ = reason;
    change_state(FsmState::Fail, sense);
    command_hold(sense);
  }

  void tick_fail(const SensorSnapshot &sense) {
    command_hold(sense);
    if (resets_used_ < cfg_.reset_budget) {
      ++resets_used_;
      change_state(FsmState::Reset, sense);
    }
  }

  void tick_reset(const SensorSnapshot &sense) {
    cmd_ = ControllerCommand{};
    cmd_.desired = home_;
    cmd_.kp = cfg_.approach.kp;
    cmd_.kd = cfg_.approach.kd;
    if (state_time() >= cfg_.reset_duration) {
      policy_ = pomdp::PolicyState{};
      policy_.probe_count = cfg_.probe_count;
      belief_ = pomdp::initial_belief();
      failure_reason_.clear();
      change_state(FsmState::Approach, sense);
    }
  }

  ControlConfig cfg_;
  PegHoleGeometry geom_;
  SearchMethod method_;
  SearchPath path_;

  FsmState state_ = FsmState::Approach;
  long state_ticks_ = 0;
  bool started_ = false;
  RigidPose home_;
  RigidPose state_entry_pose_;
  ControllerCommand cmd_;

  pomdp::Belief belief_;
  pomdp::PolicyState policy_;
  int probe_index_ = 0;
  long probe_tick0_ = 0;
  long ticks_ramp_ = 1, ticks_hold_ = 1, ticks_settle_ = 1;
  bool recording_ = false;
  bool window_inserted_ = false;
  std::vector<Vec3> window_;
  std::optional<pomdp::Observation> pending_obs_;
  std::vector<TiltRecord> tilt_records_;

  std::deque<std::pair<double, double>> stall_history_;
  std::vector<Transition> transitions_;
  std::string failure_reason_;
  int resets_used_ = 0;
};

} // namespace pegsearch::control
