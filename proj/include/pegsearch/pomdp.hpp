#pragma once
//
// Decision layer for the active search: the belief over the peg-hole
// displacement, the probe/move/stay action set, and the closed-form belief
// update that collapses a tilt observation to a point estimate.

#include "pegsearch/geom.hpp"

#include <cmath>
#include <numbers>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace pegsearch::pomdp {

using geom::Chord;
using geom::PegHoleGeometry;
using geom::Vec2;
using geom::Vec3;

//! Success set: displacements the peg can fall into the hole from.
inline bool in_goal_set(const Vec2 &e, const PegHoleGeometry &g) {
  return e.norm() <= g.clearance;
}

//! Partial-overlap set D searched over: outside the goal, but with enough
//! rim overlap that pressing the peg produces usable contact. The outer
//! margin keeps the chord from degenerating to a point.
inline bool in_overlap_set(const Vec2 &e, const PegHoleGeometry &g) {
  const double d = e.norm();
  return d > g.clearance && d < 2.0 * g.peg_radius - 5e-4;
}

//! Per-episode reward: +1 for a displacement in the goal set, -1 otherwise.
inline double reward(const Vec2 &e, const PegHoleGeometry &g) {
  return in_goal_set(e, g) ? 1.0 : -1.0;
}

//==============================================================================
// Belief
//==============================================================================

struct Belief {
  enum class Kind { UniformOverD, Dirac, Empty };
  Kind kind = Kind::UniformOverD;
  Vec2 point = Vec2::Zero(); // valid for Dirac

  static Belief uniform() { return Belief{}; }
  static Belief dirac(const Vec2 &e) { return Belief{Kind::Dirac, e}; }
};

inline Belief initial_belief() { return Belief::uniform(); }

//! Draw a displacement from the belief (uniform over D by area, or the
//! Dirac point). Deterministic given the generator state.
inline Vec2 sample_belief(const Belief &b, const PegHoleGeometry &g,
                          std::mt19937_64 &rng) {
  if (b.kind == Belief::Kind::Dirac)
    return b.point;
  if (b.kind == Belief::Kind::Empty)
    throw std::logic_error("sample_belief: empty belief");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double r_max = 2.0 * g.peg_radius - 5e-4;
  for (;;) {
    const Vec2 e(u(rng) * r_max, u(rng) * r_max);
    if (in_overlap_set(e, g))
      return e;
  }
}

//==============================================================================
// Actions and observations
//==============================================================================

//! Probe the rim at one of K fixed points, move along a direction, or hold.
struct Action {
  enum class Type { TiltProbe, Move, Stay };
  Type type = Type::Stay;
  int probe_index = 0;       // TiltProbe: 0-based index into the rim schedule
  Vec2 direction = Vec2::Zero(); // Move: unit direction toward the hole
  double duration = 0.0;     // Move: time to act before re-deciding
};

//! Rim probe application point in the peg body frame for index i of k.
inline Vec3 probe_point_body(int index, int count, double peg_radius) {
  const double th = 2.0 * std::numbers::pi * double(index) / double(count);
  return Vec3(peg_radius * std::cos(th), peg_radius * std::sin(th), 0.0);
}

struct Observation {
  enum class Type { Static, Tilted, Inserted };
  Type type = Type::Static;
  Chord axis; // valid for Tilted, in world coordinates
};

//! Probe cursor and exhaustion flag for the fixed K-probe schedule.
struct PolicyState {
  int probe_count = 6;
  int next_probe = 0;
  bool exhausted = false;
};

//! Closed-form update. A tilt observation pins the displacement through the
//! chord map; an insertion pins it to the goal center; a static probe is
//! uninformative about location and keeps the belief.
inline Belief update_belief(const Belief &b, const Observation &obs,
                            const PegHoleGeometry &g) {
  switch (obs.type) {
  case Observation::Type::Tilted:
    return Belief::dirac(geom::displacement_from_chord(obs.axis, g.peg_radius));
  case Observation::Type::Inserted:
    return Belief::dirac(Vec2::Zero());
  case Observation::Type::Static:
    return b;
  }
  return b;
}

//! Greedy policy: probe while uncertain, move toward a located hole, hold
//! once the estimate is within the goal set. Sets the exhaustion flag when
//! every probe came back static.
inline Action next_action(PolicyState &ps, const Belief &b,
                          const PegHoleGeometry &g, double move_duration) {
  Action a;
  if (b.kind == Belief::Kind::Dirac) {
    if (in_goal_set(b.point, g)) {
      a.type = Action::Type::Stay;
      return a;
    }
    a.type = Action::Type::Move;
    a.direction = b.point.normalized();
    a.duration = move_duration;
    return a;
  }
  if (ps.next_probe >= ps.probe_count) {
    ps.exhausted = true;
    a.type = Action::Type::Stay;
    return a;
  }
  a.type = Action::Type::TiltProbe;
  a.probe_index = ps.next_probe++;
  return a;
}

//==============================================================================
// Observation classification
//==============================================================================

//! Peg-origin displacement below which a probe window reads as static;
//! motion this small is indistinguishable from sensing noise.
inline constexpr double kTiltDetectionFloor = 2e-4;

//! Turn one probe window into an observation. Insertion wins outright; a
//! window whose net motion clears the detection floor yields the fitted
//! tilt axis with the chord length taken from the axis-to-center distance
//! on the peg end circle.
inline Observation classify_observation(const std::vector<Vec3> &window,
                                        bool inserted,
                                        const PegHoleGeometry &g,
                                        double detection_floor = kTiltDetectionFloor) {
  Observation obs;
  if (inserted) {
    obs.type = Observation::Type::Inserted;
    return obs;
  }
  if (window.size() < 3)
    return obs;
  double span = 0.0;
  for (const auto &s : window)
    span = std::max(span, (s - window.front()).norm());
  if (span < detection_floor)
    return obs;

  const geom::AxisFit fit = geom::fit_tilt_axis(window);
  const Vec2 center = window.front().head<2>();
  const double d = std::abs(geom::signed_line_distance(center, fit.p, fit.k_hat));
  if (d >= g.peg_radius)
    return obs; // axis misses the end circle; not a rim tilt
  obs.type = Observation::Type::Tilted;
  obs.axis.k_hat = fit.k_hat;
  obs.axis.p = fit.p;
  obs.axis.length = 2.0 * std::sqrt(g.peg_radius * g.peg_radius - d * d);
  return obs;
}

} // namespace pegsearch::pomdp
