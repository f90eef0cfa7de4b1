#pragma once
//
// Quasi-static world model: a rigid peg over a plate with a single bore at
// the origin. No inertia; every step balances the applied wrench against
// contact constraints and viscous drag, so trajectories are deterministic
// functions of the command sequence.
//
// Modes:
//   FreeSpace - no contact, velocity proportional to the applied wrench
//   Resting   - flat on the plate; slides when the tangential force beats
//               Coulomb friction, tips when the pressure point leaves the
//               support polygon
//   Tilting   - rotating at a fixed rate about a support edge; the edge is
//               frozen at onset and revisited only through the pressure
//               point side test
//   Inserted  - bottom face below the plate inside the bore; the walls cap
//               the lateral offset with a clearance funnel that tightens
//               with depth

#include "pegsearch/geom.hpp"
#include "pegsearch/pomdp.hpp"
#include "pegsearch/stability.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace pegsearch::sim {

using geom::Chord;
using geom::Mat3;
using geom::PegHoleGeometry;
using geom::RigidPose;
using geom::Vec2;
using geom::Vec3;
using Vec6 = Eigen::Matrix<double, 6, 1>;

enum class ContactMode { FreeSpace, Resting, Tilting, Inserted };

inline const char *to_string(ContactMode m) {
  switch (m) {
  case ContactMode::FreeSpace: return "FreeSpace";
  case ContactMode::Resting: return "Resting";
  case ContactMode::Tilting: return "Tilting";
  case ContactMode::Inserted: return "Inserted";
  }
  return "?";
}

struct SimConfig {
  double dt = 1e-3;
  double mu = 0.6;

  // viscous drag: quasi-static velocity = force / damping
  double free_damping_linear = 100.0;  // N s/m
  double free_damping_angular = 1.0;   // N m s/rad
  double slide_damping = 500.0;        // N s/m, excess tangential force
  double insert_damping = 400.0;       // N s/m inside the bore

  double tilt_rate = 0.5;                              // rad/s
  double tilt_cap = 10.0 * std::numbers::pi / 180.0;   // rad
  double insert_max_tilt = 0.05;                       // rad, seating snap

  double marginal_band = 5e-4;     // m, treated as still static
  double contact_arc_step = 5.0 * std::numbers::pi / 180.0;
  double contact_cache_tol = 5e-5; // rebuild support set beyond this drift

  double position_noise = 0.0;     // uniform +- bound on sensed position
  bool audit = false;              // per-step interpenetration scan
};

struct WorldState {
  RigidPose pose;          // peg body frame: center of the lower face
  Vec6 twist = Vec6::Zero();
  Vec6 reaction = Vec6::Zero();
  double time = 0.0;
  ContactMode mode = ContactMode::FreeSpace;

  // tilting bookkeeping (valid while mode == Tilting)
  double tilt_angle = 0.0;
  Chord tilt_axis;
  RigidPose tilt_base;

  // support set cache for the resting verdict
  std::vector<stability::Contact3> support_cache;
  stability::SupportPolygon support_hull;
  std::optional<Vec2> support_cache_center;

  // audit results (updated only when SimConfig::audit is set)
  double audit_max_penetration = 0.0;
  bool audit_ok = true;

  //! Hole-center-minus-peg-axis displacement on the surface plane.
  Vec2 displacement() const { return -pose.position.head<2>(); }
  double insertion_depth() const { return std::max(0.0, -pose.position.z()); }
};

inline bool is_inserted(const WorldState &w, const PegHoleGeometry &g) {
  return w.mode == ContactMode::Inserted &&
         w.insertion_depth() >= g.hole_depth - 1e-4;
}

//! Place an upright peg so the hole-minus-peg displacement equals e0, 30 mm
//! above the plate. Only displacements in the searchable overlap set make a
//! well-posed episode.
inline WorldState spawn(const Vec2 &e0, const PegHoleGeometry &g) {
  if (!pomdp::in_overlap_set(e0, g))
    throw std::invalid_argument("spawn: displacement outside the overlap set");
  WorldState w;
  w.pose.position = Vec3(-e0.x(), -e0.y(), 0.030);
  w.pose.rotation = Mat3::Identity();
  return w;
}

namespace detail {

//! Points able to carry load under a flat peg: the rim sampled every
//! contact_arc_step where it lies on the plate (outside the bore), plus the
//! exact rim/bore intersection points when the circles overlap. Positions
//! are world points at z = 0.
inline std::vector<stability::Contact3>
support_contacts(const Vec2 &center, const PegHoleGeometry &g, double arc_step,
                 double mu) {
  std::vector<stability::Contact3> out;
  const double R = g.hole_radius();
  const int n = std::max(8, int(std::lround(2.0 * std::numbers::pi / arc_step)));
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * double(i) / double(n);
    const Vec2 p = center + g.peg_radius * Vec2(std::cos(th), std::sin(th));
    if (p.norm() >= R) {
      stability::Contact3 c;
      c.position = Vec3(p.x(), p.y(), 0.0);
      c.mu = mu;
      out.push_back(c);
    }
  }
  if (const auto inter =
          geom::circle_intersection(center, g.peg_radius, Vec2::Zero(), R)) {
    for (const Vec2 &p : {inter->first, inter->second}) {
      stability::Contact3 c;
      c.position = Vec3(p.x(), p.y(), 0.0);
      c.mu = mu;
      out.push_back(c);
    }
  }
  return out;
}

inline void refresh_support(WorldState &w, const PegHoleGeometry &g,
                            const SimConfig &cfg) {
  const Vec2 center = w.pose.position.head<2>();
  if (w.support_cache_center &&
      (center - *w.support_cache_center).norm() <= cfg.contact_cache_tol)
    return;
  w.support_cache = support_contacts(center, g, cfg.contact_arc_step, cfg.mu);
  w.support_hull = stability::support_polygon(w.support_cache);
  w.support_cache_center = center;
}

//! Surface intercept of the applied wrench: the point on z = 0 about which
//! the wrench has no horizontal moment. Requires a pressing vertical force.
inline Vec2 pressure_point(const Vec6 &wrench, const Vec3 &origin) {
  const double fz = wrench(2);
  const Vec2 c = origin.head<2>();
  const double cz = origin.z();
  return Vec2(c.x() - (wrench(4) + cz * wrench(0)) / fz,
              c.y() + (wrench(3) - cz * wrench(1)) / fz);
}

//! Coulomb slide step: tangential force beyond mu*N moves the peg along the
//! force direction against viscous drag. Returns the translation applied.
inline Vec2 slide_step(WorldState &w, const Vec6 &wrench, const SimConfig &cfg) {
  const Vec2 fh = wrench.head<2>();
  const double normal = -wrench(2);
  const double excess = fh.norm() - cfg.mu * std::max(0.0, normal);
  if (excess <= 0.0 || fh.norm() == 0.0)
    return Vec2::Zero();
  const Vec2 delta = (excess / cfg.slide_damping) * cfg.dt * fh.normalized();
  w.pose.position.head<2>() += delta;
  return delta;
}

inline void enter_inserted(WorldState &w) {
  w.mode = ContactMode::Inserted;
  w.pose.rotation = Mat3::Identity(); // funnel seats the peg upright
  w.tilt_angle = 0.0;
  w.support_cache_center.reset();
}

inline void free_space_step(WorldState &w, const Vec6 &wrench,
                            const PegHoleGeometry &g, const SimConfig &cfg) {
  const Vec3 v = wrench.head<3>() / cfg.free_damping_linear;
  const Vec3 omega = wrench.tail<3>() / cfg.free_damping_angular;
  w.pose.position += v * cfg.dt;
  const double ang = omega.norm() * cfg.dt;
  if (ang > 0.0)
    w.pose.rotation =
        (Eigen::AngleAxisd(ang, omega.normalized()) * w.pose.rotation).eval();

  if (w.pose.position.z() <= 0.0) {
    const Vec2 e = w.displacement();
    const Vec3 axis_tilt = w.pose.rotation.col(2);
    const double tilt = std::acos(std::clamp(axis_tilt.z(), -1.0, 1.0));
    if (e.norm() <= g.clearance && tilt <= cfg.insert_max_tilt) {
      enter_inserted(w);
    } else {
      w.pose.position.z() = 0.0;
      // landing squares the peg onto the plate
      w.pose.rotation = Mat3::Identity();
      w.mode = ContactMode::Resting;
      w.support_cache_center.reset();
    }
  }
}

inline void resting_step(WorldState &w, const Vec6 &wrench,
                         const PegHoleGeometry &g, const SimConfig &cfg) {
  if (wrench(2) >= 0.0) { // nothing pressing: lift off
    w.mode = ContactMode::FreeSpace;
    free_space_step(w, wrench, g, cfg);
    return;
  }
  if (w.displacement().norm() <= g.clearance) {
    enter_inserted(w);
    return;
  }
  slide_step(w, wrench, cfg);
  if (w.displacement().norm() <= g.clearance) { // the slide may cross the bore
    enter_inserted(w);
    return;
  }
  refresh_support(w, g, cfg);
  const Vec2 zmp = pressure_point(wrench, w.pose.position);
  const auto verdict =
      stability::verdict_from_zmp(w.support_hull, zmp, cfg.marginal_band);
  if (verdict.tilts) {
    w.mode = ContactMode::Tilting;
    w.tilt_axis = verdict.axis;
    w.tilt_base = w.pose;
    w.tilt_angle = 0.0;
  }
}

inline void tilting_step(WorldState &w, const Vec6 &wrench,
                         const PegHoleGeometry &g, const SimConfig &cfg) {
  // dragging can still translate the peg; the support edge rides along
  const Vec2 delta = slide_step(w, wrench, cfg);
  if (delta != Vec2::Zero()) {
    w.tilt_base.position.head<2>() += delta;
    w.tilt_axis.p += delta;
  }

  if (w.displacement().norm() <= g.clearance &&
      w.tilt_angle <= cfg.insert_max_tilt) {
    enter_inserted(w);
    return;
  }

  double side = -1.0; // a non-pressing wrench rights the peg
  if (wrench(2) < -1e-12) {
    const Vec2 zmp = pressure_point(wrench, w.pose.position);
    side = geom::signed_line_distance(zmp, w.tilt_axis.p, w.tilt_axis.k_hat);
  }
  const double step = cfg.tilt_rate * cfg.dt;
  w.tilt_angle = std::clamp(w.tilt_angle + (side > 0.0 ? step : -step), 0.0,
                            cfg.tilt_cap);
  if (w.tilt_angle == 0.0 && side <= 0.0) {
    w.pose = w.tilt_base;
    w.mode = ContactMode::Resting;
    return;
  }
  const Vec3 axis_pt(w.tilt_axis.p.x(), w.tilt_axis.p.y(), 0.0);
  const Vec3 axis_dir(w.tilt_axis.k_hat.x(), w.tilt_axis.k_hat.y(), 0.0);
  w.pose = geom::rotate_about_line(w.tilt_base, axis_pt, axis_dir, w.tilt_angle);
}

inline void inserted_step(WorldState &w, const Vec6 &wrench,
                          const PegHoleGeometry &g, const SimConfig &cfg) {
  Vec3 v = wrench.head<3>() / cfg.insert_damping;
  w.pose.position += v * cfg.dt;

  const double depth = -w.pose.position.z();
  if (depth <= 0.0) { // backed out of the bore
    w.pose.position.z() = std::max(w.pose.position.z(), 0.0);
    w.mode = w.pose.position.z() > 0.0 ? ContactMode::FreeSpace
                                       : ContactMode::Resting;
    w.support_cache_center.reset();
    return;
  }
  if (depth > g.hole_depth) // bottom of the bore
    w.pose.position.z() = -g.hole_depth;

  // clearance funnel: admissible offset shrinks linearly with depth
  const double depth_now = -w.pose.position.z();
  const double allowed =
      g.clearance * std::max(0.0, 1.0 - depth_now / g.hole_depth);
  Vec2 e = w.displacement();
  if (e.norm() > allowed) {
    const Vec2 clamped = e.norm() > 0.0 ? Vec2(allowed * e.normalized())
                                        : Vec2::Zero();
    w.pose.position.head<2>() = -clamped;
  }
}

//! Bottom-face rim points must not sink into solid plate. Points below the
//! surface are admissible only over the bore opening.
inline void audit_step(WorldState &w, const PegHoleGeometry &g) {
  constexpr int kSamples = 72;
  constexpr double z_tol = 1e-6;
  const double R = g.hole_radius();
  for (int i = 0; i < kSamples; ++i) {
    const double th = 2.0 * std::numbers::pi * double(i) / double(kSamples);
    const Vec3 body(g.peg_radius * std::cos(th), g.peg_radius * std::sin(th),
                    0.0);
    const Vec3 world = w.pose.position + w.pose.rotation * body;
    if (world.z() >= -z_tol)
      continue;
    // below the surface: only legal inside the bore
    const double radial = world.head<2>().norm();
    if (radial > R + 1e-5) {
      w.audit_ok = false;
      w.audit_max_penetration = std::max(w.audit_max_penetration, -world.z());
    }
  }
}

} // namespace detail

//! Advance one step under the given applied wrench (forces in N, torques in
//! N m about the body origin, world axes). The manipulator is assumed to
//! gravity-compensate the peg, so the wrench is the net commanded load.
inline void step(WorldState &w, const Vec6 &wrench, const PegHoleGeometry &g,
                 const SimConfig &cfg) {
  if (!wrench.allFinite())
    throw std::invalid_argument("step: non-finite wrench");
  const RigidPose before = w.pose;
  switch (w.mode) {
  case ContactMode::FreeSpace:
    detail::free_space_step(w, wrench, g, cfg);
    break;
  case ContactMode::Resting:
    detail::resting_step(w, wrench, g, cfg);
    break;
  case ContactMode::Tilting:
    detail::tilting_step(w, wrench, g, cfg);
    break;
  case ContactMode::Inserted:
    detail::inserted_step(w, wrench, g, cfg);
    break;
  }
  w.time += cfg.dt;

  // realized twist from the pose delta
  w.twist.head<3>() = (w.pose.position - before.position) / cfg.dt;
  const Mat3 dR = w.pose.rotation * before.rotation.transpose();
  const Eigen::AngleAxisd aa(dR);
  w.twist.tail<3>() = aa.angle() / cfg.dt * aa.axis();

  // reaction: whatever the constraints must supply against the command
  if (w.mode == ContactMode::FreeSpace)
    w.reaction.setZero();
  else
    w.reaction = -wrench;

  if (cfg.audit)
    detail::audit_step(w, g);
}

//! Sensed state: exact twist and reaction, position corrupted by bounded
//! uniform noise when configured.
template <class Rng>
inline Vec3 noisy_position(const WorldState &w, const SimConfig &cfg, Rng &rng) {
  if (cfg.position_noise <= 0.0)
    return w.pose.position;
  std::uniform_real_distribution<double> u(-cfg.position_noise,
                                           cfg.position_noise);
  return w.pose.position + Vec3(u(rng), u(rng), u(rng));
}

} // namespace pegsearch::sim
