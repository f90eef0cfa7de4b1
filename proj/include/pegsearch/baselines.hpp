#pragma once
//
// Blind lateral search patterns used as baselines: an Archimedean spiral
// traversed at constant tangential speed, and a Lissajous figure. Both are
// offsets from the search entry point as a function of time in the search
// state.

#include "pegsearch/control.hpp"
#include "pegsearch/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace pegsearch::baselines {

using geom::Vec2;

//==============================================================================
// Archimedean spiral, r = (pitch / 2 pi) * phi
//==============================================================================

struct SpiralParams {
  double pitch = 1e-3;      // radial gap between turns
  double speed = 5e-3;      // tangential speed along the curve
  double max_radius = 0.017;
};

namespace detail {

//! Arc length of r = a*phi from 0 to phi.
inline double spiral_arc_length(double a, double phi) {
  const double rt = std::sqrt(1.0 + phi * phi);
  return 0.5 * a * (phi * rt + std::asinh(phi));
}

//! Invert s = arc_length(a, phi) by Newton iteration; ds/dphi = a*sqrt(1+phi^2)
//! is positive and increasing, so convergence is immediate from the large-phi
//! estimate phi ~ sqrt(2 s / a).
inline double spiral_phi_at_length(double a, double s) {
  if (s <= 0.0)
    return 0.0;
  double phi = std::sqrt(2.0 * s / a);
  for (int i = 0; i < 8; ++i)
    phi -= (spiral_arc_length(a, phi) - s) / (a * std::sqrt(1.0 + phi * phi));
  return std::max(0.0, phi);
}

} // namespace detail

inline double spiral_turn_spacing(const SpiralParams &p) {
  return p.pitch / (2.0 * std::numbers::pi);
}

//! Time to sweep the whole pattern out to max_radius.
inline double spiral_duration(const SpiralParams &p) {
  const double a = spiral_turn_spacing(p);
  return detail::spiral_arc_length(a, p.max_radius / a) / p.speed;
}

//! Position on the spiral after t seconds of constant-speed traversal,
//! clamped to the end of the pattern.
inline Vec2 spiral_point(double t, const SpiralParams &p) {
  const double a = spiral_turn_spacing(p);
  const double s_total = detail::spiral_arc_length(a, p.max_radius / a);
  const double s = std::clamp(p.speed * t, 0.0, s_total);
  const double phi = detail::spiral_phi_at_length(a, s);
  return a * phi * Vec2(std::cos(phi), std::sin(phi));
}

inline control::SearchPath spiral_path(const SpiralParams &p) {
  return {[p](double t) { return spiral_point(t, p); }, spiral_duration(p)};
}

//==============================================================================
// Lissajous figure
//==============================================================================

inline constexpr double kGoldenRatio = 1.6180339887498949;

//! Near-irrational frequency ratio so the figure keeps precessing instead of
//! retracing a closed loop; small integer ratios leave millimeter-scale gaps
//! that never close.
struct LissajousParams {
  double amp_x = 0.017;
  double amp_y = 0.017;
  double rate_x = 0.18;                    // rad/s
  double rate_y = 0.18 * kGoldenRatio;
  double phase = 0.0;                      // added to the x argument
  double duration = 300.0;
};

inline Vec2 lissajous_point(double t, const LissajousParams &p) {
  return Vec2(p.amp_x * std::sin(p.rate_x * t + p.phase),
              p.amp_y * std::sin(p.rate_y * t));
}

inline control::SearchPath lissajous_path(const LissajousParams &p) {
  return {[p](double t) { return lissajous_point(t, p); }, p.duration};
}

//==============================================================================
// Coverage audit
//==============================================================================

//! Largest distance from any target to the sampled path: how far the worst
//! target sits from the pattern. Sampled densely enough that the polyline
//! error is negligible next to the clearance scale.
template <class PathFn>
inline double coverage_gap(PathFn &&path, double duration,
                           const std::vector<Vec2> &targets,
                           double sample_dt = 0.02) {
  double worst = 0.0;
  for (const Vec2 &target : targets) {
    double best = std::numeric_limits<double>::infinity();
    for (double t = 0.0; t <= duration; t += sample_dt)
      best = std::min(best, (Vec2(path(t)) - target).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

} // namespace pegsearch::baselines
