#pragma once
//
// Planar geometry of a round peg over a round hole: circle intersections,
// the contact chord and its relation to the peg-hole displacement, and
// recovery of a tilt axis from sampled rigid-body motion.
//
// Conventions used throughout the library:
//  * world z is up; the hole is a vertical bore through the plane z = 0,
//    centered on the world origin;
//  * the displacement error e is the 2D vector from the peg axis to the
//    hole axis (where the hole is, as seen from the peg);
//  * a chord direction k_hat is oriented so that a positive (right-hand)
//    rotation about it tips the peg top toward the hole side, which makes
//    rot2(-pi/2) * k_hat point from the peg toward the hole.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pegsearch::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

//! Planar rotation by theta (counterclockwise for theta > 0).
inline Mat2 rot2(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 m;
  m << c, -s, s, c;
  return m;
}

//! Shorthand for the quarter-turn maps used by the chord convention.
inline Vec2 perp_ccw(const Vec2 &v) { return Vec2(-v.y(), v.x()); }   // rot2(+pi/2)
inline Vec2 perp_cw(const Vec2 &v) { return Vec2(v.y(), -v.x()); }    // rot2(-pi/2)

inline double cross2(const Vec2 &a, const Vec2 &b) {
  return a.x() * b.y() - a.y() * b.x();
}

//! Pose of the peg body frame: origin at the center of the lower end face,
//! axes aligned with the cylinder (z along the peg axis).
struct RigidPose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

//! Peg and hole dimensions. The bore radius is peg_radius + clearance and
//! the bore is chamferless.
struct PegHoleGeometry {
  double peg_radius = 0.010;
  double clearance = 0.001;
  double peg_length = 0.040;
  double hole_depth = 0.020;

  double hole_radius() const { return peg_radius + clearance; }
};

//! Line segment in the surface plane where the peg end circle crosses the
//! hole rim: unit direction k_hat through point p, with in-circle length.
//! Coordinates are in whatever horizontal frame the producer used (the
//! belief-side helpers work relative to the peg end center; fitted axes
//! are in world coordinates). Only k_hat and length enter the displacement
//! reconstruction.
struct Chord {
  Vec2 k_hat = Vec2::UnitY();
  Vec2 p = Vec2::Zero();
  double length = 0.0;
};

//==============================================================================
// Circle intersection and the chord <-> displacement maps
//==============================================================================

//! Both intersection points of two circles, or nullopt when disjoint,
//! nested, or concentric. The points are midpoint +/- half_chord * u where
//! u = rot2(+pi/2) * (c1 - c0) / |c1 - c0|, in that order.
inline std::optional<std::pair<Vec2, Vec2>>
circle_intersection(const Vec2 &c0, double r0, const Vec2 &c1, double r1) {
  const Vec2 delta = c1 - c0;
  const double d = delta.norm();
  if (d < 1e-15)
    return std::nullopt;
  if (d > r0 + r1 || d < std::abs(r0 - r1))
    return std::nullopt;
  // distance from c0 to the radical line, then half chord on circle 0
  const double a = (d * d + r0 * r0 - r1 * r1) / (2.0 * d);
  const double h2 = r0 * r0 - a * a;
  const double h = h2 > 0.0 ? std::sqrt(h2) : 0.0;
  const Vec2 axis = delta / d;
  const Vec2 mid = c0 + a * axis;
  const Vec2 u = perp_ccw(axis);
  return std::make_pair(mid + h * u, mid - h * u);
}

//! Chord produced by a displacement e between two equal circles of radius r
//! (the clearance is below the radius scale, so the hole rim is modeled at
//! the peg radius). Expressed relative to the peg end center. Requires
//! 0 < |e| < 2r (partial overlap).
inline Chord chord_from_displacement(const Vec2 &e, double r) {
  const double d = e.norm();
  if (!(d > 0.0) || !(d < 2.0 * r))
    throw std::invalid_argument("chord_from_displacement: |e| outside (0, 2r)");
  const Vec2 e_hat = e / d;
  Chord c;
  c.k_hat = perp_ccw(e_hat); // rot2(-pi/2) * k_hat == e_hat
  c.p = 0.5 * e;
  c.length = 2.0 * std::sqrt(r * r - 0.25 * d * d);
  return c;
}

//! Inverse of chord_from_displacement: e = 2 sqrt(r^2 - l^2/4) rot2(-pi/2) k_hat.
//! Requires 0 <= l <= 2r; l = 0 is the tangency limit with |e| = 2r.
inline Vec2 displacement_from_chord(const Chord &c, double r) {
  if (c.length < 0.0 || c.length > 2.0 * r * (1.0 + 1e-12))
    throw std::invalid_argument("displacement_from_chord: length outside [0, 2r]");
  const double l2 = std::min(c.length, 2.0 * r);
  const double mag = 2.0 * std::sqrt(std::max(0.0, r * r - 0.25 * l2 * l2));
  return mag * perp_cw(c.k_hat);
}

//==============================================================================
// Tilt-axis recovery from motion samples
//==============================================================================

//! Horizontal rotation axis fitted to samples of a point on a tilting body:
//! unit direction k_hat through the 2D point p (axis lies in the z = 0
//! plane of the data's own circle; only the horizontal line is reported),
//! oriented so the sampled motion is a positive rotation about k_hat.
//! rms is the root-mean-square deviation of the samples from the fitted
//! circular arc (radial in the rotation plane plus drift along the axis).
struct AxisFit {
  Vec2 k_hat = Vec2::UnitY();
  Vec2 p = Vec2::Zero();
  double rms = 0.0;
};

//! Fit a horizontal rotation axis lying in the z = 0 plane to >= 3 position
//! samples of one material point. The horizontal trace of such a motion is
//! a straight segment perpendicular to the axis; its direction comes from an
//! orthogonal regression, the in-plane circle from an algebraic least
//! squares fit with its center pinned to z = 0 (shallow arcs leave a free
//! vertical center hopelessly ill-conditioned), and the axis sign from the
//! rotation sense of the samples.
inline AxisFit fit_tilt_axis(const std::vector<Vec3> &samples) {
  const std::size_t n = samples.size();
  if (n < 3)
    throw std::invalid_argument("fit_tilt_axis: need at least 3 samples");

  Vec2 mean = Vec2::Zero();
  for (const auto &s : samples)
    mean += s.head<2>();
  mean /= double(n);

  Mat2 cov = Mat2::Zero();
  for (const auto &s : samples) {
    const Vec2 q = s.head<2>() - mean;
    cov += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  if (!(eig.eigenvalues()(1) > 0.0))
    throw std::invalid_argument("fit_tilt_axis: samples show no motion");
  // largest-variance direction: perpendicular to the axis
  Vec2 d_hat = eig.eigenvectors().col(1);
  Vec2 k_hat = perp_ccw(d_hat);

  // coordinates across (h) and along (s) the candidate axis
  Eigen::VectorXd h(n), z(n), s_along(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 xy = samples[i].head<2>();
    h(i) = d_hat.dot(xy);
    s_along(i) = k_hat.dot(xy);
    z(i) = samples[i].z();
  }

  // algebraic circle fit in the (h, z) rotation plane with the center on
  // the surface: h^2 + z^2 + D h + F = 0
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = h(i);
    A(i, 1) = 1.0;
    b(i) = -(h(i) * h(i) + z(i) * z(i));
  }
  const Eigen::Vector2d sol = A.colPivHouseholderQr().solve(b);
  double hc = -0.5 * sol(0);
  const double zc = 0.0;
  const double rho2 = hc * hc - sol(1);
  const double rho = rho2 > 0.0 ? std::sqrt(rho2) : 0.0;

  // rotation sense about k_hat: positive rotation is clockwise in (h, z)
  double sweep = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 a0(h(i) - hc, z(i) - zc);
    const Vec2 a1(h(i + 1) - hc, z(i + 1) - zc);
    sweep += cross2(a0, a1);
  }
  if (sweep > 0.0) { // counterclockwise in (h, z): flip the axis
    k_hat = -k_hat;
    d_hat = -d_hat;
    for (std::size_t i = 0; i < n; ++i) {
      h(i) = -h(i);
      s_along(i) = -s_along(i);
    }
    hc = -hc;
  }

  double sq = 0.0;
  const double s_mean = s_along.mean();
  for (std::size_t i = 0; i < n; ++i) {
    const double radial =
        std::hypot(h(i) - hc, z(i) - zc) - rho;
    const double axial = s_along(i) - s_mean;
    sq += radial * radial + axial * axial;
  }

  AxisFit fit;
  fit.k_hat = k_hat;
  fit.p = hc * d_hat + s_mean * k_hat;
  fit.rms = std::sqrt(sq / double(n));
  return fit;
}

//! Signed distance of point x from the line through p along k_hat, positive
//! on the rot2(-pi/2) k_hat side (the side the peg tips toward).
inline double signed_line_distance(const Vec2 &x, const Vec2 &p, const Vec2 &k_hat) {
  return perp_cw(k_hat).dot(x - p);
}

//! Rotate pose about the 3D line through axis_point along axis_dir by angle.
inline RigidPose rotate_about_line(const RigidPose &pose, const Vec3 &axis_point,
                                   const Vec3 &axis_dir, double angle) {
  const Eigen::AngleAxisd rot(angle, axis_dir.normalized());
  RigidPose out;
  out.rotation = rot.toRotationMatrix() * pose.rotation;
  out.position = axis_point + rot * (pose.position - axis_point);
  return out;
}

} // namespace pegsearch::geom
