#pragma once
//
// Quasi-static contact stability for a pressed peg: planar moment labeling,
// 3D support polygons, the tilt-or-static test used by the simulator, and a
// wrench-space feasibility oracle over linearized friction cones.

#include "pegsearch/geom.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace pegsearch::stability {

using geom::Chord;
using geom::Vec2;
using geom::Vec3;

//! Frictional point contact on the peg. The normal points into the peg
//! (the direction the environment can push).
struct Contact3 {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double mu = 0.6;
};

//! Planar (x, z) section of the same thing.
struct Contact2 {
  Vec2 position = Vec2::Zero();
  Vec2 normal = Vec2::UnitY();
  double mu = 0.6;
};

struct AppliedForce3 {
  Vec3 point = Vec3::Zero();
  Vec3 force = Vec3::Zero();
};

struct AppliedForce2 {
  Vec2 point = Vec2::Zero();
  Vec2 force = Vec2::Zero();
};

//! Full aperture of a planar friction cone with coefficient mu.
inline double cone_aperture(double mu) { return 2.0 * std::atan(mu); }

//==============================================================================
// Planar moment labeling
//==============================================================================

enum class MomentLabel { Plus, Minus, Mixed };

//! Label a query point by the moments the contact set can exert about it:
//! Plus if every achievable contact wrench gives a nonnegative moment (and
//! a positive one is achievable), Minus symmetrically, Mixed otherwise.
//! Region boundaries are closed, so a point where the extreme moment is
//! exactly zero keeps the one-sided label.
inline MomentLabel moment_label_classify(const std::vector<Contact2> &contacts,
                                         const Vec2 &query) {
  double m_min = 0.0;
  double m_max = 0.0;
  for (const auto &c : contacts) {
    const double half = std::atan(c.mu);
    const Vec2 arm = c.position - query;
    for (const double sgn : {-1.0, 1.0}) {
      const Vec2 edge = geom::rot2(sgn * half) * c.normal;
      const double m = geom::cross2(arm, edge);
      m_min = std::min(m_min, m);
      m_max = std::max(m_max, m);
    }
  }
  if (m_min >= 0.0 && m_max > 0.0)
    return MomentLabel::Plus;
  if (m_max <= 0.0 && m_min < 0.0)
    return MomentLabel::Minus;
  return MomentLabel::Mixed;
}

//==============================================================================
// Wrench-cone feasibility (Phase-I simplex over linearized cones)
//==============================================================================

namespace detail {

//! Minimize the sum of artificial variables for A x = b, x >= 0; returns the
//! attained objective. Bland's rule, so the pivot sequence is deterministic
//! and cycling-free.
inline double phase_one_residual(Eigen::MatrixXd A, Eigen::VectorXd b) {
  const int m = int(A.rows());
  const int n = int(A.cols());
  for (int i = 0; i < m; ++i) {
    if (b(i) < 0.0) {
      b(i) = -b(i);
      A.row(i) = -A.row(i);
    }
  }
  // tableau over [x, artificials], artificials start basic
  Eigen::MatrixXd T(m + 1, n + m + 1);
  T.setZero();
  T.block(0, 0, m, n) = A;
  T.block(0, n, m, m) = Eigen::MatrixXd::Identity(m, m);
  T.block(0, n + m, m, 1) = b;
  // objective row: minimize sum of artificials, expressed in nonbasic terms
  for (int j = 0; j < n; ++j)
    T(m, j) = -A.col(j).sum();
  T(m, n + m) = -b.sum();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i)
    basis[i] = n + i;

  const double eps = 1e-11;
  const int max_iters = 50 * (m + n);
  for (int iter = 0; iter < max_iters; ++iter) {
    int pivot_col = -1;
    for (int j = 0; j < n + m; ++j) {
      if (T(m, j) < -eps) {
        pivot_col = j;
        break;
      }
    }
    if (pivot_col < 0)
      break;
    int pivot_row = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (T(i, pivot_col) > eps) {
        const double ratio = T(i, n + m) / T(i, pivot_col);
        if (ratio < best_ratio - eps ||
            (ratio < best_ratio + eps &&
             (pivot_row < 0 || basis[i] < basis[pivot_row]))) {
          best_ratio = ratio;
          pivot_row = i;
        }
      }
    }
    if (pivot_row < 0)
      break; // unbounded column; cannot happen with artificials present
    T.row(pivot_row) /= T(pivot_row, pivot_col);
    for (int i = 0; i <= m; ++i) {
      if (i != pivot_row && std::abs(T(i, pivot_col)) > 0.0)
        T.row(i) -= T(i, pivot_col) * T.row(pivot_row);
    }
    basis[pivot_row] = pivot_col;
  }
  return -T(m, n + m);
}

//! Row-rescale [A | b] so each row has unit max magnitude; preserves the
//! solution set while making the feasibility tolerance meaningful across
//! force (N) and torque (N m) rows.
inline void balance_rows(Eigen::MatrixXd &A, Eigen::VectorXd &b) {
  for (int i = 0; i < A.rows(); ++i) {
    const double s = std::max(A.row(i).cwiseAbs().maxCoeff(), std::abs(b(i)));
    if (s > 1e-300) {
      A.row(i) /= s;
      b(i) /= s;
    }
  }
}

inline bool cone_combination_exists(Eigen::MatrixXd A, Eigen::VectorXd b) {
  balance_rows(A, b);
  return phase_one_residual(std::move(A), std::move(b)) < 1e-8;
}

//! Orthonormal tangent pair for a unit normal.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3 &n) {
  const Vec3 ref = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 t1 = ref.cross(n).normalized();
  return {t1, n.cross(t1)};
}

} // namespace detail

//! True when the applied forces can be balanced by contact forces inside the
//! (linearized, edges_per_cone-edge) friction cones: the negated applied
//! wrench must be a nonnegative combination of the contact edge wrenches.
inline bool wrench_feasible(const std::vector<AppliedForce3> &applied,
                            const std::vector<Contact3> &contacts,
                            int edges_per_cone = 8) {
  if (contacts.empty())
    return applied.empty();
  if (edges_per_cone < 3)
    throw std::invalid_argument("wrench_feasible: need >= 3 cone edges");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(6);
  for (const auto &a : applied) {
    w.head<3>() += a.force;
    w.tail<3>() += a.point.cross(a.force);
  }

  Eigen::MatrixXd A(6, contacts.size() * std::size_t(edges_per_cone));
  int col = 0;
  for (const auto &c : contacts) {
    const Vec3 n = c.normal.normalized();
    const auto [t1, t2] = detail::tangent_basis(n);
    for (int j = 0; j < edges_per_cone; ++j) {
      const double phi = 2.0 * std::numbers::pi * double(j) / double(edges_per_cone);
      const Vec3 f =
          (n + c.mu * (std::cos(phi) * t1 + std::sin(phi) * t2)).normalized();
      A.col(col).head<3>() = f;
      A.col(col).tail<3>() = c.position.cross(f);
      ++col;
    }
  }
  return detail::cone_combination_exists(std::move(A), Eigen::VectorXd(-w));
}

//! Planar variant: wrench rows are (fx, fy, moment about the origin).
inline bool wrench_feasible_planar(const std::vector<AppliedForce2> &applied,
                                   const std::vector<Contact2> &contacts) {
  if (contacts.empty())
    return applied.empty();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  for (const auto &a : applied) {
    w.head<2>() += a.force;
    w(2) += geom::cross2(a.point, a.force);
  }
  Eigen::MatrixXd A(3, contacts.size() * 2);
  int col = 0;
  for (const auto &c : contacts) {
    const double half = std::atan(c.mu);
    for (const double sgn : {-1.0, 1.0}) {
      const Vec2 f = geom::rot2(sgn * half) * c.normal.normalized();
      A(0, col) = f.x();
      A(1, col) = f.y();
      A(2, col) = geom::cross2(c.position, f);
      ++col;
    }
  }
  return detail::cone_combination_exists(std::move(A), Eigen::VectorXd(-w));
}

//==============================================================================
// Planar static check
//==============================================================================

enum class PlanarVerdict { Static, TiltLeft, TiltRight };

//! Planar peg section under an applied force: static when the contact cones
//! can balance it, otherwise the tilt side follows the sign of the
//! uncompensated moment about the nearest support.
inline PlanarVerdict planar_static_check(const AppliedForce2 &applied,
                                         const std::vector<Contact2> &contacts) {
  if (contacts.empty())
    return PlanarVerdict::Static;
  if (wrench_feasible_planar({applied}, contacts))
    return PlanarVerdict::Static;
  const auto hinge = std::min_element(
      contacts.begin(), contacts.end(), [&](const Contact2 &a, const Contact2 &b) {
        return std::abs(a.position.x() - applied.point.x()) <
               std::abs(b.position.x() - applied.point.x());
      });
  const double m =
      geom::cross2(applied.point - hinge->position, applied.force);
  if (m < 0.0)
    return PlanarVerdict::TiltRight;
  if (m > 0.0)
    return PlanarVerdict::TiltLeft;
  return PlanarVerdict::Static;
}

//==============================================================================
// Support polygon and the 3D stability check
//==============================================================================

//! Convex hull (counterclockwise, collinear points dropped) of the contact
//! positions projected on the surface plane. Degenerate when the projected
//! set spans less than a triangle; the hull then holds the point or segment.
struct SupportPolygon {
  std::vector<Vec2> hull;
  bool degenerate = false;
};

inline SupportPolygon support_polygon(const std::vector<Contact3> &contacts) {
  std::vector<Vec2> pts;
  pts.reserve(contacts.size());
  for (const auto &c : contacts)
    pts.emplace_back(c.position.head<2>());
  std::sort(pts.begin(), pts.end(), [](const Vec2 &a, const Vec2 &b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Vec2 &a, const Vec2 &b) {
                          return (a - b).norm() < 1e-12;
                        }),
            pts.end());

  SupportPolygon out;
  if (pts.size() < 3) {
    out.hull = pts;
    out.degenerate = true;
    return out;
  }
  const double collinear_eps = 1e-15;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto &p : pts) { // lower chain
    while (k >= 2 &&
           geom::cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= collinear_eps)
      --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) { // upper chain
    while (k >= lower &&
           geom::cross2(hull[k - 1] - hull[k - 2], *it - hull[k - 2]) <= collinear_eps)
      --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  out.hull = std::move(hull);
  out.degenerate = out.hull.size() < 3;
  return out;
}

//! Distance from a point to the polygon boundary, negative inside. For
//! degenerate hulls every exterior point is "outside" at its distance to
//! the point/segment.
inline double signed_hull_distance(const SupportPolygon &poly, const Vec2 &x) {
  const auto &h = poly.hull;
  if (h.empty())
    return std::numeric_limits<double>::infinity();
  auto seg_dist = [](const Vec2 &a, const Vec2 &b, const Vec2 &q) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp(ab.dot(q - a) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - q).norm();
  };
  if (h.size() == 1)
    return (x - h[0]).norm();
  if (h.size() == 2)
    return seg_dist(h[0], h[1], x);
  bool inside = true;
  double min_edge = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec2 &a = h[i];
    const Vec2 &b = h[(i + 1) % h.size()];
    if (geom::cross2(b - a, x - a) < 0.0)
      inside = false;
    min_edge = std::min(min_edge, seg_dist(a, b, x));
  }
  return inside ? -min_edge : min_edge;
}

//! Outcome of the pressed-peg test: either the contact set holds the peg, or
//! it rotates about a support edge (for partial peg/hole overlap this is the
//! rim intersection chord).
struct StabilityVerdict {
  bool tilts = false;
  Chord axis; // valid when tilts
};

//! Verdict for a pressure point already reduced to the surface plane: static
//! iff it lies within the support polygon (boundaries closed, and points
//! within marginal_band outside still count as static); otherwise tilt about
//! the hull edge nearest the point, with k_hat oriented so the tip-over
//! rotation is positive.
inline StabilityVerdict verdict_from_zmp(const SupportPolygon &poly,
                                         const Vec2 &proj,
                                         double marginal_band = 5e-4) {
  StabilityVerdict verdict;
  if (poly.degenerate) {
    if (poly.hull.empty())
      throw std::invalid_argument("verdict_from_zmp: no contacts");
    if (poly.hull.size() == 1) {
      verdict.tilts = (proj - poly.hull[0]).norm() > marginal_band;
      if (verdict.tilts) {
        const Vec2 out_dir = (proj - poly.hull[0]).normalized();
        verdict.axis.k_hat = geom::perp_ccw(out_dir);
        verdict.axis.p = poly.hull[0];
        verdict.axis.length = 0.0;
      }
      return verdict;
    }
    // segment: tip across the line when the projection clears it
    const Vec2 a = poly.hull[0];
    const Vec2 b = poly.hull[1];
    const Vec2 t = (b - a).normalized();
    const double off = geom::cross2(t, proj - a);
    if (std::abs(off) <= marginal_band)
      return verdict;
    verdict.tilts = true;
    // orient so rot2(-pi/2) k_hat points toward the projection side
    verdict.axis.k_hat = off > 0.0 ? Vec2(-t) : t;
    verdict.axis.p = a;
    verdict.axis.length = (b - a).norm();
    return verdict;
  }

  if (signed_hull_distance(poly, proj) <= marginal_band)
    return verdict;

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  const auto &h = poly.hull;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec2 &a = h[i];
    const Vec2 &b = h[(i + 1) % h.size()];
    const Vec2 ab = b - a;
    const double t = std::clamp(ab.dot(proj - a) / ab.squaredNorm(), 0.0, 1.0);
    const double dist = (a + t * ab - proj).norm();
    if (dist < best) {
      best = dist;
      best_i = i;
    }
  }
  const Vec2 &a = h[best_i];
  const Vec2 &b = h[(best_i + 1) % h.size()];
  verdict.tilts = true;
  // hull is counterclockwise, so the directed edge already satisfies the
  // sign convention: rot2(-pi/2) * edge_dir is the outward normal
  verdict.axis.k_hat = (b - a).normalized();
  verdict.axis.p = a;
  verdict.axis.length = (b - a).norm();
  return verdict;
}

//! Stability of a peg pressed onto the contact set by a single force. The
//! force line is intersected with the surface plane (for a force applied on
//! the plane this is just its application point) and tested against the
//! support polygon.
inline StabilityVerdict stability_check_3d(const AppliedForce3 &applied,
                                           const std::vector<Contact3> &contacts,
                                           double marginal_band = 5e-4) {
  if (!(applied.force.z() < 0.0))
    throw std::invalid_argument("stability_check_3d: force must press down");
  const Vec2 proj = applied.point.head<2>() -
                    applied.point.z() / applied.force.z() *
                        Vec2(applied.force.head<2>());
  return verdict_from_zmp(support_polygon(contacts), proj, marginal_band);
}

} // namespace pegsearch::stability
