#include "pegsearch/stability.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace pg = pegsearch::geom;
namespace ps = pegsearch::stability;
using pg::Vec2;
using pg::Vec3;

constexpr double kPi = std::numbers::pi;

TEST(ConeAperture, KnownValues) {
  EXPECT_EQ(ps::cone_aperture(0.0), 0.0);
  EXPECT_NEAR(ps::cone_aperture(1.0), kPi / 2, 1e-15);
  EXPECT_NEAR(ps::cone_aperture(0.5), 0.9272952180016122, 1e-15);
}

//==============================================================================
// Moment labels
//==============================================================================

namespace {

// brute-force oracle: sweep rays through each cone and track the extreme
// moments a contact set can exert about the query point
ps::MomentLabel sampled_label(const std::vector<ps::Contact2> &contacts,
                              const Vec2 &query, int rays) {
  double m_min = 0.0;
  double m_max = 0.0;
  for (const auto &c : contacts) {
    const double half = std::atan(c.mu);
    for (int k = 0; k < rays; ++k) {
      const double a = rays > 1 ? -half + 2.0 * half * k / (rays - 1) : 0.0;
      const double m =
          pg::cross2(c.position - query, pg::rot2(a) * c.normal);
      m_min = std::min(m_min, m);
      m_max = std::max(m_max, m);
    }
  }
  if (m_min >= 0.0 && m_max > 0.0)
    return ps::MomentLabel::Plus;
  if (m_max <= 0.0 && m_min < 0.0)
    return ps::MomentLabel::Minus;
  return ps::MomentLabel::Mixed;
}

} // namespace

TEST(MomentLabel, SingleFrictionlessContact) {
  const std::vector<ps::Contact2> c = {{Vec2(0, 0), Vec2(0, 1), 0.0}};
  // force line is the y axis: right of it all moments negative, left positive
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(1, 0)), ps::MomentLabel::Minus);
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(-1, 0)), ps::MomentLabel::Plus);
  // on the line the only achievable moment is zero
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(0, 2)), ps::MomentLabel::Mixed);
}

TEST(MomentLabel, TwoContactLobes) {
  // two flat supports, hole edge on the left
  const std::vector<ps::Contact2> c = {{Vec2(-0.015, 0), Vec2(0, 1), 0.3},
                                       {Vec2(0, 0), Vec2(0, 1), 0.3}};
  // far right of both cones: every wrench pushes it clockwise
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(0.05, 0.0)),
            ps::MomentLabel::Minus);
  // far left: counterclockwise
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(-0.06, 0.0)),
            ps::MomentLabel::Plus);
  // between the supports both signs are achievable
  EXPECT_EQ(ps::moment_label_classify(c, Vec2(-0.0075, 0.0)),
            ps::MomentLabel::Mixed);
}

TEST(MomentLabel, MatchesRaySamplingOracle) {
  const std::vector<ps::Contact2> c = {{Vec2(-0.015, 0), Vec2(0, 1), 0.4},
                                       {Vec2(0, 0), Vec2(0, 1), 0.4}};
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 21; ++j) {
      const Vec2 q(-0.03 + 0.06 * i / 20.0, -0.03 + 0.06 * j / 20.0);
      EXPECT_EQ(ps::moment_label_classify(c, q), sampled_label(c, q, 401))
          << "at (" << q.x() << ", " << q.y() << ")";
    }
  }
}

TEST(MomentLabel, PlusNeverSamplesNegative) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> up(-0.03, 0.03);
  const std::vector<ps::Contact2> c = {{Vec2(-0.015, 0), Vec2(0, 1), 0.5},
                                       {Vec2(0, 0), Vec2(0, 1), 0.5}};
  int plus_seen = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec2 q(up(rng), up(rng));
    if (ps::moment_label_classify(c, q) != ps::MomentLabel::Plus)
      continue;
    ++plus_seen;
    for (const auto &contact : c) {
      const double half = std::atan(contact.mu);
      for (int k = 0; k < 100; ++k) {
        const double a = -half + 2.0 * half * k / 99.0;
        EXPECT_GE(pg::cross2(contact.position - q, pg::rot2(a) * contact.normal),
                  -1e-12);
      }
    }
  }
  EXPECT_GT(plus_seen, 100);
}

//==============================================================================
// Planar static check
//==============================================================================

TEST(PlanarStaticCheck, PressOverASupportHolds) {
  // hole edge at -15 mm, surface contact at 0; push straight down over the
  // left support
  const std::vector<ps::Contact2> c = {{Vec2(-0.015, 0), Vec2(0, 1), 0.6},
                                       {Vec2(0, 0), Vec2(0, 1), 0.6}};
  const ps::AppliedForce2 f{Vec2(-0.015, 0.02), Vec2(0, -5)};
  EXPECT_EQ(ps::planar_static_check(f, c), ps::PlanarVerdict::Static);
}

TEST(PlanarStaticCheck, PressPastTheRightSupportTips) {
  const std::vector<ps::Contact2> c = {{Vec2(-0.015, 0), Vec2(0, 1), 0.6},
                                       {Vec2(0, 0), Vec2(0, 1), 0.6}};
  const ps::AppliedForce2 f{Vec2(0.005, 0.02), Vec2(0, -5)};
  EXPECT_EQ(ps::planar_static_check(f, c), ps::PlanarVerdict::TiltRight);
}

TEST(PlanarStaticCheck, ForceThroughSingleContactHolds) {
  const std::vector<ps::Contact2> c = {{Vec2(0, 0), Vec2(0, 1), 0.0}};
  const ps::AppliedForce2 f{Vec2(0, 0.05), Vec2(0, -5)};
  EXPECT_EQ(ps::planar_static_check(f, c), ps::PlanarVerdict::Static);
}

TEST(PlanarStaticCheck, MirrorSymmetry) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ux(-0.02, 0.02);
  auto mirror_verdict = [](ps::PlanarVerdict v) {
    if (v == ps::PlanarVerdict::TiltLeft)
      return ps::PlanarVerdict::TiltRight;
    if (v == ps::PlanarVerdict::TiltRight)
      return ps::PlanarVerdict::TiltLeft;
    return v;
  };
  for (int i = 0; i < 200; ++i) {
    const std::vector<ps::Contact2> c = {{Vec2(ux(rng), 0), Vec2(0, 1), 0.4},
                                         {Vec2(ux(rng), 0), Vec2(0, 1), 0.4}};
    const ps::AppliedForce2 f{Vec2(ux(rng), 0.02), Vec2(0, -5)};
    std::vector<ps::Contact2> cm = c;
    for (auto &cc : cm)
      cc.position.x() = -cc.position.x();
    const ps::AppliedForce2 fm{Vec2(-f.point.x(), f.point.y()), f.force};
    EXPECT_EQ(ps::planar_static_check(fm, cm),
              mirror_verdict(ps::planar_static_check(f, c)));
  }
}

//==============================================================================
// Support polygon
//==============================================================================

namespace {

std::vector<ps::Contact3> flat_contacts(const std::vector<Vec2> &pts) {
  std::vector<ps::Contact3> out;
  for (const auto &p : pts)
    out.push_back({Vec3(p.x(), p.y(), 0.0), Vec3::UnitZ(), 0.6});
  return out;
}

bool hull_is_ccw_convex(const std::vector<Vec2> &h) {
  if (h.size() < 3)
    return false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec2 &a = h[i];
    const Vec2 &b = h[(i + 1) % h.size()];
    const Vec2 &c = h[(i + 2) % h.size()];
    if (pg::cross2(b - a, c - b) <= 0.0)
      return false;
  }
  return true;
}

} // namespace

TEST(SupportPolygon, UnitSquare) {
  const auto poly = ps::support_polygon(
      flat_contacts({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
  EXPECT_FALSE(poly.degenerate);
  ASSERT_EQ(poly.hull.size(), 4u);
  EXPECT_TRUE(hull_is_ccw_convex(poly.hull));
}

TEST(SupportPolygon, InteriorAndEdgePointsDropped) {
  const auto poly = ps::support_polygon(flat_contacts(
      {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.5, 0.0}}));
  ASSERT_EQ(poly.hull.size(), 4u);
  EXPECT_TRUE(hull_is_ccw_convex(poly.hull));
}

TEST(SupportPolygon, DegenerateShapes) {
  const auto pt = ps::support_polygon(flat_contacts({{0.1, 0.2}}));
  EXPECT_TRUE(pt.degenerate);
  EXPECT_EQ(pt.hull.size(), 1u);
  const auto seg = ps::support_polygon(flat_contacts({{0, 0}, {1, 0}}));
  EXPECT_TRUE(seg.degenerate);
  EXPECT_EQ(seg.hull.size(), 2u);
  const auto line =
      ps::support_polygon(flat_contacts({{0, 0}, {1, 0}, {2, 0}}));
  EXPECT_TRUE(line.degenerate);
  EXPECT_EQ(line.hull.size(), 2u);
}

TEST(SupportPolygon, ContainsAllInputsAndUsesOnlyInputs) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 30; ++i)
      pts.emplace_back(u(rng), u(rng));
    const auto poly = ps::support_polygon(flat_contacts(pts));
    ASSERT_FALSE(poly.degenerate);
    EXPECT_TRUE(hull_is_ccw_convex(poly.hull));
    for (const auto &p : pts)
      EXPECT_LE(ps::signed_hull_distance(poly, p), 1e-12);
    for (const auto &v : poly.hull) {
      bool from_input = false;
      for (const auto &p : pts)
        from_input = from_input || (v - p).norm() < 1e-12;
      EXPECT_TRUE(from_input);
    }
  }
}

//==============================================================================
// 3D verdicts
//==============================================================================

namespace {

// resting support set for a peg of radius r over a bore of radius hr at
// center-to-center distance d along +x: rim points outside the bore plus
// the exact crossing points
std::vector<ps::Contact3> overlap_contacts(const Vec2 &peg_center, double r,
                                           double hr) {
  std::vector<ps::Contact3> out;
  for (int i = 0; i < 72; ++i) {
    const double th = 2.0 * kPi * i / 72.0;
    const Vec2 p = peg_center + r * Vec2(std::cos(th), std::sin(th));
    if (p.norm() >= hr)
      out.push_back({Vec3(p.x(), p.y(), 0.0), Vec3::UnitZ(), 0.6});
  }
  if (const auto pts =
          pg::circle_intersection(peg_center, r, Vec2::Zero(), hr)) {
    out.push_back({Vec3(pts->first.x(), pts->first.y(), 0), Vec3::UnitZ(), 0.6});
    out.push_back(
        {Vec3(pts->second.x(), pts->second.y(), 0), Vec3::UnitZ(), 0.6});
  }
  return out;
}

} // namespace

TEST(Verdict3d, CentroidIsStatic) {
  const auto poly = ps::support_polygon(
      flat_contacts({{-0.01, -0.01}, {0.01, -0.01}, {0.01, 0.01}, {-0.01, 0.01}}));
  const auto v = ps::verdict_from_zmp(poly, Vec2(0, 0));
  EXPECT_FALSE(v.tilts);
}

TEST(Verdict3d, MarginalBandIsClosed) {
  const auto poly = ps::support_polygon(
      flat_contacts({{-0.01, -0.01}, {0.01, -0.01}, {0.01, 0.01}, {-0.01, 0.01}}));
  EXPECT_FALSE(ps::verdict_from_zmp(poly, Vec2(0.0104, 0)).tilts);
  EXPECT_TRUE(ps::verdict_from_zmp(poly, Vec2(0.0106, 0)).tilts);
}

TEST(Verdict3d, TiltAxisIsNearestEdgeWithOutwardConvention) {
  const auto poly = ps::support_polygon(
      flat_contacts({{-0.01, -0.01}, {0.01, -0.01}, {0.01, 0.01}, {-0.01, 0.01}}));
  const auto v = ps::verdict_from_zmp(poly, Vec2(0.02, 0));
  ASSERT_TRUE(v.tilts);
  // ccw square: the +x edge runs upward, so k = +y and the peg tips toward
  // rot2(-pi/2) k = +x
  EXPECT_LT((v.axis.k_hat - Vec2(0, 1)).norm(), 1e-12);
  EXPECT_NEAR(v.axis.p.x(), 0.01, 1e-12);
  EXPECT_LT((pg::perp_cw(v.axis.k_hat) - Vec2(1, 0)).norm(), 1e-12);
}

TEST(Verdict3d, DegenerateHulls) {
  ps::SupportPolygon empty;
  empty.degenerate = true;
  EXPECT_THROW(ps::verdict_from_zmp(empty, Vec2(0, 0)), std::invalid_argument);

  const auto pt = ps::support_polygon(flat_contacts({{0, 0}}));
  EXPECT_FALSE(ps::verdict_from_zmp(pt, Vec2(2e-4, 0)).tilts);
  EXPECT_TRUE(ps::verdict_from_zmp(pt, Vec2(2e-3, 0)).tilts);

  const auto seg = ps::support_polygon(flat_contacts({{0, -0.01}, {0, 0.01}}));
  const auto v = ps::verdict_from_zmp(seg, Vec2(0.002, 0));
  ASSERT_TRUE(v.tilts);
  EXPECT_LT((pg::perp_cw(v.axis.k_hat) - Vec2(1, 0)).norm(), 1e-12);
}

TEST(StabilityCheck3d, SlantedForceLineIntercept) {
  // force (1, 0, -5) from 10 mm up crosses the surface 2 mm ahead
  const auto contacts = flat_contacts(
      {{-0.01, -0.01}, {0.01, -0.01}, {0.01, 0.01}, {-0.01, 0.01}});
  const ps::AppliedForce3 tilted{Vec3(0, 0, 0.01), Vec3(1, 0, -5)};
  EXPECT_FALSE(ps::stability_check_3d(tilted, contacts).tilts);
  const ps::AppliedForce3 harder{Vec3(0, 0, 0.01), Vec3(6, 0, -5)};
  const auto v = ps::stability_check_3d(harder, contacts);
  ASSERT_TRUE(v.tilts); // intercept at 12 mm, past the edge
  EXPECT_LT((v.axis.k_hat - Vec2(0, 1)).norm(), 1e-12);
}

TEST(StabilityCheck3d, RequiresDownwardForce) {
  const auto contacts = flat_contacts({{0, 0}, {1, 0}, {0, 1}});
  EXPECT_THROW(
      ps::stability_check_3d({Vec3::Zero(), Vec3(0, 0, 1)}, contacts),
      std::invalid_argument);
}

TEST(StabilityCheck3d, ChordAxisForPartialOverlap) {
  // peg at (-8, 0) mm over an 11 mm bore at the origin; press on the
  // overhanging rim: the hinge is the rim crossing chord
  const Vec2 c(-0.008, 0.0);
  const auto contacts = overlap_contacts(c, 0.010, 0.011);
  const ps::AppliedForce3 press{Vec3(0.002, 0, 0), Vec3(0, 0, -10)};
  const auto v = ps::stability_check_3d(press, contacts);
  ASSERT_TRUE(v.tilts);
  // half-gap toward the hole: a = (d^2 + r^2 - hr^2) / 2d from the peg
  // center, chord plane at x = c.x + a = -5.3125 mm
  EXPECT_LT((v.axis.k_hat - Vec2(0, 1)).norm(), 1e-9);
  EXPECT_NEAR(v.axis.p.x(), -0.0053125, 1e-9);
  // tip-over direction points from the peg toward the hole
  EXPECT_LT((pg::perp_cw(v.axis.k_hat) - Vec2(1, 0)).norm(), 1e-9);
}

//==============================================================================
// Wrench feasibility oracle
//==============================================================================

TEST(WrenchFeasible, FullRimSupportHoldsCenteredPress) {
  std::vector<ps::Contact3> ring;
  for (int i = 0; i < 12; ++i) {
    const double th = 2.0 * kPi * i / 12.0;
    ring.push_back(
        {Vec3(0.01 * std::cos(th), 0.01 * std::sin(th), 0), Vec3::UnitZ(), 0.6});
  }
  EXPECT_TRUE(
      ps::wrench_feasible({{Vec3(0, 0, 0), Vec3(0, 0, -10)}}, ring));
}

TEST(WrenchFeasible, OffsetPressOnPointContactFails) {
  const std::vector<ps::Contact3> single = {
      {Vec3::Zero(), Vec3::UnitZ(), 0.0}};
  EXPECT_FALSE(ps::wrench_feasible(
      {{Vec3(0.005, 0, 0), Vec3(0, 0, -10)}}, single));
  EXPECT_TRUE(
      ps::wrench_feasible({{Vec3(0, 0, 0), Vec3(0, 0, -10)}}, single));
}

TEST(WrenchFeasible, AgreesWithSupportPolygonOffTheBand) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ud(0.003, 0.015);
  std::uniform_real_distribution<double> ua(-kPi, kPi);
  std::uniform_real_distribution<double> up(-0.012, 0.012);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const double th = ua(rng);
    const Vec2 c = ud(rng) * Vec2(std::cos(th), std::sin(th));
    const auto contacts = overlap_contacts(c, 0.010, 0.011);
    if (contacts.size() < 3)
      continue;
    const auto poly = ps::support_polygon(contacts);
    const Vec2 probe = c + Vec2(up(rng), up(rng));
    if (std::abs(ps::signed_hull_distance(poly, probe)) < 5e-4)
      continue; // marginal band: conventions may differ
    ++checked;
    const ps::AppliedForce3 press{Vec3(probe.x(), probe.y(), 0),
                                  Vec3(0, 0, -10)};
    const bool static_by_hull = !ps::stability_check_3d(press, contacts).tilts;
    const bool static_by_cones = ps::wrench_feasible({press}, contacts);
    EXPECT_EQ(static_by_hull, static_by_cones)
        << "center (" << c.x() << ", " << c.y() << ") probe (" << probe.x()
        << ", " << probe.y() << ")";
  }
  EXPECT_GT(checked, 200);
}
