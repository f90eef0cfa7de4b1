#pragma once
//
// Episode runner and evaluation sweep. An episode wires the controller to
// the world model at a 50 Hz decision rate with 1 kHz inner steps, runs to
// a terminal state or timeout, and reports the standard metrics. A sweep
// replays the polar evaluation grid (10 radii x 60 angles) with per-episode
// seeds derived from a base seed, optionally sharded across threads with a
// deterministic merge.

#include "pegsearch/baselines.hpp"
#include "pegsearch/control.hpp"
#include "pegsearch/geom.hpp"
#include "pegsearch/pomdp.hpp"
#include "pegsearch/sim.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pegsearch::harness {

using control::Vec6;
using geom::Vec2;
using geom::Vec3;

enum class Method { Active, Spiral, Lissajous };

inline const char *to_string(Method m) {
  switch (m) {
  case Method::Active: return "active";
  case Method::Spiral: return "spiral";
  case Method::Lissajous: return "lissajous";
  }
  return "?";
}

inline std::optional<Method> parse_method(const std::string &s) {
  if (s == "active") return Method::Active;
  if (s == "spiral") return Method::Spiral;
  if (s == "lissajous") return Method::Lissajous;
  return std::nullopt;
}

//==============================================================================
// Episode
//==============================================================================

struct EpisodeConfig {
  Method method = Method::Active;
  Vec2 e0 = Vec2::Zero();      // hole-minus-peg displacement at spawn
  std::uint64_t seed = 0;
  double timeout = 300.0;      // simulated seconds

  geom::PegHoleGeometry geometry;
  control::ControlConfig control;
  sim::SimConfig sim;
  baselines::SpiralParams spiral;
  baselines::LissajousParams lissajous;

  bool stop_at_move = false;   // cut the episode at the first Tilt->Move edge
  bool record_trajectory = false;
};

struct TrajectoryRow {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  control::FsmState state = control::FsmState::Approach;
  sim::ContactMode mode = sim::ContactMode::FreeSpace;
};

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct EpisodeResult {
  Method method = Method::Active;
  Vec2 e0 = Vec2::Zero();
  std::uint64_t seed = 0;

  bool success = false;
  double search_time = kNan;     // search entry to bore entry
  double path_length = kNan;     // peg path during the search states
  double completion_time = kNan; // episode start to Finish
  double epsilon_rad = kNan;     // estimated vs true direction at Tilt->Move
  std::string fail_reason = "none";

  std::vector<double> probe_axis_errors; // per accepted tilt, rad
  std::vector<control::Transition> transitions;
  std::vector<TrajectoryRow> trajectory;
  bool audit_ok = true;
};

inline double angle_between(const Vec2 &a, const Vec2 &b) {
  if (a.norm() == 0.0 || b.norm() == 0.0)
    return kNan;
  return std::abs(std::atan2(geom::cross2(a, b), a.dot(b)));
}

inline bool is_search_state(control::FsmState s) {
  return s == control::FsmState::Tilt || s == control::FsmState::Move ||
         s == control::FsmState::Spiral;
}

inline EpisodeResult run_episode(const EpisodeConfig &cfg) {
  EpisodeResult out;
  out.method = cfg.method;
  out.e0 = cfg.e0;
  out.seed = cfg.seed;

  sim::WorldState world = sim::spawn(cfg.e0, cfg.geometry);
  sim::SimConfig sim_cfg = cfg.sim;
  std::mt19937_64 rng(cfg.seed);

  const control::SearchMethod sm =
      cfg.method == Method::Active    ? control::SearchMethod::Active
      : cfg.method == Method::Spiral  ? control::SearchMethod::SpiralPath
                                      : control::SearchMethod::LissajousPath;
  control::SearchPath path;
  if (cfg.method == Method::Spiral)
    path = baselines::spiral_path(cfg.spiral);
  else if (cfg.method == Method::Lissajous)
    path = baselines::lissajous_path(cfg.lissajous);

  control::FsmController fsm(cfg.control, cfg.geometry, sm, path);

  const int substeps = std::max(
      1, int(std::lround(cfg.control.fsm_period / sim_cfg.dt)));
  std::size_t seen_transitions = 0;
  std::size_t seen_tilts = 0;
  double path_accum = 0.0;
  std::optional<double> search_entry, insert_entry, finish_time;
  bool stop = false;

  while (!stop && world.time < cfg.timeout) {
    control::SensorSnapshot snap;
    snap.pose = world.pose;
    snap.pose.position = sim::noisy_position(world, sim_cfg, rng);
    snap.twist = world.twist;
    snap.external_wrench = world.reaction;
    snap.time = world.time;

    control::ControllerCommand cmd;
    try {
      cmd = fsm.tick(snap);
    } catch (const control::EulerSingularity &) {
      out.fail_reason = "singularity";
      break;
    }

    // bookkeeping on freshly taken edges
    for (; seen_transitions < fsm.transitions().size(); ++seen_transitions) {
      const auto &tr = fsm.transitions()[seen_transitions];
      if (!search_entry && (tr.to == control::FsmState::Tilt ||
                            tr.to == control::FsmState::Spiral))
        search_entry = tr.time;
      if (!insert_entry && tr.to == control::FsmState::Insert)
        insert_entry = tr.time;
      if (!finish_time && tr.to == control::FsmState::Finish)
        finish_time = tr.time;
      if (tr.from == control::FsmState::Tilt &&
          tr.to == control::FsmState::Move) {
        out.epsilon_rad =
            angle_between(fsm.belief().point, world.displacement());
        if (cfg.stop_at_move)
          stop = true;
      }
    }
    for (; seen_tilts < fsm.tilt_records().size(); ++seen_tilts) {
      const auto &rec = fsm.tilt_records()[seen_tilts];
      const Vec2 est_dir = geom::perp_cw(rec.axis.k_hat);
      out.probe_axis_errors.push_back(
          angle_between(est_dir, world.displacement()));
    }
    if (cfg.record_trajectory)
      out.trajectory.push_back(
          {world.time, world.pose.position, fsm.state(), world.mode});
    if (fsm.terminal() || stop)
      break;

    const bool searching = is_search_state(fsm.state());
    for (int k = 0; k < substeps; ++k) {
      control::SensorSnapshot inner;
      inner.pose = world.pose;
      inner.pose.position = sim::noisy_position(world, sim_cfg, rng);
      inner.twist = world.twist;
      inner.external_wrench = world.reaction;
      inner.time = world.time;

      Vec6 wrench;
      try {
        wrench = control::impedance_wrench(cmd, inner);
      } catch (const control::EulerSingularity &) {
        out.fail_reason = "singularity";
        stop = true;
        break;
      }
      fsm.observe(inner.pose.position,
                  world.insertion_depth() > 0.0);
      const Vec3 before = world.pose.position;
      sim::step(world, wrench, cfg.geometry, sim_cfg);
      if (searching && !insert_entry)
        path_accum += (world.pose.position - before).norm();
    }
  }

  out.success = fsm.succeeded() && sim::is_inserted(world, cfg.geometry);
  out.transitions = fsm.transitions();
  out.audit_ok = world.audit_ok;
  if (search_entry && insert_entry)
    out.search_time = *insert_entry - *search_entry;
  if (search_entry)
    out.path_length = path_accum;
  if (finish_time)
    out.completion_time = *finish_time;
  if (out.fail_reason == "none" && !out.success && !cfg.stop_at_move) {
    if (!fsm.failure_reason().empty())
      out.fail_reason = fsm.failure_reason();
    else if (world.time >= cfg.timeout)
      out.fail_reason = "timeout";
    else
      out.fail_reason = "incomplete";
  }
  return out;
}

//==============================================================================
// Evaluation grid and sweep
//==============================================================================

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t episode_seed(std::uint64_t base, std::size_t index) {
  return base ^ splitmix64(std::uint64_t(index) + 1);
}

struct SweepConfig {
  Method method = Method::Active;
  std::uint64_t base_seed = 12345;
  int radii = 10;
  int angles = 60;
  double r_min = 2.0 / 3.0 * 0.010;
  double r_max = 1.5 * 0.010;
  int threads = 1;
  EpisodeConfig prototype; // method/e0/seed overridden per episode
};

inline Vec2 grid_displacement(const SweepConfig &cfg, int i, int j) {
  const double dr =
      cfg.radii > 1
          ? cfg.r_min + double(i) * (cfg.r_max - cfg.r_min) / double(cfg.radii - 1)
          : cfg.r_min;
  const double th = -std::numbers::pi +
                    double(j) * 2.0 * std::numbers::pi / double(cfg.angles);
  return dr * Vec2(std::cos(th), std::sin(th));
}

inline std::vector<EpisodeResult> sweep(const SweepConfig &cfg) {
  const std::size_t total = std::size_t(cfg.radii) * std::size_t(cfg.angles);
  std::vector<EpisodeResult> results(total);
  const int threads = std::max(1, cfg.threads);

  auto worker = [&](int shard) {
    for (std::size_t idx = std::size_t(shard); idx < total;
         idx += std::size_t(threads)) {
      const int i = int(idx) / cfg.angles;
      const int j = int(idx) % cfg.angles;
      EpisodeConfig ep = cfg.prototype;
      ep.method = cfg.method;
      ep.e0 = grid_displacement(cfg, i, j);
      ep.seed = episode_seed(cfg.base_seed, idx);
      results[idx] = run_episode(ep);
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int s = 0; s < threads; ++s)
      pool.emplace_back(worker, s);
    for (auto &t : pool)
      t.join();
  }
  return results;
}

//==============================================================================
// Output formats and summary statistics
//==============================================================================

inline std::string format_double(double v) {
  if (std::isnan(v))
    return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline constexpr const char *kCsvHeader =
    "method,dr_mm,theta_rad,success,Ts_s,ls_m,Tc_s,eps_deg,fail_reason";

inline void emit_csv_row(std::ostream &os, const EpisodeResult &r) {
  const double dr_mm = r.e0.norm() * 1e3;
  const double theta = std::atan2(r.e0.y(), r.e0.x());
  const double eps_deg = r.epsilon_rad * 180.0 / std::numbers::pi;
  os << to_string(r.method) << ',' << format_double(dr_mm) << ','
     << format_double(theta) << ',' << (r.success ? 1 : 0) << ','
     << format_double(r.search_time) << ',' << format_double(r.path_length)
     << ',' << format_double(r.completion_time) << ','
     << format_double(eps_deg) << ',' << r.fail_reason << '\n';
}

inline void emit_csv(std::ostream &os, const std::vector<EpisodeResult> &rs) {
  os << kCsvHeader << '\n';
  for (const auto &r : rs)
    emit_csv_row(os, r);
}

struct Aggregate {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  // means over successful episodes
  double mean_search_time = kNan;
  double mean_path_length = kNan;
  double mean_completion_time = kNan;
  double mean_epsilon_deg = kNan;
  double mean_e0_norm = kNan; // over all episodes
};

inline Aggregate aggregate(const std::vector<EpisodeResult> &rs) {
  Aggregate a;
  a.episodes = rs.size();
  double ts = 0, ls = 0, tc = 0, eps = 0, e0 = 0;
  std::size_t n_eps = 0;
  for (const auto &r : rs) {
    e0 += r.e0.norm();
    if (!std::isnan(r.epsilon_rad)) { // present whenever probing reached Move
      eps += r.epsilon_rad * 180.0 / std::numbers::pi;
      ++n_eps;
    }
    if (!r.success)
      continue;
    ++a.successes;
    ts += r.search_time;
    ls += r.path_length;
    tc += r.completion_time;
  }
  if (a.episodes > 0) {
    a.success_rate = double(a.successes) / double(a.episodes);
    a.mean_e0_norm = e0 / double(a.episodes);
  }
  if (a.successes > 0) {
    a.mean_search_time = ts / double(a.successes);
    a.mean_path_length = ls / double(a.successes);
    a.mean_completion_time = tc / double(a.successes);
  }
  if (n_eps > 0)
    a.mean_epsilon_deg = eps / double(n_eps);
  return a;
}

//==============================================================================
// Flat key = value configuration
//==============================================================================

//! Minimal override file: one `key = value` per line, `#` comments. Unknown
//! keys raise, so typos fail loudly.
inline void apply_config_entry(EpisodeConfig &cfg, const std::string &key,
                               const std::string &value) {
  auto d = [&] { return std::stod(value); };
  if (key == "timeout") cfg.timeout = d();
  else if (key == "noise") cfg.sim.position_noise = d();
  else if (key == "sim.mu") cfg.sim.mu = d();
  else if (key == "sim.tilt_rate") cfg.sim.tilt_rate = d();
  else if (key == "sim.tilt_cap") cfg.sim.tilt_cap = d();
  else if (key == "sim.audit") cfg.sim.audit = d() != 0.0;
  else if (key == "control.probe_force") cfg.control.probe_force = d();
  else if (key == "control.press_force") cfg.control.press_force = d();
  else if (key == "control.move_speed") cfg.control.move_speed = d();
  else if (key == "control.probe_count") cfg.control.probe_count = int(d());
  else if (key == "control.reset_budget") cfg.control.reset_budget = int(d());
  else if (key == "spiral.pitch") cfg.spiral.pitch = d();
  else if (key == "spiral.speed") cfg.spiral.speed = d();
  else if (key == "spiral.max_radius") cfg.spiral.max_radius = d();
  else if (key == "lissajous.amplitude") cfg.lissajous.amp_x = cfg.lissajous.amp_y = d();
  else if (key == "lissajous.base_rate") {
    cfg.lissajous.rate_x = d();
    cfg.lissajous.rate_y = d() * baselines::kGoldenRatio;
  }
  else if (key == "lissajous.duration") cfg.lissajous.duration = d();
  else if (key == "geometry.clearance") cfg.geometry.clearance = d();
  else if (key == "geometry.peg_radius") cfg.geometry.peg_radius = d();
  else if (key == "geometry.hole_depth") cfg.geometry.hole_depth = d();
  else throw std::invalid_argument("unknown config key: " + key);
}

inline void apply_config_text(EpisodeConfig &cfg, const std::string &text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos)
      eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      continue; // blank or comment-only line
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line missing key");
    apply_config_entry(cfg, key, value);
  }
}

} // namespace pegsearch::harness
