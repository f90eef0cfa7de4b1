// Command line front end: single episodes, evaluation sweeps, method
// comparisons, and trajectory dumps for plotting.
//
// Exit codes: 0 on success, 1 when the requested episode or comparison did
// not achieve its goal (failed insertion, missing output file), 2 on usage
// or configuration errors.

#include "pegsearch/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

namespace ph = pegsearch::harness;
namespace pc = pegsearch::control;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

struct CliError {
  int code;
  std::string message;
};

ph::Method method_from_flag(const std::string &name) {
  if (const auto m = ph::parse_method(name))
    return *m;
  throw CliError{kExitUsage, "unknown method: " + name};
}

void apply_config_file(ph::EpisodeConfig &cfg, const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw CliError{kExitUsage, "cannot open config file: " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    ph::apply_config_text(cfg, ss.str());
  } catch (const std::exception &e) {
    throw CliError{kExitUsage, std::string("config error: ") + e.what()};
  }
}

double nan_to_null_safe(double v) { return v; } // nlohmann maps NaN to null

json result_to_json(const ph::EpisodeResult &r) {
  json j;
  j["method"] = ph::to_string(r.method);
  j["dr_mm"] = r.e0.norm() * 1e3;
  j["theta_rad"] = std::atan2(r.e0.y(), r.e0.x());
  j["e0_m"] = {r.e0.x(), r.e0.y()};
  j["seed"] = r.seed;
  j["success"] = r.success;
  j["Ts_s"] = nan_to_null_safe(r.search_time);
  j["ls_m"] = nan_to_null_safe(r.path_length);
  j["Tc_s"] = nan_to_null_safe(r.completion_time);
  j["eps_deg"] = r.epsilon_rad * 180.0 / std::numbers::pi;
  j["fail_reason"] = r.fail_reason;
  j["audit_ok"] = r.audit_ok;
  json edges = json::array();
  for (const auto &tr : r.transitions)
    edges.push_back({{"from", pc::to_string(tr.from)},
                     {"to", pc::to_string(tr.to)},
                     {"t_s", tr.time}});
  j["transitions"] = edges;
  return j;
}

json aggregate_to_json(const ph::Aggregate &a) {
  json j;
  j["episodes"] = a.episodes;
  j["successes"] = a.successes;
  j["success_rate"] = a.success_rate;
  j["mean_Ts_s"] = a.mean_search_time;
  j["mean_ls_m"] = a.mean_path_length;
  j["mean_Tc_s"] = a.mean_completion_time;
  j["mean_eps_deg"] = a.mean_epsilon_deg;
  j["mean_e0_m"] = a.mean_e0_norm;
  return j;
}

void emit_jsonl(std::ostream &os, const std::vector<ph::EpisodeResult> &rs) {
  for (const auto &r : rs) {
    json j = result_to_json(r);
    j.erase("transitions"); // keep sweep records one short line each
    os << j.dump() << '\n';
  }
}

pegsearch::geom::Vec2 displacement_from_flags(const ph::EpisodeConfig &cfg,
                                              double dr_mm, double theta) {
  const pegsearch::geom::Vec2 e0 =
      dr_mm * 1e-3 * pegsearch::geom::Vec2(std::cos(theta), std::sin(theta));
  if (!pegsearch::pomdp::in_overlap_set(e0, cfg.geometry))
    throw CliError{kExitUsage,
                   "--dr must put the peg in partial overlap (clearance < dr "
                   "< peg diameter, in mm)"};
  return e0;
}

int cmd_run(const std::string &method, double dr_mm, double theta,
            std::uint64_t seed, const std::optional<std::string> &config,
            double noise, double timeout) {
  ph::EpisodeConfig cfg;
  cfg.method = method_from_flag(method);
  if (config)
    apply_config_file(cfg, *config);
  if (noise >= 0.0)
    cfg.sim.position_noise = noise;
  if (timeout > 0.0)
    cfg.timeout = timeout;
  cfg.e0 = displacement_from_flags(cfg, dr_mm, theta);
  cfg.seed = seed;

  const ph::EpisodeResult r = ph::run_episode(cfg);
  std::cout << result_to_json(r).dump(2) << '\n';
  return r.success ? kExitOk : kExitFailed;
}

int cmd_sweep(const std::string &method, const std::string &out_path,
              bool jsonl, std::uint64_t seed, int threads,
              const std::optional<std::string> &config, double noise) {
  ph::SweepConfig sc;
  sc.method = method_from_flag(method);
  sc.base_seed = seed;
  sc.threads = threads;
  if (config)
    apply_config_file(sc.prototype, *config);
  if (noise >= 0.0)
    sc.prototype.sim.position_noise = noise;

  const auto results = ph::sweep(sc);
  std::ofstream out(out_path);
  if (!out)
    throw CliError{kExitFailed, "cannot open output file: " + out_path};
  if (jsonl)
    emit_jsonl(out, results);
  else
    ph::emit_csv(out, results);
  out.close();

  std::cout << aggregate_to_json(ph::aggregate(results)).dump(2) << '\n';
  return kExitOk;
}

int cmd_compare(std::uint64_t seed, int threads,
                const std::optional<std::string> &config,
                const std::optional<std::string> &out_path) {
  json report;
  ph::Aggregate agg[2];
  const ph::Method methods[2] = {ph::Method::Active, ph::Method::Spiral};
  for (int m = 0; m < 2; ++m) {
    ph::SweepConfig sc;
    sc.method = methods[m];
    sc.base_seed = seed;
    sc.threads = threads;
    if (config)
      apply_config_file(sc.prototype, *config);
    agg[m] = ph::aggregate(ph::sweep(sc));
    report[ph::to_string(methods[m])] = aggregate_to_json(agg[m]);
  }
  json ratios;
  ratios["search_time"] = agg[1].mean_search_time / agg[0].mean_search_time;
  ratios["path_length"] = agg[1].mean_path_length / agg[0].mean_path_length;
  ratios["success_rate"] =
      agg[0].success_rate > 0.0 ? agg[1].success_rate / agg[0].success_rate
                                : 0.0;
  report["spiral_over_active"] = ratios;

  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (out_path) {
    std::ofstream out(*out_path);
    if (!out)
      throw CliError{kExitFailed, "cannot open output file: " + *out_path};
    out << text;
  }
  return kExitOk;
}

int cmd_plot_data(const std::string &method, double dr_mm, double theta,
                  std::uint64_t seed, const std::string &out_path,
                  const std::optional<std::string> &config, double noise) {
  ph::EpisodeConfig cfg;
  cfg.method = method_from_flag(method);
  if (config)
    apply_config_file(cfg, *config);
  if (noise >= 0.0)
    cfg.sim.position_noise = noise;
  cfg.e0 = displacement_from_flags(cfg, dr_mm, theta);
  cfg.seed = seed;
  cfg.record_trajectory = true;

  const ph::EpisodeResult r = ph::run_episode(cfg);
  std::ofstream out(out_path);
  if (!out)
    throw CliError{kExitFailed, "cannot open output file: " + out_path};
  out << "time_s,x_m,y_m,z_m,fsm_state,contact_mode\n";
  for (const auto &row : r.trajectory)
    out << ph::format_double(row.time) << ','
        << ph::format_double(row.position.x()) << ','
        << ph::format_double(row.position.y()) << ','
        << ph::format_double(row.position.z()) << ','
        << pc::to_string(row.state) << ','
        << pegsearch::sim::to_string(row.mode) << '\n';
  return r.success ? kExitOk : kExitFailed;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Peg-in-hole search strategies on a quasi-static contact model"};
  app.require_subcommand(1);

  std::string method = "active";
  double dr_mm = 10.0;
  double theta = 0.0;
  std::uint64_t seed = 12345;
  int threads = 1;
  double noise = -1.0;
  double timeout = -1.0;
  std::string out_path;
  std::optional<std::string> config;
  std::optional<std::string> compare_out;
  bool jsonl = false;

  CLI::App *run = app.add_subcommand("run", "Run one episode, print metrics as JSON");
  run->add_option("--method", method, "active | spiral | lissajous");
  run->add_option("--dr", dr_mm, "initial displacement magnitude [mm]");
  run->add_option("--theta", theta, "initial displacement angle [rad]");
  run->add_option("--seed", seed, "episode seed");
  run->add_option("--config", config, "key = value override file");
  run->add_option("--noise", noise, "position sensing noise bound [m]");
  run->add_option("--timeout", timeout, "episode budget [s]");

  CLI::App *sweep = app.add_subcommand("sweep", "Run the 10 x 60 evaluation grid");
  sweep->add_option("--method", method, "active | spiral | lissajous");
  sweep->add_option("--out", out_path, "output file (CSV by default)")->required();
  sweep->add_flag("--jsonl", jsonl, "write JSON lines instead of CSV");
  sweep->add_option("--seed", seed, "base seed");
  sweep->add_option("--threads", threads, "worker threads");
  sweep->add_option("--config", config, "key = value override file");
  sweep->add_option("--noise", noise, "position sensing noise bound [m]");

  CLI::App *compare = app.add_subcommand(
      "compare", "Sweep active and spiral, print aggregate comparison");
  compare->add_option("--seed", seed, "base seed");
  compare->add_option("--threads", threads, "worker threads");
  compare->add_option("--config", config, "key = value override file");
  compare->add_option("--out", compare_out, "also write the report here");

  CLI::App *plot = app.add_subcommand(
      "plot-data", "Run one episode, dump the trajectory as CSV");
  plot->add_option("--method", method, "active | spiral | lissajous");
  plot->add_option("--dr", dr_mm, "initial displacement magnitude [mm]");
  plot->add_option("--theta", theta, "initial displacement angle [rad]");
  plot->add_option("--seed", seed, "episode seed");
  plot->add_option("--noise", noise, "position sensing noise bound [m]");
  plot->add_option("--out", out_path, "trajectory CSV path")->required();
  plot->add_option("--config", config, "key = value override file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed())
      return cmd_run(method, dr_mm, theta, seed, config, noise, timeout);
    if (sweep->parsed())
      return cmd_sweep(method, out_path, jsonl, seed, threads, config, noise);
    if (compare->parsed())
      return cmd_compare(seed, threads, config, compare_out);
    if (plot->parsed())
      return cmd_plot_data(method, dr_mm, theta, seed, out_path, config, noise);
  } catch (const CliError &e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitUsage;
}
