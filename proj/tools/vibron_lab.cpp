#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vibronlab/constants.hpp"
#include "vibronlab/experiments.hpp"
#include "vibronlab/fock.hpp"
#include "vibronlab/gaussian.hpp"
#include "vibronlab/io.hpp"

namespace {

namespace ex = vibronlab::experiments;
namespace gs = vibronlab::gaussian;
namespace io = vibronlab::io;
namespace chain = vibronlab::chain;
using vibronlab::constants::two_pi;
using io::json;

struct CommonArgs {
  std::string preset;
  std::vector<std::string> sets;
  std::string out;
  std::uint64_t seed{12345};
  int threads{1};
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--preset", args.preset,
                  "Preset name or path to a parameter file")
      ->envname("VIBRONLAB_PRESET");
  cmd->add_option("--set", args.sets,
                  "Override one key, e.g. --set chain.axial_freq_hz=2e5")
      ->take_all();
  cmd->add_option("--out", args.out, "Output directory for datasets")
      ->envname("VIBRONLAB_OUT");
  cmd->add_option("--seed", args.seed, "Monte Carlo master seed")
      ->envname("VIBRONLAB_SEED");
  cmd->add_option("--threads", args.threads, "Worker threads for ensembles")
      ->envname("VIBRONLAB_THREADS")
      ->check(CLI::PositiveNumber);
}

std::string find_preset_file(const std::string& name) {
  namespace fs = std::filesystem;
  if (fs::exists(name) && fs::is_regular_file(name)) return name;
  std::vector<std::string> dirs;
  if (const char* env = std::getenv("VIBRONLAB_PRESET_DIR")) dirs.push_back(env);
  dirs.push_back("presets");
  for (const auto& dir : dirs) {
    const std::string path = dir + "/" + name + ".json";
    if (fs::exists(path)) return path;
  }
  return {};
}

// Defaults of `scenario`, overlaid with the preset file (when given) and
// then with each --set assignment; unknown keys are rejected.
json resolve_params(const std::string& scenario, const CommonArgs& args) {
  json tree = ex::default_params(scenario);
  if (!args.preset.empty()) {
    const std::string path = find_preset_file(args.preset);
    if (path.empty() && ex::is_scenario(args.preset) && args.preset == scenario) {
      // Built-in defaults already loaded.
    } else if (path.empty()) {
      throw std::runtime_error("preset '" + args.preset +
                               "' not found (looked for a file, then "
                               "$VIBRONLAB_PRESET_DIR, then ./presets)");
    } else {
      tree = io::merge_config(tree, io::load_config(path));
    }
  }
  if (!args.sets.empty()) {
    json overrides = json::object();
    for (const auto& assignment : args.sets) io::set_path(overrides, assignment);
    tree = io::merge_config(tree, overrides);
  }
  return tree;
}

std::string default_out(const std::string& scenario, const CommonArgs& args) {
  return args.out.empty() ? "runs/" + scenario : args.out;
}

int run_named_scenario(const std::string& scenario, const CommonArgs& args) {
  const json params = resolve_params(scenario, args);
  const std::string out_dir = default_out(scenario, args);
  const auto result =
      ex::run_scenario(scenario, params, out_dir, args.seed, args.threads);
  std::printf("%s: %zu datasets -> %s (%.2f s)\n", scenario.c_str(),
              result.datasets.size(), out_dir.c_str(),
              result.manifest.wall_time_s);
  for (const auto& [name, table] : result.datasets)
    std::printf("  %s: %ld rows x %ld cols\n", name.c_str(), table.n_rows(),
                table.n_cols());
  return 0;
}

// Assembles the chain of a gaussian preset, requiring usable reservoirs.
ex::BuiltChain chain_for_gaussian(const json& params) {
  ex::BuiltChain bc = ex::build_chain(params);
  if (bc.reservoirs.empty())
    throw std::runtime_error(
        "this preset attaches no reservoirs; pick one with a lasers block");
  return bc;
}

void write_outputs(const std::string& out_dir, const std::string& scenario,
                   const json& params, const CommonArgs& args,
                   const std::map<std::string, io::Table>& tables,
                   const json& derived, double wall_s) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, table] : tables) {
    io::emit_dataset(table, "csv", out_dir + "/" + name + ".csv");
    io::emit_dataset(table, "json", out_dir + "/" + name + ".json");
  }
  io::RunManifest manifest;
  manifest.tool_version = ex::tool_version;
  manifest.scenario = scenario;
  manifest.inputs = params;
  manifest.derived = derived;
  manifest.seed = args.seed;
  manifest.threads = args.threads;
  manifest.wall_time_s = wall_s;
  io::write_manifest(manifest, out_dir + "/manifest.json");
}

int run_cool(const CommonArgs& args) {
  const std::string scenario = args.preset.empty() ? "tqd" : args.preset;
  const std::string base = ex::is_scenario(scenario) ? scenario : "tqd";
  const json params = resolve_params(base, args);
  const ex::BuiltChain bc = chain_for_gaussian(params);
  json derived = json::array();
  for (const auto& [site, res] : bc.reservoirs) {
    std::printf(
        "site %d: gamma/2pi = %.4f kHz, delta/2pi = %.4f kHz, nbar = %.4f%s\n",
        site, res.gamma / two_pi / 1e3, res.delta / two_pi / 1e3, res.nbar,
        res.heating ? "  [heating: unusable as a reservoir]" : "");
    derived.push_back(json{{"site", site},
                           {"gamma_hz", res.gamma / two_pi},
                           {"delta_hz", res.delta / two_pi},
                           {"nbar", res.nbar},
                           {"heating", res.heating}});
  }
  if (!args.out.empty())
    write_outputs(args.out, base, params, args, {},
                  json{{"reservoirs", derived}}, 0.0);
  return 0;
}

int run_steady(const CommonArgs& args) {
  const std::string scenario = args.preset.empty() ? "tqw_ballistic" : args.preset;
  const std::string base = ex::is_scenario(scenario) ? scenario : "tqw_ballistic";
  const json params = resolve_params(base, args);
  const ex::BuiltChain bc = chain_for_gaussian(params);
  auto gen = gs::build_edge_generator(bc.tb, bc.reservoirs);
  if (params.contains("noise")) {
    gs::NoiseModel noise;
    noise.gamma_d = params.at("noise").at("gamma_d_over_gamma_left").get<double>() *
                    bc.reservoirs.begin()->second.gamma;
    noise.xi_c = params.at("noise").at("xi_c_um").get<double>() * 1e-6;
    gen.dmat = gs::dephasing_matrix(bc.geometry, noise);
  }
  const auto ss = gs::steady_state(gen);
  const auto table = ex::profile_table(bc.geometry, gen, ss);
  const std::string out_dir = default_out("steady", args);
  write_outputs(out_dir, base, params, args, {{"profile", table}},
                json{{"note", "steady profile of the preset chain"}}, 0.0);
  std::printf("steady: %d sites -> %s\n", gen.dim(), out_dir.c_str());
  return 0;
}

int run_evolve(const CommonArgs& args, double duration, int samples) {
  const std::string scenario = args.preset.empty() ? "tqw_ballistic" : args.preset;
  const std::string base = ex::is_scenario(scenario) ? scenario : "tqw_ballistic";
  const json params = resolve_params(base, args);
  const ex::BuiltChain bc = chain_for_gaussian(params);
  const auto gen = gs::build_edge_generator(bc.tb, bc.reservoirs);
  const int n = gen.dim();

  std::vector<double> times(samples);
  for (int i = 0; i < samples; ++i)
    times[i] = duration * static_cast<double>(i) / (samples - 1);
  gs::CorrelatorState c0;
  c0.cmat = Eigen::MatrixXcd::Zero(n, n);
  const auto traj = gs::evolve(gen, c0, times);

  io::Table table;
  table.add_column("time_s", times);
  for (int s = 0; s < n; ++s) {
    std::vector<double> occ(samples);
    for (int i = 0; i < samples; ++i) occ[i] = traj[i].cmat(s, s).real();
    table.add_column("n_site" + std::to_string(s), occ);
  }
  const std::string out_dir = default_out("evolve", args);
  write_outputs(out_dir, base, params, args, {{"relaxation", table}},
                json{{"duration_s", duration}, {"samples", samples}}, 0.0);
  std::printf("evolve: %d sites, %d samples -> %s\n", n, samples,
              out_dir.c_str());
  return 0;
}

int run_fourier(const CommonArgs& args, const std::vector<double>& factors,
                std::vector<double> xi_c_um) {
  const std::string scenario = args.preset.empty() ? "tqw_dephasing" : args.preset;
  const std::string base = ex::is_scenario(scenario) ? scenario : "tqw_dephasing";
  const json params = resolve_params(base, args);
  const ex::BuiltChain bc = chain_for_gaussian(params);
  const auto clean = gs::build_edge_generator(bc.tb, bc.reservoirs);
  const int n = clean.dim();
  const double gamma_left = bc.reservoirs.begin()->second.gamma;
  const double nbar_left = bc.reservoirs.begin()->second.nbar;
  const double nbar_right = bc.reservoirs.rbegin()->second.nbar;

  if (xi_c_um.empty())
    xi_c_um.push_back((bc.geometry.positions[1] - bc.geometry.positions[0]) * 1e6);

  std::vector<double> fac_col, xi_col, flat_col, r2_col, cur_col;
  for (const double xi : xi_c_um)
    for (const double fac : factors) {
      auto gen = clean;
      gen.dmat = gs::dephasing_matrix(bc.geometry,
                                      {fac * gamma_left, xi * 1e-6, 0.0});
      const auto ss = gs::steady_state(gen);
      const Eigen::VectorXd occ = ss.cmat.diagonal().real();
      const auto flow = gs::site_currents(gen, ss);
      fac_col.push_back(fac);
      xi_col.push_back(xi);
      const double span = nbar_left - nbar_right;
      const auto seg = occ.segment(1, n - 2);
      flat_col.push_back(
          std::sqrt((seg.array() - seg.mean()).square().mean()) / span);
      // interior linear fit quality, as in the tqw summaries
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      const int m = n - 4;
      for (int i = 0; i < m; ++i) {
        const double x = 2 + i, y = occ(2 + i);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
      }
      const double beta = (m * sxy - sx * sy) / (m * sxx - sx * sx);
      const double alpha = (sy - beta * sx) / m;
      double ss_res = 0, ss_tot = 0;
      for (int i = 0; i < m; ++i) {
        const double x = 2 + i, y = occ(2 + i);
        ss_res += (y - alpha - beta * x) * (y - alpha - beta * x);
        ss_tot += (y - sy / m) * (y - sy / m);
      }
      r2_col.push_back(1.0 - ss_res / ss_tot);
      cur_col.push_back(flow.out(n / 2));
    }

  io::Table table;
  table.add_column("gamma_d_over_gamma_left", fac_col);
  table.add_column("xi_c_um", xi_col);
  table.add_column("flatness", flat_col);
  table.add_column("r_squared", r2_col);
  table.add_column("current_mid", cur_col);
  const std::string out_dir = default_out("fourier", args);
  write_outputs(out_dir, base, params, args, {{"crossover", table}},
                json{{"gamma_left_rad_s", gamma_left}}, 0.0);
  std::printf("fourier: %zu points -> %s\n", fac_col.size(), out_dir.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"vibron transport through laser-cooled ion chains"};
  app.set_version_flag("--version", ex::tool_version);
  app.require_subcommand(1);

  CommonArgs args;
  std::string scenario;
  std::string ramsey_variant = "number";
  double duration = 0.01;
  int samples = 101;
  std::vector<double> gamma_factors = {1.0, 3.0, 10.0, 30.0};
  std::vector<double> xi_c_um;

  auto* run_cmd = app.add_subcommand("run", "Run a named scenario");
  run_cmd->add_option("scenario", scenario, "Scenario name")
      ->required()
      ->check(CLI::IsMember(ex::scenario_names()));
  add_common(run_cmd, args);

  auto* cool_cmd =
      app.add_subcommand("cool", "Print reservoir rates of a preset");
  add_common(cool_cmd, args);

  auto* steady_cmd =
      app.add_subcommand("steady", "Steady profile of the preset chain");
  add_common(steady_cmd, args);

  auto* evolve_cmd =
      app.add_subcommand("evolve", "Relaxation from vacuum to the steady state");
  add_common(evolve_cmd, args);
  evolve_cmd->add_option("--duration", duration, "Evolution window in s")
      ->check(CLI::PositiveNumber);
  evolve_cmd->add_option("--samples", samples, "Sample count")
      ->check(CLI::Range(2, 100000));

  auto* fourier_cmd = app.add_subcommand(
      "fourier", "Profile metrics over a dephasing-strength sweep");
  add_common(fourier_cmd, args);
  fourier_cmd->add_option("--gamma-d-factor", gamma_factors,
                          "Dephasing rates in units of gamma_left");
  fourier_cmd->add_option("--xi-c-um", xi_c_um,
                          "Noise correlation lengths in um");

  auto* disorder_cmd =
      app.add_subcommand("disorder", "Disorder-averaged wire (tqw_disorder)");
  add_common(disorder_cmd, args);

  auto* ramsey_cmd =
      app.add_subcommand("ramsey", "Ramsey probe scenarios");
  ramsey_cmd->add_option("variant", ramsey_variant, "number or current")
      ->check(CLI::IsMember({"number", "current"}));
  add_common(ramsey_cmd, args);

  auto* switch_cmd =
      app.add_subcommand("switch", "Spin-gated vibron switch (switch)");
  add_common(switch_cmd, args);

  auto* fano_cmd =
      app.add_subcommand("fano", "Fano factor sweep (fano_sweep)");
  add_common(fano_cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run_named_scenario(scenario, args);
    if (cool_cmd->parsed()) return run_cool(args);
    if (steady_cmd->parsed()) return run_steady(args);
    if (evolve_cmd->parsed()) return run_evolve(args, duration, samples);
    if (fourier_cmd->parsed()) return run_fourier(args, gamma_factors, xi_c_um);
    if (disorder_cmd->parsed()) return run_named_scenario("tqw_disorder", args);
    if (ramsey_cmd->parsed())
      return run_named_scenario(
          ramsey_variant == "number" ? "ramsey_number" : "ramsey_current", args);
    if (switch_cmd->parsed()) return run_named_scenario("switch", args);
    if (fano_cmd->parsed()) return run_named_scenario("fano_sweep", args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
