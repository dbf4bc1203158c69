#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vibronlab/chain.hpp"
#include "vibronlab/gaussian.hpp"
#include "vibronlab/io.hpp"
#include "vibronlab/laser.hpp"

// Named scenario runners wiring the chain, laser, gaussian, and fock modules
// into figure-ready datasets with one manifest per run.
namespace vibronlab::experiments {

inline constexpr const char* tool_version = "1.0.0";

// tqw_ballistic | tqw_dephasing | tqw_disorder | tqd | dtqd_sweep |
// leads_step | switch | ramsey_number | ramsey_current | fano_sweep
const std::vector<std::string>& scenario_names();
bool is_scenario(const std::string& name);

// Built-in parameter tree; presets/<scenario>.json mirrors it verbatim.
io::json default_params(const std::string& scenario);

// Ion chain with attached reservoirs, assembled from the "chain" and
// "lasers" subtrees of a scenario parameter tree.
struct BuiltChain {
  chain::ChainGeometry geometry;
  chain::TightBinding tb;
  std::map<int, laser::CoolingSpec> cooling;        // keyed by chain site
  std::map<int, laser::ReservoirParams> reservoirs; // keyed by chain site
};

BuiltChain build_chain(const io::json& params);

// Standard site-resolved layout: site, z_um, n_mean, n_std, I_in, I_out.
io::Table profile_table(const chain::ChainGeometry& geometry,
                        const gaussian::GaussianGenerator& gen,
                        const gaussian::CorrelatorState& steady,
                        const Eigen::VectorXd* n_std = nullptr);

struct RunResult {
  io::RunManifest manifest;
  std::map<std::string, io::Table> datasets; // name -> table, also on disk
};

// Runs one scenario and writes every dataset as CSV plus a JSON mirror and
// one manifest into out_dir; an empty out_dir skips the writes.  Reruns
// with the same inputs, seed, and thread count are bit-identical.
RunResult run_scenario(const std::string& scenario, const io::json& params,
                       const std::string& out_dir = "",
                       std::uint64_t seed = 12345, int threads = 1);

struct TheoryReport {
  io::Table table; // column_index, max_abs_err, max_rel_err, pass
  bool all_pass{false};
};

// Column-wise relative-error report of a dataset against same-shaped
// predictions; a column passes when every |data - prediction| stays below
// rel_tol * |prediction| + abs_tol.
TheoryReport compare_to_theory(const io::Table& data,
                               const io::Table& prediction, double rel_tol,
                               double abs_tol = 0.0);

struct WickReference {
  double mean{0.0};   // vibrons/s through the dot
  double noise0{0.0}; // one-sided zero-frequency current noise
  double fano{0.0};   // noise0 / (2 mean)
};

// Quadratic-model reference for the biased three-mode dot: the correlator
// fixed point and a second Lyapunov solve give the exact mean current and
// zero-frequency noise of the symmetrized dot current.
WickReference wick_fano_reference(double j_pat, double gamma_left,
                                  double gamma_right, double nbar_left,
                                  double nbar_right);

} // namespace vibronlab::experiments
