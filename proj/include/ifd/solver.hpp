#ifndef IFD_SOLVER_HPP_
#define IFD_SOLVER_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ifd/functionals.hpp"
#include "ifd/grid.hpp"
#include "ifd/problem.hpp"

namespace ifd {

enum class ReactionScheme {
  explicit_euler,  // u f treated explicitly, positivity guarded by the dt bound
  patankar,        // destruction part implicit and proportional to the update
};

struct SolverConfig {
  std::optional<double> dt;  // fixed step; nullopt means adaptive from stability_bound
  double t_end = 1.0;
  double cfl_safety = 0.45;
  double delta = 0.0;  // linear diffusion delta * Laplacian(u_i)
  double truncation_m = std::numeric_limits<double>::infinity();  // caps u in flux/reaction weights
  ReactionScheme reaction_scheme = ReactionScheme::explicit_euler;
  std::size_t snapshot_stride = 1;
  bool audit_mass = false;  // track the per-step discrete mass identity residual

  std::uint64_t fingerprint() const;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double time)
      : std::runtime_error(what + " (t=" + std::to_string(time) + ")"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_ = 0.0;
};

// Time-stamped snapshots of a run with their functional values.
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<FunctionalValues> functionals;
  // Largest solver step taken since the previous snapshot (0 for the first);
  // feeds the discretization-error tolerance models downstream.
  std::vector<double> max_step_dt;
  double max_mass_residual = 0.0;  // only tracked when config.audit_mass
  std::uint64_t config_fingerprint = 0;
  std::uint64_t data_fingerprint = 0;
};

// Largest stable/positivity-preserving step for the explicit update from
// state u: cfl_safety / (advective out-rate + negative fitness rate +
// diffusive rate). +infinity when every term vanishes.
double stability_bound(const ProblemData& data, const Grid& grid, const State& u,
                       const SolverConfig& config);

// One forward step of size dt:
//   u' = u + dt * [ -div(upwind(min(u,M), grad f)) + reaction + delta*Lap(u) ]
// Explicit reaction is min(u,M)*f; the Patankar variant treats the negative
// part implicitly, proportional to the updated density, so u' >= 0 for any dt.
State step(const ProblemData& data, const Grid& grid, const State& u, const SolverConfig& config,
           double dt);

// Step with dt resolved from the config (fixed value or stability bound).
State step(const ProblemData& data, const Grid& grid, const State& u, const SolverConfig& config);

// Integrates to t_end, recording a snapshot every snapshot_stride steps plus
// the initial and final states. A fixed dt that violates the stability bound
// at any step is an error.
Trajectory run(const ProblemData& data, const Grid& grid, const State& u0,
               const SolverConfig& config);

inline double trajectory_action(const Trajectory& tr) {
  std::vector<double> d(tr.functionals.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = tr.functionals[i].dissipation;
  return trajectory_action(tr.times, d);
}

}  // namespace ifd

#endif  // IFD_SOLVER_HPP_
