#ifndef IFD_DIAGNOSTICS_HPP_
#define IFD_DIAGNOSTICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifd/solver.hpp"

namespace ifd {

struct EdiCheck {
  std::vector<double> residuals;   // E(t0) - E(t1) - trapezoid(D) per interval
  std::vector<double> thresholds;  // pass requires residual >= -threshold
  bool pass = true;
  std::size_t first_fail = 0;      // interval index, valid when !pass
  double max_abs_residual = 0.0;
};

// Interval-wise audit of the entropy-dissipation inequality. The tolerance
// model is tol_scale * (dt + h^2) * (1 + E(t0)): first order in time, second
// order in space.
EdiCheck verify_edi(const Trajectory& tr, const Grid& grid, double tol_scale = 10.0);

struct DecayFit {
  std::optional<double> gamma;  // -slope of log E(t); unset when E hit the floor
  double r2 = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points = 0;
  std::optional<double> floor_time;  // first time E reached zero/machine floor
};

// Least-squares exponential rate of E(t) over [window_lo, window_hi].
DecayFit fit_decay_rate(const Trajectory& tr, double window_lo, double window_hi);
// Window defaulting: drop the initial 20% of the run as transient.
DecayFit fit_decay_rate(const Trajectory& tr);

// High-accuracy adaptive Dormand-Prince integration of the spatially
// homogeneous dynamics du_i/dt = u_i (m_i - (A u)_i). Requires constant A and
// m; serves as the reference for homogeneous runs.
std::vector<double> ode_oracle(const ProblemData& data, std::span<const double> u0, double t_end,
                               double rtol = 1e-10);

struct GradAudit {
  double cumulative = 0.0;        // trapezoid of int |grad u|^2 over the run
  double c_fit = 0.0;             // smallest C with cumulative(t) <= C (1 + t)
  double slope_first_half = 0.0;  // linear-fit slopes of the cumulative curve
  double slope_second_half = 0.0;
  bool pass = true;               // no super-linear growth trend
};

// Checks the a-priori bound: cumulative gradient energy grows at most
// linearly in time (second-half slope must not exceed the first-half slope).
GradAudit grad_estimate_audit(const Trajectory& tr);

struct ProbeReport {
  std::vector<std::size_t> reintroduced;      // extinct species indices
  std::vector<double> min_fitness;            // cellwise min of f_i(u0), per reintroduced species
  bool fitness_positive = false;              // all reintroduced fitnesses > 0 cellwise
  bool mass_increasing = false;               // strictly increasing over every interval
  std::vector<double> times;
  std::vector<std::vector<double>> masses;    // per reintroduced species, per snapshot
};

// Reintroduces a small constant density eta on the extinct components of the
// partial extinction state and reports whether the environment favors the
// reintroduced species (positive fitness, growing mass). Failure is a
// finding, not an error.
ProbeReport extinction_instability_probe(const ProblemData& data, const Grid& grid,
                                         const ExtinctionPattern& pattern, double eta,
                                         double t_window = 0.5,
                                         SolverConfig base = SolverConfig{});

struct RefinementTable {
  std::string parameter;
  std::vector<double> values;
  std::vector<double> diffs;   // L2 difference of final states between levels
  std::vector<double> orders;  // observed order from successive diffs
  bool monotone = true;        // diffs do not increase
};

// Reruns the solver across a parameter sequence ("dt", "delta" or "M") and
// tabulates L2 differences at t_end between successive levels.
RefinementTable refinement_study(const ProblemData& data, const Grid& grid, const State& u0,
                                 const SolverConfig& base, const std::string& parameter,
                                 std::span<const double> values);

double state_l2_diff(const Grid& grid, const State& a, const State& b);

// Largest finite Poincare-Beckner ratio over the recorded snapshots, from the
// stored functional values; nullopt when the ratio was never defined.
std::optional<double> beckner_sup(const Trajectory& tr);

}  // namespace ifd

#endif  // IFD_DIAGNOSTICS_HPP_
