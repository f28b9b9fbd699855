#ifndef IFD_SCENARIO_HPP_
#define IFD_SCENARIO_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifd/diagnostics.hpp"
#include "ifd/problem.hpp"
#include "ifd/solver.hpp"

namespace ifd {

// A fully parsed scenario description. Field data stays symbolic
// (expressions / table paths) until build_scenario evaluates it on the grid.
struct Scenario {
  std::string name = "scenario";

  int dim = 1;
  std::size_t cells_x = 64;
  std::size_t cells_y = 64;
  double length_x = 1.0;
  double length_y = 1.0;

  std::size_t n_species = 0;
  std::optional<Matrix> a_constant;
  std::optional<std::filesystem::path> a_table;
  std::vector<std::string> m_exprs;
  std::optional<std::filesystem::path> m_table;
  double kappa_tol = 1e-10;

  enum class InitKind { expressions, ideal_free, extinction };
  InitKind init_kind = InitKind::expressions;
  std::vector<std::string> u0_exprs;
  std::vector<std::size_t> extinct_set;  // zero-based
  double eta = 0.0;                      // density reintroduced on extinct components

  SolverConfig solver;

  std::vector<std::string> checks{"positivity", "edi"};
  double edi_tol_scale = 10.0;
  std::optional<std::pair<double, double>> decay_window;
  double decay_r2 = 0.99;
  double oracle_rtol = 1e-10;
  double oracle_tol = 1e-3;
  std::optional<double> beckner_cap;
  double fixed_point_tol = 1e-12;

  std::filesystem::path out_dir;  // defaults to runs/<name>
  std::filesystem::path base_dir = ".";  // resolves relative table paths
};

struct ParseIssue {
  std::size_t line = 0;  // 0 when the issue is not tied to a source line
  std::string message;
};

struct ParseResult {
  std::optional<Scenario> scenario;
  std::vector<ParseIssue> issues;  // every problem found, not just the first
  bool ok() const { return scenario.has_value(); }
};

// Parses and fully validates, including constructing the ProblemData once to
// run its invariants. All violations are collected into `issues`.
ParseResult parse_scenario(std::string_view text,
                           const std::filesystem::path& base_dir = ".");
ParseResult parse_scenario_file(const std::filesystem::path& path);

struct BuiltScenario {
  ProblemData data;
  Grid grid;
  State u0;
};

BuiltScenario build_scenario(const Scenario& s);

struct CheckOutcome {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExecResult {
  int exit_code = 2;  // 0 checks pass, 1 a check failed, 2 execution error
  std::filesystem::path run_dir;
  std::vector<CheckOutcome> checks;
  std::string error;  // set when exit_code == 2
  // summary numbers for sweep aggregation
  double e_end = 0.0;
  double gamma = 0.0;  // NaN when no fit was possible
  double edi_max_residual = 0.0;
};

// Runs model checks, the solver and the selected diagnostics; writes
// manifest, functionals CSV, per-snapshot field CSVs and diagnostics
// JSON/text into the run directory.
ExecResult execute(const Scenario& s, const std::filesystem::path& out_override = {});

struct SweepRow {
  double value = 0.0;
  double e_end = 0.0;
  double gamma = 0.0;
  double edi_max_residual = 0.0;
  double wall_seconds = 0.0;
  std::string status;  // "ok", "check_failed" or "error: ..."
};

struct SweepResult {
  int exit_code = 2;
  std::filesystem::path out_dir;
  std::vector<SweepRow> rows;
  std::string error;
};

// One run per value (concurrently, isolated subdirectories), aggregated into
// sweep.csv with deterministic row order. parameter is one of
// dt | h | delta | M | eta.
SweepResult sweep(const Scenario& s, const std::string& parameter,
                  std::span<const double> values, std::size_t jobs,
                  const std::filesystem::path& out_override = {});

// Human-readable model report (used by the `check` verb).
std::string model_report_text(const Scenario& s);

// Scenario-level refinement study. Handles "h" by rebuilding the grid per
// level and restricting the finer final state onto the coarser mesh by cell
// averaging (cell counts must nest); other parameters defer to the
// solver-level study. Needs at least three levels.
RefinementTable refinement_study(const Scenario& s, const std::string& parameter,
                                 std::span<const double> values);

}  // namespace ifd

#endif  // IFD_SCENARIO_HPP_
