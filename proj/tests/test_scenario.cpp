#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ifd/expression.hpp"
#include "ifd/io.hpp"
#include "ifd/scenario.hpp"

using namespace ifd;
namespace fs = std::filesystem;

namespace {

fs::path test_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "ifd_scenario_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

const char* kMinimalScenario = R"(
[model]
n_species = 1
a = 2
m = 3
[initial]
u0 = 1
)";

std::string two_species_text(const std::string& extra) {
  return std::string(R"(
[scenario]
name = pair
[domain]
cells_x = 32
[model]
n_species = 2
a = 2 1; 1 2
m = 3, 3
[initial]
u0 = 0.5, 0.5
[solver]
dt = 0.01
t_end = 0.5
)") + extra;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("expression grammar") {
  const Expression e = Expression::parse("3 + sin(2*pi*x) - cos(y)/2 + exp(0)*x");
  const double x = 0.3, y = 1.1;
  const double expected =
      3.0 + std::sin(2.0 * 3.14159265358979323846 * x) - std::cos(y) / 2.0 + x;
  CHECK(e(x, y) == doctest::Approx(expected).epsilon(1e-15));

  CHECK(Expression::parse("-x")(2.0) == doctest::Approx(-2.0));
  CHECK(Expression::parse("2*(1+3)/4")(0.0) == doctest::Approx(2.0));
  CHECK(Expression::parse("1e-3")(0.0) == doctest::Approx(1e-3));

  CHECK_THROWS_AS(Expression::parse("3 +"), ExprError);
  CHECK_THROWS_AS(Expression::parse("sin 2"), ExprError);
  CHECK_THROWS_AS(Expression::parse("foo(x)"), ExprError);
  CHECK_THROWS_AS(Expression::parse("3, 2"), ExprError);
  CHECK_THROWS_AS(Expression::parse("(1"), ExprError);
  CHECK_THROWS_AS(Expression::parse(""), ExprError);

  try {
    Expression::parse("1 + bogus");
  } catch (const ExprError& err) {
    CHECK(err.position() == 4);
  }
}

TEST_CASE("minimal scenario parses with defaults filled") {
  const ParseResult r = parse_scenario(kMinimalScenario);
  REQUIRE(r.ok());
  const Scenario& s = *r.scenario;
  CHECK(s.n_species == 1);
  CHECK(s.dim == 1);
  CHECK(s.cells_x == 64);
  CHECK(s.length_x == 1.0);
  CHECK_FALSE(s.solver.dt.has_value());  // auto
  CHECK(s.solver.t_end == 1.0);
  CHECK(s.solver.cfl_safety == 0.45);
  CHECK(std::isinf(s.solver.truncation_m));
  CHECK(s.checks == std::vector<std::string>{"positivity", "edi"});
  CHECK(s.kappa_tol == 1e-10);
}

TEST_CASE("non-symmetric A is a named validation error") {
  const ParseResult r = parse_scenario(R"(
[model]
n_species = 2
a = 2 1; 1.5 2
m = 3, 3
[initial]
u0 = 0.5, 0.5
)");
  CHECK_FALSE(r.ok());
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].message.find("symmetric") != std::string::npos);
  CHECK(r.issues[0].message.find("(1,2)") != std::string::npos);
}

TEST_CASE("all parse errors are collected, not just the first") {
  const ParseResult r = parse_scenario(R"(
[model]
n_species = 2
a = 2 1; 1 2
m = 3, 3
[solver]
dt = -1
snapshot_stride = 0
[bogus]
key = 1
)");
  CHECK_FALSE(r.ok());
  CHECK(r.issues.size() >= 4);  // bad dt, bad stride, unknown section, missing u0
  bool has_dt = false, has_section = false, has_u0 = false, has_stride = false;
  for (const ParseIssue& i : r.issues) {
    has_dt |= i.message.find("dt") != std::string::npos;
    has_section |= i.message.find("[bogus]") != std::string::npos;
    has_u0 |= i.message.find("u0") != std::string::npos;
    has_stride |= i.message.find("snapshot_stride") != std::string::npos;
  }
  CHECK(has_dt);
  CHECK(has_section);
  CHECK(has_u0);
  CHECK(has_stride);
}

TEST_CASE("unknown keys and checks are reported with line numbers") {
  const ParseResult r = parse_scenario(R"(
[model]
n_species = 1
a = 2
m = 3
typo_key = 7
[initial]
u0 = 1
[diagnostics]
checks = positivity, nonsense
)");
  CHECK_FALSE(r.ok());
  bool unknown_key = false, unknown_check = false;
  for (const ParseIssue& i : r.issues) {
    if (i.message.find("typo_key") != std::string::npos) {
      unknown_key = true;
      CHECK(i.line == 6);
    }
    unknown_check |= i.message.find("nonsense") != std::string::npos;
  }
  CHECK(unknown_key);
  CHECK(unknown_check);
}

TEST_CASE("extinction initial state composes the steady state and eta") {
  const ParseResult r = parse_scenario(R"(
[domain]
cells_x = 16
[model]
n_species = 2
a = 2 1; 1 2
m = 3, 3
[initial]
u0 = extinction:{1}+1e-3
)");
  REQUIRE(r.ok());
  const BuiltScenario bs = build_scenario(*r.scenario);
  for (std::size_t c = 0; c < bs.grid.n_cells(); ++c) {
    CHECK(bs.u0(0, c) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(bs.u0(1, c) == doctest::Approx(1.5).epsilon(1e-15));
  }
}

TEST_CASE("negative initial expressions are rejected") {
  const ParseResult r = parse_scenario(R"(
[model]
n_species = 1
a = 2
m = 3
[initial]
u0 = x - 10
)");
  CHECK_FALSE(r.ok());
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].message.find("negative") != std::string::npos);
}

TEST_CASE("per-cell tables round-trip through build_scenario") {
  const fs::path dir = test_root() / "tables";
  fs::create_directories(dir);
  {
    std::ofstream m(dir / "m.csv");
    m << "m_1,m_2\n";
    for (int c = 0; c < 8; ++c) m << (3.0 + 0.1 * c) << "," << 2.5 << "\n";
    std::ofstream a(dir / "a.csv");
    a << "a_11,a_12,a_21,a_22\n";
    for (int c = 0; c < 8; ++c) a << 2.0 << "," << 0.5 << "," << 0.5 << "," << 2.0 << "\n";
  }
  const ParseResult r = parse_scenario(R"(
[domain]
cells_x = 8
[model]
n_species = 2
a_table = a.csv
m_table = m.csv
[initial]
u0 = ideal_free
)",
                                       dir);
  REQUIRE(r.ok());
  const BuiltScenario bs = build_scenario(*r.scenario);
  CHECK_FALSE(bs.data.constant_a());
  CHECK(bs.data.m_at(0, 3) == doctest::Approx(3.3));
  // wrong row count is a validation error
  {
    std::ofstream m(dir / "short.csv");
    m << "m_1,m_2\n3,3\n";
  }
  const ParseResult bad = parse_scenario(R"(
[domain]
cells_x = 8
[model]
n_species = 2
a_table = a.csv
m_table = short.csv
[initial]
u0 = ideal_free
)",
                                         dir);
  CHECK_FALSE(bad.ok());
}

TEST_CASE("execute: stationary scenario exits 0 with a zero entropy column") {
  const fs::path out = test_root() / "stationary";
  const std::string text = R"(
[scenario]
name = stationary
[domain]
cells_x = 32
[model]
n_species = 2
a = 2 1; 1 2
m = 3, 3
[initial]
u0 = ideal_free
[solver]
dt = 0.05
t_end = 1.0
snapshot_stride = 5
[diagnostics]
checks = positivity, edi, fixed_point
)";
  const ParseResult r = parse_scenario(text);
  REQUIRE(r.ok());
  const ExecResult res = execute(*r.scenario, out);
  CHECK(res.exit_code == 0);
  const auto rows = read_csv_rows(out / "functionals.csv");
  REQUIRE(rows.size() > 2);
  CHECK(rows[0][1] == "E");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][1] == "0");
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "diagnostics.json"));
  CHECK(fs::exists(out / "snapshots/snap_000000.csv"));

  // snapshot header carries coordinates and species columns
  const auto snap = read_csv_rows(out / "snapshots/snap_000000.csv");
  REQUIRE(!snap.empty());
  CHECK(snap[0] == std::vector<std::string>{"x", "species_1", "species_2"});
  CHECK(snap.size() == 33);  // header + one row per cell
}

TEST_CASE("execute twice byte-reproduces every artifact") {
  const ParseResult r = parse_scenario(two_species_text(R"(
[diagnostics]
checks = positivity, edi, mass
)"));
  REQUIRE(r.ok());
  const fs::path a = test_root() / "repro_a";
  const fs::path b = test_root() / "repro_b";
  CHECK(execute(*r.scenario, a).exit_code == 0);
  CHECK(execute(*r.scenario, b).exit_code == 0);
  for (const char* name : {"functionals.csv", "diagnostics.json", "diagnostics.txt",
                           "manifest.json", "snapshots/snap_000000.csv"}) {
    CAPTURE(name);
    CHECK(read_text_file(a / name) == read_text_file(b / name));
  }
  // every file in the run directory is listed in the manifest with its hash
  const std::string manifest = read_text_file(a / "manifest.json");
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (rel == "manifest.json") continue;
    CAPTURE(rel.string());
    CHECK(manifest.find(rel.generic_string()) != std::string::npos);
    CHECK(manifest.find(hex64(fnv1a64(read_text_file(entry.path())))) != std::string::npos);
  }
}

TEST_CASE("execute: a violated structural condition fails the am4 check with exit 1") {
  const ParseResult r = parse_scenario(R"(
[domain]
cells_x = 16
[model]
n_species = 2
a = 2 1; 1 2
m = 3, -1
[initial]
u0 = 0.5, 0.5
[solver]
t_end = 0.05
[diagnostics]
checks = am4
)");
  REQUIRE(r.ok());
  const ExecResult res = execute(*r.scenario, test_root() / "am4_violation");
  CHECK(res.exit_code == 1);
  REQUIRE(res.checks.size() == 1);
  CHECK_FALSE(res.checks[0].pass);
  CHECK(res.checks[0].detail.find("kappa_hat=-5") != std::string::npos);
}

TEST_CASE("execute reports execution errors as exit code 2") {
  const ParseResult r = parse_scenario(two_species_text(""));
  REQUIRE(r.ok());
  Scenario s = *r.scenario;
  s.solver.dt = 50.0;  // violates the stability bound mid-run
  s.solver.t_end = 100.0;
  const ExecResult res = execute(s, test_root() / "exec_error");
  CHECK(res.exit_code == 2);
  CHECK_FALSE(res.error.empty());
}

TEST_CASE("sweep over a single value matches execute") {
  const ParseResult r = parse_scenario(two_species_text(""));
  REQUIRE(r.ok());
  const fs::path run_dir = test_root() / "single_run";
  const fs::path sweep_dir = test_root() / "single_sweep";
  CHECK(execute(*r.scenario, run_dir).exit_code == 0);
  const double values[] = {0.01};
  const SweepResult sw = sweep(*r.scenario, "dt", values, 2, sweep_dir);
  CHECK(sw.exit_code == 0);
  REQUIRE(sw.rows.size() == 1);
  CHECK(sw.rows[0].status == "ok");
  CHECK(read_text_file(run_dir / "functionals.csv") ==
        read_text_file(sweep_dir / "sweep_dt_0" / "functionals.csv"));
  CHECK(fs::exists(sweep_dir / "sweep.csv"));
}

TEST_CASE("sweep: dt refinement rows come back in deterministic order") {
  const ParseResult r = parse_scenario(two_species_text(""));
  REQUIRE(r.ok());
  const double values[] = {0.01, 0.005, 0.0025};
  const SweepResult sw = sweep(*r.scenario, "dt", values, 3, test_root() / "dt_sweep");
  CHECK(sw.exit_code == 0);
  REQUIRE(sw.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(sw.rows[i].value == values[i]);
  const auto rows = read_csv_rows(sw.out_dir / "sweep.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == "value");
  CHECK(rows[1][0] == format_g17(0.01));
}

TEST_CASE("sweep validates its parameter") {
  const ParseResult r = parse_scenario(two_species_text(""));
  REQUIRE(r.ok());
  const double values[] = {0.1};
  const SweepResult sw = sweep(*r.scenario, "volume", values, 1, test_root() / "bad_param");
  CHECK(sw.exit_code == 2);
  // eta sweeps need an extinction initial state
  const SweepResult sw2 = sweep(*r.scenario, "eta", values, 1, test_root() / "bad_eta");
  CHECK(sw2.exit_code == 2);
}

TEST_CASE("sweep maps h to cell counts and eta to the reintroduced density") {
  SUBCASE("h sweep") {
    const ParseResult r = parse_scenario(two_species_text(""));
    REQUIRE(r.ok());
    const double values[] = {1.0 / 16, 1.0 / 32};
    const SweepResult sw = sweep(*r.scenario, "h", values, 2, test_root() / "h_sweep");
    CHECK(sw.exit_code == 0);
    for (const SweepRow& row : sw.rows) CHECK(row.status == "ok");
    // the finer run resolves the same dynamics; snapshot row counts differ
    const auto coarse = read_csv_rows(sw.out_dir / "sweep_h_0" / "snapshots" / "snap_000000.csv");
    const auto fine = read_csv_rows(sw.out_dir / "sweep_h_1" / "snapshots" / "snap_000000.csv");
    CHECK(coarse.size() == 17);  // header + 16 cells
    CHECK(fine.size() == 33);
  }
  SUBCASE("eta sweep") {
    const ParseResult r = parse_scenario(R"(
[domain]
cells_x = 16
[model]
n_species = 2
a = 2 1; 1 2
m = 3, 3
[initial]
u0 = extinction:{1}+1e-3
[solver]
t_end = 0.2
[diagnostics]
checks = positivity
)");
    REQUIRE(r.ok());
    const double values[] = {0.0, 1e-3};
    const SweepResult sw = sweep(*r.scenario, "eta", values, 2, test_root() / "eta_sweep");
    CHECK(sw.exit_code == 0);
    // eta = 0 stays at the extinction steady state; eta > 0 grows
    CHECK(sw.rows[0].e_end == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(sw.rows[1].e_end < 0.75);
  }
}

TEST_CASE("scenario-level refinement study restricts across meshes for h") {
  const ParseResult r = parse_scenario(R"(
[domain]
cells_x = 8
[model]
n_species = 2
a = 2 1; 1 2
m = 3 + sin(2*pi*x), 3 + cos(2*pi*x)
[initial]
u0 = 0.5, 0.5
[solver]
t_end = 0.3
)");
  REQUIRE(r.ok());
  const double hs[] = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  const RefinementTable table = refinement_study(*r.scenario, "h", hs);
  REQUIRE(table.diffs.size() == 3);
  CHECK(table.monotone);
  for (double d : table.diffs) CHECK(d > 0.0);
  // dt passthrough defers to the solver-level study
  const double dts[] = {5e-4, 5e-4, 5e-4};
  const RefinementTable same = refinement_study(*r.scenario, "dt", dts);
  CHECK(same.diffs[0] == 0.0);
}

TEST_CASE("a 2D scenario runs through the full pipeline") {
  const ParseResult r = parse_scenario(R"(
[scenario]
name = plane
[domain]
dim = 2
cells_x = 8
cells_y = 6
length_x = 1.0
length_y = 1.0
[model]
n_species = 2
a = 2 1; 1 2
m = 3 + 0.3*sin(2*pi*x), 3 + 0.3*cos(2*pi*y)
[initial]
u0 = ideal_free
[solver]
t_end = 0.2
[diagnostics]
checks = positivity, fixed_point, edi
)");
  REQUIRE(r.ok());
  const ExecResult res = execute(*r.scenario, test_root() / "plane");
  CHECK(res.exit_code == 0);
  const auto snap = read_csv_rows(res.run_dir / "snapshots" / "snap_000000.csv");
  REQUIRE(!snap.empty());
  CHECK(snap[0] == std::vector<std::string>{"x", "y", "species_1", "species_2"});
  CHECK(snap.size() == 49);  // header + 48 cells
}

TEST_CASE("model_report_text summarizes the instance") {
  const ParseResult r = parse_scenario(two_species_text(""));
  REQUIRE(r.ok());
  const std::string report = model_report_text(*r.scenario);
  CHECK(report.find("kappa_hat") != std::string::npos);
  CHECK(report.find("E*") != std::string::npos);
  CHECK(report.find("3") != std::string::npos);
}
