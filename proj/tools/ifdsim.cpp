// ifdsim: scenario-driven front end for the fitness-driven dispersal solver.
//
// Verbs:
//   check  parse + validate a scenario and print the model report
//   run    execute a scenario (solver + diagnostics + artifacts)
//   sweep  one run per parameter value, aggregated into sweep.csv

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ifd/io.hpp"
#include "ifd/scenario.hpp"

namespace {

int report_issues(const ifd::ParseResult& parsed) {
  for (const ifd::ParseIssue& issue : parsed.issues) {
    std::cerr << "error: ";
    if (issue.line > 0) std::cerr << "line " << issue.line << ": ";
    std::cerr << issue.message << "\n";
  }
  return 2;
}

std::size_t default_jobs() {
  if (const char* env = std::getenv("IFD_JOBS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

std::vector<double> parse_values(const std::string& csv, bool& ok) {
  std::vector<double> out;
  ok = true;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = comma == std::string::npos ? csv.size() + 1 : comma + 1;
    if (tok.empty()) continue;
    try {
      std::size_t consumed = 0;
      out.push_back(std::stod(tok, &consumed));
      if (consumed != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      ok = false;
      return out;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structure-preserving finite-volume solver for fitness-driven dispersal"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;
  std::string param;
  std::string values_csv;
  std::size_t jobs = default_jobs();

  CLI::App* check = app.add_subcommand("check", "parse a scenario and print the model report");
  check->add_option("--scenario", scenario_path, "scenario file")->required();

  CLI::App* run = app.add_subcommand("run", "execute a scenario");
  run->add_option("--scenario", scenario_path, "scenario file")->required();
  run->add_option("--out", out_dir, "output directory (overrides the scenario)");

  CLI::App* sweep = app.add_subcommand("sweep", "run a scenario across parameter values");
  sweep->add_option("--scenario", scenario_path, "scenario file")->required();
  sweep->add_option("--param", param, "one of dt, h, delta, M, eta")->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();
  sweep->add_option("--jobs", jobs, "concurrent runs (default: IFD_JOBS or hardware)");
  sweep->add_option("--out", out_dir, "output directory (overrides the scenario)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // usage problems are execution errors (exit 2); --help stays 0
    return code == 0 ? 0 : 2;
  }

  const ifd::ParseResult parsed = ifd::parse_scenario_file(scenario_path);
  if (!parsed.ok()) return report_issues(parsed);
  const ifd::Scenario& s = *parsed.scenario;

  if (check->parsed()) {
    try {
      std::cout << ifd::model_report_text(s);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    return 0;
  }

  if (run->parsed()) {
    const ifd::ExecResult r = ifd::execute(s, out_dir);
    if (r.exit_code == 2) {
      std::cerr << "error: " << r.error << "\n";
      return 2;
    }
    for (const ifd::CheckOutcome& c : r.checks)
      std::cout << "[" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail
                << "\n";
    std::cout << "artifacts: " << r.run_dir.string() << "\n";
    return r.exit_code;
  }

  // sweep
  bool ok = false;
  const std::vector<double> values = parse_values(values_csv, ok);
  if (!ok || values.empty()) {
    std::cerr << "error: --values must be a comma-separated list of numbers\n";
    return 2;
  }
  const ifd::SweepResult r = ifd::sweep(s, param, values, jobs, out_dir);
  if (r.exit_code == 2) {
    std::cerr << "error: " << r.error << "\n";
    return 2;
  }
  for (const ifd::SweepRow& row : r.rows)
    std::cout << ifd::format_g17(row.value) << ": " << row.status << "\n";
  std::cout << "table: " << (r.out_dir / "sweep.csv").string() << "\n";
  return r.exit_code;
}
