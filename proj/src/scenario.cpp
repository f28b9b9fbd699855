#include "ifd/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ifd/diagnostics.hpp"
#include "ifd/expression.hpp"
#include "ifd/functionals.hpp"
#include "ifd/io.hpp"

namespace ifd {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Comma split that respects parentheses, so expression lists survive intact.
std::vector<std::string> split_top_level(std::string_view s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct RawEntry {
  std::string value;
  std::size_t line = 0;
  bool used = false;
};

struct RawScenario {
  std::map<std::string, std::map<std::string, RawEntry>> sections;
  std::vector<ParseIssue> issues;
};

RawScenario tokenize(std::string_view text) {
  RawScenario raw;
  std::string section;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line_view =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    // '#' starts a comment; ';' stays available as the matrix row separator
    const std::size_t hash = line_view.find('#');
    if (hash != std::string_view::npos) line_view = line_view.substr(0, hash);
    const std::string line = trim(line_view);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        raw.issues.push_back({lineno, "malformed section header: '" + line + "'"});
        continue;
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) raw.issues.push_back({lineno, "empty section name"});
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      raw.issues.push_back({lineno, "expected 'key = value': '" + line + "'"});
      continue;
    }
    if (section.empty()) {
      raw.issues.push_back({lineno, "key outside of any [section]"});
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      raw.issues.push_back({lineno, "empty key"});
      continue;
    }
    auto [it, inserted] = raw.sections[section].try_emplace(key, RawEntry{value, lineno, false});
    if (!inserted)
      raw.issues.push_back({lineno, "duplicate key '" + key + "' in [" + section + "]"});
  }
  return raw;
}

class Reader {
 public:
  Reader(RawScenario& raw, std::vector<ParseIssue>& issues) : raw_(raw), issues_(issues) {}

  RawEntry* find(const std::string& section, const std::string& key) {
    auto sit = raw_.sections.find(section);
    if (sit == raw_.sections.end()) return nullptr;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return nullptr;
    kit->second.used = true;
    return &kit->second;
  }

  void number(const std::string& section, const std::string& key, double& out) {
    if (RawEntry* e = find(section, key)) {
      if (!parse_double(e->value, out))
        issue(e->line, "[" + section + "] " + key + ": not a number: '" + e->value + "'");
    }
  }

  void count(const std::string& section, const std::string& key, std::size_t& out) {
    if (RawEntry* e = find(section, key)) {
      try {
        std::size_t consumed = 0;
        const long long v = std::stoll(e->value, &consumed);
        if (consumed != e->value.size() || v < 0) throw std::invalid_argument("");
        out = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        issue(e->line,
              "[" + section + "] " + key + ": not a non-negative integer: '" + e->value + "'");
      }
    }
  }

  void issue(std::size_t line, const std::string& message) { issues_.push_back({line, message}); }

  static bool parse_double(const std::string& s, double& out) {
    try {
      std::size_t consumed = 0;
      out = std::stod(s, &consumed);
      return consumed == s.size();
    } catch (const std::exception&) {
      return false;
    }
  }

  void report_unknown() {
    static const std::map<std::string, std::set<std::string>> known = {
        {"scenario", {"name"}},
        {"domain", {"dim", "cells_x", "cells_y", "length_x", "length_y"}},
        {"model", {"n_species", "a", "a_table", "m", "m_table", "kappa_tol"}},
        {"initial", {"u0"}},
        {"solver",
         {"dt", "t_end", "cfl_safety", "delta", "truncation_m", "reaction_scheme",
          "snapshot_stride"}},
        {"diagnostics",
         {"checks", "edi_tol_scale", "decay_window", "decay_r2", "oracle_rtol", "oracle_tol",
          "beckner_cap", "fixed_point_tol"}},
        {"output", {"directory"}},
    };
    for (auto& [section, entries] : raw_.sections) {
      auto kit = known.find(section);
      if (kit == known.end()) {
        issue(entries.empty() ? 0 : entries.begin()->second.line,
              "unknown section [" + section + "]");
        continue;
      }
      for (auto& [key, entry] : entries)
        if (!entry.used && !kit->second.contains(key))
          issue(entry.line, "unknown key '" + key + "' in [" + section + "]");
    }
  }

 private:
  RawScenario& raw_;
  std::vector<ParseIssue>& issues_;
};

const std::set<std::string> kKnownChecks = {"am4",     "subcritical", "edi",  "decay",
                                            "positivity", "mass",     "beckner", "grad",
                                            "oracle",  "fixed_point"};

std::string pattern_text(const ExtinctionPattern& p) {
  std::string out = "{";
  bool first = true;
  for (std::size_t i : p.extinct_indices()) {
    if (!first) out += ",";
    out += std::to_string(i + 1);
    first = false;
  }
  return out + "}";
}

bool has_check(const Scenario& s, std::string_view name) {
  return std::find(s.checks.begin(), s.checks.end(), name) != s.checks.end();
}

void parse_expressions_checked(const std::vector<std::string>& exprs, std::size_t line,
                               const std::string& what, std::vector<ParseIssue>& issues) {
  for (const std::string& e : exprs) {
    try {
      Expression::parse(e);
    } catch (const ExprError& err) {
      issues.push_back({line, what + ": " + err.what() + " in '" + e + "'"});
    }
  }
}

// "extinction:{1,3}" or "extinction:{2}+1e-3"
bool parse_extinction_value(const std::string& value, std::vector<std::size_t>& extinct,
                           double& eta, std::string& error) {
  const std::string body = trim(std::string_view(value).substr(std::string("extinction:").size()));
  const std::size_t open = body.find('{');
  const std::size_t close = body.find('}');
  if (open != 0 || close == std::string::npos) {
    error = "expected extinction:{i,j,...}[+eta]";
    return false;
  }
  const std::string inner = trim(std::string_view(body).substr(1, close - 1));
  extinct.clear();
  if (!inner.empty()) {
    for (const std::string& tok : split_top_level(inner, ',')) {
      try {
        std::size_t consumed = 0;
        const long long v = std::stoll(tok, &consumed);
        if (consumed != tok.size() || v < 1) throw std::invalid_argument("");
        extinct.push_back(static_cast<std::size_t>(v - 1));  // user-facing indices are 1-based
      } catch (const std::exception&) {
        error = "bad species index '" + tok + "' in extinction set";
        return false;
      }
    }
  }
  eta = 0.0;
  const std::string rest = trim(std::string_view(body).substr(close + 1));
  if (!rest.empty()) {
    if (rest.front() != '+') {
      error = "expected '+eta' after extinction set";
      return false;
    }
    if (!Reader::parse_double(trim(std::string_view(rest).substr(1)), eta) || eta < 0.0) {
      error = "bad eta '" + rest + "'";
      return false;
    }
  }
  return true;
}

// Drops leading coordinate columns ("x", optionally "y") from a table.
std::size_t coord_columns(const CsvTable& t) {
  std::size_t skip = 0;
  if (!t.header.empty() && trim(t.header[0]) == "x") {
    skip = 1;
    if (t.header.size() > 1 && trim(t.header[1]) == "y") skip = 2;
  }
  return skip;
}

}  // namespace

ParseResult parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  ParseResult result;
  RawScenario raw = tokenize(text);
  std::vector<ParseIssue>& issues = result.issues;
  issues = raw.issues;
  Reader r(raw, issues);

  Scenario s;
  s.base_dir = base_dir;
  s.solver.snapshot_stride = 100;  // scenario default; every snapshot becomes a CSV

  if (RawEntry* e = r.find("scenario", "name")) {
    if (e->value.empty())
      r.issue(e->line, "[scenario] name: must not be empty");
    else
      s.name = e->value;
  }

  // domain
  {
    std::size_t dim = 1;
    r.count("domain", "dim", dim);
    if (dim != 1 && dim != 2) {
      auto* e = raw.sections.count("domain") && raw.sections["domain"].count("dim")
                    ? &raw.sections["domain"]["dim"]
                    : nullptr;
      r.issue(e ? e->line : 0, "[domain] dim: must be 1 or 2");
      dim = 1;
    }
    s.dim = static_cast<int>(dim);
    r.count("domain", "cells_x", s.cells_x);
    r.count("domain", "cells_y", s.cells_y);
    r.number("domain", "length_x", s.length_x);
    r.number("domain", "length_y", s.length_y);
    if (s.cells_x < 2) r.issue(0, "[domain] cells_x: need at least 2 cells");
    if (s.dim == 2 && s.cells_y < 2) r.issue(0, "[domain] cells_y: need at least 2 cells");
    if (!(s.length_x > 0.0)) r.issue(0, "[domain] length_x: must be positive");
    if (s.dim == 2 && !(s.length_y > 0.0)) r.issue(0, "[domain] length_y: must be positive");
  }

  // model
  {
    r.count("model", "n_species", s.n_species);
    if (s.n_species == 0 || s.n_species > 32) r.issue(0, "[model] n_species: must be in 1..32");

    RawEntry* a_inline = r.find("model", "a");
    RawEntry* a_table = r.find("model", "a_table");
    if (a_inline && a_table)
      r.issue(a_table->line, "[model] give either 'a' or 'a_table', not both");
    if (!a_inline && !a_table) r.issue(0, "[model] missing interaction matrix ('a' or 'a_table')");
    if (a_inline && s.n_species > 0) {
      const std::vector<std::string> rows = split_top_level(a_inline->value, ';');
      bool ok = rows.size() == s.n_species;
      Matrix a(s.n_species);
      for (std::size_t i = 0; ok && i < rows.size(); ++i) {
        const std::vector<std::string> entries = split_ws(rows[i]);
        if (entries.size() != s.n_species) {
          ok = false;
          break;
        }
        for (std::size_t j = 0; j < entries.size(); ++j)
          if (!Reader::parse_double(entries[j], a(i, j))) {
            ok = false;
            break;
          }
      }
      if (ok)
        s.a_constant = std::move(a);
      else
        r.issue(a_inline->line,
                "[model] a: expected " + std::to_string(s.n_species) + " rows of " +
                    std::to_string(s.n_species) + " numbers separated by ';'");
    }
    if (a_table) s.a_table = base_dir / a_table->value;

    RawEntry* m_inline = r.find("model", "m");
    RawEntry* m_table = r.find("model", "m_table");
    if (m_inline && m_table)
      r.issue(m_table->line, "[model] give either 'm' or 'm_table', not both");
    if (!m_inline && !m_table) r.issue(0, "[model] missing resource field ('m' or 'm_table')");
    if (m_inline && s.n_species > 0) {
      s.m_exprs = split_top_level(m_inline->value, ',');
      if (s.m_exprs.size() != s.n_species)
        r.issue(m_inline->line, "[model] m: expected " + std::to_string(s.n_species) +
                                    " comma-separated expressions, got " +
                                    std::to_string(s.m_exprs.size()));
      else
        parse_expressions_checked(s.m_exprs, m_inline->line, "[model] m", issues);
    }
    if (m_table) s.m_table = base_dir / m_table->value;

    r.number("model", "kappa_tol", s.kappa_tol);
    if (s.kappa_tol < 0.0) r.issue(0, "[model] kappa_tol: must be >= 0");
  }

  // initial state
  if (RawEntry* e = r.find("initial", "u0")) {
    if (e->value == "ideal_free") {
      s.init_kind = Scenario::InitKind::ideal_free;
    } else if (e->value.rfind("extinction:", 0) == 0) {
      s.init_kind = Scenario::InitKind::extinction;
      std::string error;
      if (!parse_extinction_value(e->value, s.extinct_set, s.eta, error))
        r.issue(e->line, "[initial] u0: " + error);
      for (std::size_t i : s.extinct_set)
        if (s.n_species > 0 && i >= s.n_species)
          r.issue(e->line, "[initial] u0: species index " + std::to_string(i + 1) +
                               " out of range 1.." + std::to_string(s.n_species));
    } else {
      s.init_kind = Scenario::InitKind::expressions;
      s.u0_exprs = split_top_level(e->value, ',');
      if (s.n_species > 0 && s.u0_exprs.size() != s.n_species)
        r.issue(e->line, "[initial] u0: expected " + std::to_string(s.n_species) +
                             " comma-separated expressions, got " +
                             std::to_string(s.u0_exprs.size()));
      else
        parse_expressions_checked(s.u0_exprs, e->line, "[initial] u0", issues);
    }
  } else {
    r.issue(0, "[initial] missing u0");
  }

  // solver
  {
    if (RawEntry* e = r.find("solver", "dt")) {
      if (e->value == "auto") {
        s.solver.dt.reset();
      } else {
        double v = 0.0;
        if (!Reader::parse_double(e->value, v) || !(v > 0.0))
          r.issue(e->line, "[solver] dt: must be a positive number or 'auto'");
        else
          s.solver.dt = v;
      }
    }
    r.number("solver", "t_end", s.solver.t_end);
    if (!(s.solver.t_end > 0.0)) r.issue(0, "[solver] t_end: must be positive");
    r.number("solver", "cfl_safety", s.solver.cfl_safety);
    if (!(s.solver.cfl_safety > 0.0) || s.solver.cfl_safety > 1.0)
      r.issue(0, "[solver] cfl_safety: must lie in (0, 1]");
    r.number("solver", "delta", s.solver.delta);
    if (s.solver.delta < 0.0) r.issue(0, "[solver] delta: must be >= 0");
    if (RawEntry* e = r.find("solver", "truncation_m")) {
      if (e->value == "inf" || e->value == "infinity") {
        s.solver.truncation_m = std::numeric_limits<double>::infinity();
      } else {
        double v = 0.0;
        if (!Reader::parse_double(e->value, v) || !(v > 0.0))
          r.issue(e->line, "[solver] truncation_m: must be a positive number or 'inf'");
        else
          s.solver.truncation_m = v;
      }
    }
    if (RawEntry* e = r.find("solver", "reaction_scheme")) {
      if (e->value == "explicit")
        s.solver.reaction_scheme = ReactionScheme::explicit_euler;
      else if (e->value == "patankar")
        s.solver.reaction_scheme = ReactionScheme::patankar;
      else
        r.issue(e->line, "[solver] reaction_scheme: 'explicit' or 'patankar'");
    }
    r.count("solver", "snapshot_stride", s.solver.snapshot_stride);
    if (s.solver.snapshot_stride == 0) r.issue(0, "[solver] snapshot_stride: must be >= 1");
  }

  // diagnostics
  {
    if (RawEntry* e = r.find("diagnostics", "checks")) {
      s.checks.clear();
      if (!trim(e->value).empty())
        for (const std::string& c : split_top_level(e->value, ',')) {
          if (!kKnownChecks.contains(c))
            r.issue(e->line, "[diagnostics] checks: unknown check '" + c + "'");
          else
            s.checks.push_back(c);
        }
    }
    r.number("diagnostics", "edi_tol_scale", s.edi_tol_scale);
    if (RawEntry* e = r.find("diagnostics", "decay_window")) {
      const std::vector<std::string> parts = split_ws(e->value);
      double lo = 0.0, hi = 0.0;
      if (parts.size() != 2 || !Reader::parse_double(parts[0], lo) ||
          !Reader::parse_double(parts[1], hi) || !(lo < hi))
        r.issue(e->line, "[diagnostics] decay_window: expected 'lo hi' with lo < hi");
      else
        s.decay_window = std::make_pair(lo, hi);
    }
    r.number("diagnostics", "decay_r2", s.decay_r2);
    r.number("diagnostics", "oracle_rtol", s.oracle_rtol);
    r.number("diagnostics", "oracle_tol", s.oracle_tol);
    if (RawEntry* e = r.find("diagnostics", "beckner_cap")) {
      double v = 0.0;
      if (!Reader::parse_double(e->value, v) || !(v > 0.0))
        r.issue(e->line, "[diagnostics] beckner_cap: must be a positive number");
      else
        s.beckner_cap = v;
    }
    r.number("diagnostics", "fixed_point_tol", s.fixed_point_tol);
  }

  if (RawEntry* e = r.find("output", "directory")) s.out_dir = base_dir / e->value;
  if (s.out_dir.empty()) s.out_dir = base_dir / "runs" / s.name;

  r.report_unknown();

  // Data-level validation: construct the problem once so its invariants run
  // before any run starts.
  if (issues.empty()) {
    try {
      build_scenario(s);
    } catch (const std::exception& err) {
      issues.push_back({0, std::string("validation: ") + err.what()});
    }
  }

  if (issues.empty()) result.scenario = std::move(s);
  std::sort(result.issues.begin(), result.issues.end(),
            [](const ParseIssue& a, const ParseIssue& b) { return a.line < b.line; });
  return result;
}

ParseResult parse_scenario_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    ParseResult r;
    r.issues.push_back({0, e.what()});
    return r;
  }
  return parse_scenario(text, path.parent_path().empty() ? "." : path.parent_path());
}

namespace {

CellField eval_expressions(const Grid& grid, const std::vector<std::string>& exprs) {
  CellField out(exprs.size(), grid.n_cells());
  for (std::size_t k = 0; k < exprs.size(); ++k) {
    const Expression e = Expression::parse(exprs[k]);
    for (std::size_t c = 0; c < grid.n_cells(); ++c)
      out(k, c) = e(grid.center_x(c), grid.dim() == 2 ? grid.center_y(c) : 0.0);
  }
  return out;
}

CellField field_from_table(const Grid& grid, const std::filesystem::path& path,
                           std::size_t n_comp, const char* what) {
  const CsvTable t = read_csv(path);
  const std::size_t skip = coord_columns(t);
  if (t.header.size() != skip + n_comp)
    throw std::runtime_error(std::string(what) + ": " + path.string() + ": expected " +
                             std::to_string(n_comp) + " value columns, got " +
                             std::to_string(t.header.size() - skip));
  if (t.rows.size() != grid.n_cells())
    throw std::runtime_error(std::string(what) + ": " + path.string() + ": expected " +
                             std::to_string(grid.n_cells()) + " rows (row-major cells), got " +
                             std::to_string(t.rows.size()));
  CellField out(n_comp, grid.n_cells());
  for (std::size_t c = 0; c < grid.n_cells(); ++c)
    for (std::size_t k = 0; k < n_comp; ++k) out(k, c) = t.rows[c][skip + k];
  return out;
}

std::vector<Matrix> matrices_from_table(const Grid& grid, const std::filesystem::path& path,
                                        std::size_t n) {
  const CsvTable t = read_csv(path);
  const std::size_t skip = coord_columns(t);
  if (t.header.size() != skip + n * n)
    throw std::runtime_error("a_table: " + path.string() + ": expected " + std::to_string(n * n) +
                             " value columns (a_11..a_" + std::to_string(n) + std::to_string(n) +
                             " row-major), got " + std::to_string(t.header.size() - skip));
  if (t.rows.size() != grid.n_cells())
    throw std::runtime_error("a_table: " + path.string() + ": expected " +
                             std::to_string(grid.n_cells()) + " rows, got " +
                             std::to_string(t.rows.size()));
  std::vector<Matrix> out;
  out.reserve(grid.n_cells());
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    Matrix a(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a(i, j) = t.rows[c][skip + i * n + j];
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

BuiltScenario build_scenario(const Scenario& s) {
  const Grid grid = s.dim == 2 ? Grid::rect(s.cells_x, s.cells_y, s.length_x, s.length_y)
                               : Grid::line(s.cells_x, s.length_x);

  CellField m = s.m_table ? field_from_table(grid, *s.m_table, s.n_species, "m_table")
                          : eval_expressions(grid, s.m_exprs);
  if (m.n_comp() != s.n_species)
    throw std::invalid_argument("scenario: m component count does not match n_species");

  std::optional<ProblemData> data;
  if (s.a_table)
    data.emplace(matrices_from_table(grid, *s.a_table, s.n_species), std::move(m), s.kappa_tol);
  else if (s.a_constant)
    data.emplace(*s.a_constant, std::move(m), s.kappa_tol);
  else
    throw std::invalid_argument("scenario: no interaction matrix given");

  State u0;
  switch (s.init_kind) {
    case Scenario::InitKind::ideal_free:
      u0 = ideal_free_distribution(*data);
      break;
    case Scenario::InitKind::extinction: {
      const ExtinctionPattern pattern = ExtinctionPattern::of(s.n_species, s.extinct_set);
      u0 = partial_extinction_state(*data, pattern);
      for (std::size_t i : pattern.extinct_indices())
        for (std::size_t c = 0; c < u0.n_cells(); ++c) u0(i, c) += s.eta;
      break;
    }
    case Scenario::InitKind::expressions: {
      if (s.u0_exprs.size() != s.n_species)
        throw std::invalid_argument("scenario: u0 expression count does not match n_species");
      u0 = eval_expressions(grid, s.u0_exprs);
      if (u0.min_value() < 0.0)
        throw std::invalid_argument("scenario: u0 takes a negative value (" +
                                    std::to_string(u0.min_value()) + ")");
      break;
    }
  }
  if (!u0.finite()) throw std::invalid_argument("scenario: u0 is not finite everywhere");

  return BuiltScenario{std::move(*data), grid, std::move(u0)};
}

namespace {

struct RunArtifacts {
  Trajectory trajectory;
  Am4Report am4;
  CriticalEntropy critical;
  double e_initial = 0.0;
  EdiCheck edi;
  DecayFit decay;
  GradAudit grad;
  std::optional<double> beckner;
  std::optional<double> oracle_error;
  std::vector<CheckOutcome> outcomes;
};

std::optional<double> oracle_relative_error(const BuiltScenario& bs, const Trajectory& tr,
                                            double rtol, std::string& why_not) {
  const ProblemData& data = bs.data;
  const State& u0 = tr.states.front();
  if (!data.constant_a()) {
    why_not = "A varies in space";
    return std::nullopt;
  }
  for (std::size_t k = 0; k < data.n_species(); ++k)
    for (std::size_t c = 1; c < data.n_cells(); ++c)
      if (data.m_at(k, c) != data.m_at(k, 0) || u0(k, c) != u0(k, 0)) {
        why_not = "m or u0 varies in space";
        return std::nullopt;
      }
  std::vector<double> y0(data.n_species());
  for (std::size_t k = 0; k < data.n_species(); ++k) y0[k] = u0(k, 0);
  const std::vector<double> ref = ode_oracle(data, y0, tr.times.back(), rtol);
  const State& uT = tr.states.back();
  double err = 0.0;
  for (std::size_t k = 0; k < data.n_species(); ++k) {
    const double scale = std::max(std::fabs(ref[k]), 1e-300);
    for (std::size_t c = 0; c < data.n_cells(); ++c)
      err = std::max(err, std::fabs(uT(k, c) - ref[k]) / scale);
  }
  return err;
}

RunArtifacts run_and_diagnose(const Scenario& s, const BuiltScenario& bs) {
  RunArtifacts art;
  art.am4 = check_am4(bs.data);
  art.critical = critical_entropy(bs.data, bs.grid);
  art.e_initial = entropy(bs.data, bs.grid, bs.u0);

  SolverConfig cfg = s.solver;
  cfg.audit_mass = has_check(s, "mass");
  art.trajectory = run(bs.data, bs.grid, bs.u0, cfg);
  const Trajectory& tr = art.trajectory;

  art.edi = verify_edi(tr, bs.grid, s.edi_tol_scale);
  art.decay = s.decay_window ? fit_decay_rate(tr, s.decay_window->first, s.decay_window->second)
                             : fit_decay_rate(tr);
  art.grad = grad_estimate_audit(tr);
  art.beckner = beckner_sup(tr);

  std::string oracle_why;
  if (has_check(s, "oracle"))
    art.oracle_error = oracle_relative_error(bs, tr, s.oracle_rtol, oracle_why);

  for (const std::string& name : s.checks) {
    CheckOutcome out;
    out.name = name;
    std::ostringstream d;
    if (name == "am4") {
      out.pass = art.am4.holds;
      d << "kappa_hat=" << format_g17(art.am4.kappa_hat) << " at I="
        << pattern_text(art.am4.worst_subset) << ", j=" << art.am4.worst_j + 1
        << ", cell=" << art.am4.worst_cell;
    } else if (name == "subcritical") {
      out.pass = art.e_initial < art.critical.e_star;
      d << "E(u0)=" << format_g17(art.e_initial) << " vs E*=" << format_g17(art.critical.e_star);
    } else if (name == "edi") {
      out.pass = art.edi.pass;
      if (art.edi.pass)
        d << "max |residual| = " << format_g17(art.edi.max_abs_residual);
      else
        d << "interval " << art.edi.first_fail << " residual "
          << format_g17(art.edi.residuals[art.edi.first_fail]) << " < -"
          << format_g17(art.edi.thresholds[art.edi.first_fail]) << " at t="
          << format_g17(tr.times[art.edi.first_fail]);
    } else if (name == "decay") {
      if (art.decay.floor_time) {
        out.pass = false;
        d << "entropy reached machine floor at t=" << format_g17(*art.decay.floor_time);
      } else if (!art.decay.gamma) {
        out.pass = false;
        d << "not enough samples in fit window";
      } else {
        out.pass = *art.decay.gamma > 0.0 && art.decay.r2 >= s.decay_r2;
        d << "gamma=" << format_g17(*art.decay.gamma) << ", R2=" << format_g17(art.decay.r2);
      }
    } else if (name == "positivity") {
      double min_v = 0.0;
      double min_t = tr.times.front();
      for (std::size_t k = 0; k < tr.states.size(); ++k) {
        const double v = tr.states[k].min_value();
        if (v < min_v) {
          min_v = v;
          min_t = tr.times[k];
        }
      }
      out.pass = min_v >= 0.0;
      d << "min density over run = " << format_g17(min_v);
      if (!out.pass) d << " at t=" << format_g17(min_t);
    } else if (name == "mass") {
      out.pass = tr.max_mass_residual <= 1e-12;
      d << "max relative identity residual = " << format_g17(tr.max_mass_residual);
    } else if (name == "beckner") {
      if (!art.beckner) {
        out.pass = true;
        d << "ratio undefined along the whole run (dissipation at floor)";
      } else {
        out.pass = std::isfinite(*art.beckner) &&
                   (!s.beckner_cap || *art.beckner <= *s.beckner_cap);
        d << "sup ratio = " << format_g17(*art.beckner);
        if (s.beckner_cap) d << " (cap " << format_g17(*s.beckner_cap) << ")";
      }
    } else if (name == "grad") {
      out.pass = art.grad.pass;
      d << "cumulative=" << format_g17(art.grad.cumulative)
        << ", slopes=" << format_g17(art.grad.slope_first_half) << "/"
        << format_g17(art.grad.slope_second_half);
    } else if (name == "oracle") {
      if (!art.oracle_error) {
        out.pass = false;
        d << "oracle unavailable: " << oracle_why;
      } else {
        out.pass = *art.oracle_error <= s.oracle_tol;
        d << "relative error vs oracle = " << format_g17(*art.oracle_error) << " (tol "
          << format_g17(s.oracle_tol) << ")";
      }
    } else if (name == "fixed_point") {
      double dev = 0.0;
      double dev_t = tr.times.front();
      const State& u0 = tr.states.front();
      for (std::size_t snap = 0; snap < tr.states.size(); ++snap) {
        const State& st = tr.states[snap];
        for (std::size_t k = 0; k < st.n_comp(); ++k)
          for (std::size_t c = 0; c < st.n_cells(); ++c) {
            const double v = std::fabs(st(k, c) - u0(k, c));
            if (v > dev) {
              dev = v;
              dev_t = tr.times[snap];
            }
          }
      }
      out.pass = dev <= s.fixed_point_tol;
      d << "max deviation from u0 = " << format_g17(dev);
      if (!out.pass) d << " at t=" << format_g17(dev_t);
    }
    out.detail = d.str();
    art.outcomes.push_back(std::move(out));
  }
  return art;
}

ordered_json diagnostics_json(const RunArtifacts& art) {
  ordered_json j;
  j["edi_residuals"] = art.edi.residuals;
  ordered_json fit;
  fit["gamma"] = art.decay.gamma ? ordered_json(*art.decay.gamma) : ordered_json(nullptr);
  fit["r2"] = art.decay.r2;
  fit["window"] = {art.decay.window_lo, art.decay.window_hi};
  if (art.decay.floor_time) fit["floor_time"] = *art.decay.floor_time;
  j["gamma_fit"] = fit;
  j["oracle_error"] =
      art.oracle_error ? ordered_json(*art.oracle_error) : ordered_json(nullptr);
  j["beckner_sup"] = art.beckner ? ordered_json(*art.beckner) : ordered_json(nullptr);
  j["grad_bound"] = {{"cumulative", art.grad.cumulative},
                     {"c_fit", art.grad.c_fit},
                     {"slope_first_half", art.grad.slope_first_half},
                     {"slope_second_half", art.grad.slope_second_half}};
  std::vector<std::string> flags;
  for (const CheckOutcome& c : art.outcomes)
    if (!c.pass) flags.push_back(c.name + ": " + c.detail);
  j["flags"] = flags;

  ordered_json model;
  model["kappa_hat"] = art.am4.kappa_hat;
  model["am4_holds"] = art.am4.holds;
  model["worst"] = {{"extinct", art.am4.worst_subset.extinct_indices()},
                    {"j", art.am4.worst_j + 1},
                    {"cell", art.am4.worst_cell}};
  model["e_star"] = art.critical.e_star;
  model["e_star_argmin"] = art.critical.argmin.extinct_indices();
  model["e_initial"] = art.e_initial;
  j["model"] = model;

  ordered_json checks = ordered_json::array();
  for (const CheckOutcome& c : art.outcomes)
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["checks"] = checks;
  return j;
}

std::string diagnostics_text(const Scenario& s, const RunArtifacts& art) {
  std::ostringstream out;
  out << "scenario " << s.name << "\n";
  out << "  kappa_hat = " << format_g17(art.am4.kappa_hat)
      << (art.am4.holds ? " (structural condition holds)" : " (structural condition VIOLATED)")
      << "\n";
  out << "  E*        = " << format_g17(art.critical.e_star) << " at I="
      << pattern_text(art.critical.argmin) << "\n";
  out << "  E(u0)     = " << format_g17(art.e_initial) << "\n";
  if (art.decay.gamma)
    out << "  gamma     = " << format_g17(*art.decay.gamma) << " (R2 " << format_g17(art.decay.r2)
        << ")\n";
  if (art.beckner) out << "  beckner   = " << format_g17(*art.beckner) << "\n";
  out << "  grad C    = " << format_g17(art.grad.c_fit) << "\n";
  out << "checks:\n";
  for (const CheckOutcome& c : art.outcomes)
    out << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail << "\n";
  return out.str();
}

ordered_json scenario_echo(const Scenario& s) {
  ordered_json j;
  j["name"] = s.name;
  j["dim"] = s.dim;
  j["cells"] = s.dim == 2 ? ordered_json::array({s.cells_x, s.cells_y})
                          : ordered_json::array({s.cells_x});
  j["lengths"] = s.dim == 2 ? ordered_json::array({s.length_x, s.length_y})
                            : ordered_json::array({s.length_x});
  j["n_species"] = s.n_species;
  ordered_json solver;
  solver["dt"] = s.solver.dt ? ordered_json(*s.solver.dt) : ordered_json("auto");
  solver["t_end"] = s.solver.t_end;
  solver["cfl_safety"] = s.solver.cfl_safety;
  solver["delta"] = s.solver.delta;
  solver["truncation_m"] = std::isfinite(s.solver.truncation_m)
                               ? ordered_json(s.solver.truncation_m)
                               : ordered_json("inf");
  solver["reaction_scheme"] =
      s.solver.reaction_scheme == ReactionScheme::patankar ? "patankar" : "explicit";
  solver["snapshot_stride"] = s.solver.snapshot_stride;
  j["solver"] = solver;
  j["checks"] = s.checks;
  return j;
}

}  // namespace

ExecResult execute(const Scenario& s, const std::filesystem::path& out_override) {
  ExecResult res;
  res.gamma = std::numeric_limits<double>::quiet_NaN();
  const std::filesystem::path run_dir = out_override.empty() ? s.out_dir : out_override;
  res.run_dir = run_dir;
  try {
    const BuiltScenario bs = build_scenario(s);
    const RunArtifacts art = run_and_diagnose(s, bs);

    res.e_end = art.trajectory.functionals.back().entropy;
    if (art.decay.gamma) res.gamma = *art.decay.gamma;
    res.edi_max_residual = art.edi.max_abs_residual;
    res.checks = art.outcomes;

    std::filesystem::create_directories(run_dir / "snapshots");
    std::map<std::string, std::string> files;  // relative path -> content hash

    const std::string functionals = functionals_csv(art.trajectory);
    write_text_file(run_dir / "functionals.csv", functionals);
    files["functionals.csv"] = hex64(fnv1a64(functionals));

    for (std::size_t k = 0; k < art.trajectory.states.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "snapshots/snap_%06zu.csv", k);
      const std::string csv = field_csv(bs.grid, art.trajectory.states[k]);
      write_text_file(run_dir / name, csv);
      files[name] = hex64(fnv1a64(csv));
    }

    const std::string diag = diagnostics_json(art).dump(2) + "\n";
    write_text_file(run_dir / "diagnostics.json", diag);
    files["diagnostics.json"] = hex64(fnv1a64(diag));

    const std::string text = diagnostics_text(s, art);
    write_text_file(run_dir / "diagnostics.txt", text);
    files["diagnostics.txt"] = hex64(fnv1a64(text));

    ordered_json manifest;
    manifest["name"] = s.name;
    manifest["version"] = kVersion;
    manifest["config_fingerprint"] = hex64(s.solver.fingerprint());
    manifest["data_fingerprint"] = hex64(bs.data.fingerprint());
    manifest["scenario"] = scenario_echo(s);
    ordered_json jfiles;
    for (const auto& [path, hash] : files) jfiles[path] = hash;
    manifest["files"] = jfiles;
    write_text_file(run_dir / "manifest.json", manifest.dump(2) + "\n");

    const bool all_pass = std::all_of(art.outcomes.begin(), art.outcomes.end(),
                                      [](const CheckOutcome& c) { return c.pass; });
    res.exit_code = all_pass ? 0 : 1;
  } catch (const std::exception& e) {
    res.exit_code = 2;
    res.error = e.what();
  }
  return res;
}

SweepResult sweep(const Scenario& s, const std::string& parameter,
                  std::span<const double> values, std::size_t jobs,
                  const std::filesystem::path& out_override) {
  SweepResult result;
  static const std::set<std::string> allowed = {"dt", "h", "delta", "M", "eta"};
  if (!allowed.contains(parameter)) {
    result.error = "sweep: parameter must be one of dt, h, delta, M, eta";
    return result;
  }
  if (values.empty()) {
    result.error = "sweep: no values given";
    return result;
  }
  if (parameter == "eta" && s.init_kind != Scenario::InitKind::extinction) {
    result.error = "sweep: eta sweep requires an extinction:{...} initial state";
    return result;
  }
  result.out_dir = out_override.empty() ? s.out_dir : out_override;
  try {
    std::filesystem::create_directories(result.out_dir);
  } catch (const std::exception& e) {
    result.error = e.what();
    return result;
  }

  result.rows.resize(values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= values.size()) return;
      const double v = values[i];
      Scenario child = s;
      child.name = s.name + "_" + parameter + "_" + std::to_string(i);
      SweepRow row;
      row.value = v;
      std::string invalid;
      if (parameter == "dt") {
        if (v > 0.0)
          child.solver.dt = v;
        else
          invalid = "dt must be positive";
      } else if (parameter == "delta") {
        if (v >= 0.0)
          child.solver.delta = v;
        else
          invalid = "delta must be >= 0";
      } else if (parameter == "M") {
        if (v > 0.0)
          child.solver.truncation_m = v;
        else
          invalid = "M must be positive";
      } else if (parameter == "eta") {
        if (v >= 0.0)
          child.eta = v;
        else
          invalid = "eta must be >= 0";
      } else if (parameter == "h") {
        if (v > 0.0) {
          child.cells_x = std::max<std::size_t>(2, static_cast<std::size_t>(
                                                       std::llround(s.length_x / v)));
          if (s.dim == 2)
            child.cells_y = std::max<std::size_t>(2, static_cast<std::size_t>(
                                                         std::llround(s.length_y / v)));
        } else {
          invalid = "h must be positive";
        }
      }
      if (!invalid.empty()) {
        row.status = "error: " + invalid;
        result.rows[i] = std::move(row);
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      const ExecResult r =
          execute(child, result.out_dir / ("sweep_" + parameter + "_" + std::to_string(i)));
      row.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start).count();
      row.e_end = r.e_end;
      row.gamma = r.gamma;
      row.edi_max_residual = r.edi_max_residual;
      if (r.exit_code == 0)
        row.status = "ok";
      else if (r.exit_code == 1)
        row.status = "check_failed";
      else {
        std::string msg = r.error;
        std::replace(msg.begin(), msg.end(), ',', ';');
        row.status = "error: " + msg;
      }
      result.rows[i] = std::move(row);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, values.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  std::string csv = "value,E_end,gamma,edi_max_residual,wall_seconds,status\n";
  for (const SweepRow& row : result.rows) {
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", row.wall_seconds);
    csv += format_g17(row.value) + "," + format_g17(row.e_end) + "," + format_g17(row.gamma) +
           "," + format_g17(row.edi_max_residual) + "," + wall + "," + row.status + "\n";
  }
  try {
    write_text_file(result.out_dir / "sweep.csv", csv);
  } catch (const std::exception& e) {
    result.error = e.what();
    return result;
  }

  const bool all_ok = std::all_of(result.rows.begin(), result.rows.end(),
                                  [](const SweepRow& r) { return r.status == "ok"; });
  result.exit_code = all_ok ? 0 : 1;
  return result;
}

namespace {

// Conservative restriction: every coarse cell takes the mean of the fine
// cells it contains. Requires nested cell counts.
State restrict_state(const Grid& coarse, const Grid& fine, const State& uf) {
  if (fine.nx() % coarse.nx() != 0 || fine.ny() % coarse.ny() != 0)
    throw std::invalid_argument("refinement_study: grids do not nest");
  const std::size_t rx = fine.nx() / coarse.nx();
  const std::size_t ry = fine.ny() / coarse.ny();
  State out(uf.n_comp(), coarse.n_cells());
  const double weight = 1.0 / static_cast<double>(rx * ry);
  for (std::size_t k = 0; k < uf.n_comp(); ++k)
    for (std::size_t iy = 0; iy < coarse.ny(); ++iy)
      for (std::size_t ix = 0; ix < coarse.nx(); ++ix) {
        double sum = 0.0;
        for (std::size_t jy = 0; jy < ry; ++jy)
          for (std::size_t jx = 0; jx < rx; ++jx)
            sum += uf(k, fine.cell(ix * rx + jx, iy * ry + jy));
        out(k, coarse.cell(ix, iy)) = sum * weight;
      }
  return out;
}

}  // namespace

RefinementTable refinement_study(const Scenario& s, const std::string& parameter,
                                 std::span<const double> values) {
  if (parameter != "h") {
    const BuiltScenario bs = build_scenario(s);
    return refinement_study(bs.data, bs.grid, bs.u0, s.solver, parameter, values);
  }
  if (values.size() < 3)
    throw std::invalid_argument("refinement_study: need at least three levels");

  RefinementTable table;
  table.parameter = parameter;
  table.values.assign(values.begin(), values.end());

  std::vector<Grid> grids;
  std::vector<State> finals;
  for (double h : values) {
    if (!(h > 0.0)) throw std::invalid_argument("refinement_study: h must be positive");
    Scenario child = s;
    child.cells_x =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(s.length_x / h)));
    if (s.dim == 2)
      child.cells_y =
          std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(s.length_y / h)));
    const BuiltScenario bs = build_scenario(child);
    grids.push_back(bs.grid);
    finals.push_back(run(bs.data, bs.grid, bs.u0, child.solver).states.back());
  }

  for (std::size_t k = 0; k + 1 < finals.size(); ++k) {
    // compare on the coarser of the two meshes
    const bool first_coarser = grids[k].n_cells() <= grids[k + 1].n_cells();
    const Grid& cg = first_coarser ? grids[k] : grids[k + 1];
    const State& coarse_state = first_coarser ? finals[k] : finals[k + 1];
    const State fine_state = restrict_state(cg, first_coarser ? grids[k + 1] : grids[k],
                                            first_coarser ? finals[k + 1] : finals[k]);
    table.diffs.push_back(state_l2_diff(cg, coarse_state, fine_state));
  }
  for (std::size_t k = 0; k + 1 < table.diffs.size(); ++k) {
    const double d0 = table.diffs[k];
    const double d1 = table.diffs[k + 1];
    const double r = std::fabs(std::log(values[k] / values[k + 1]));
    if (d0 > 0.0 && d1 > 0.0 && r > 0.0)
      table.orders.push_back(std::log(d0 / d1) / r);
    else
      table.orders.push_back(std::numeric_limits<double>::quiet_NaN());
    if (d1 > d0 * (1.0 + 1e-12)) table.monotone = false;
  }
  return table;
}

std::string model_report_text(const Scenario& s) {
  const BuiltScenario bs = build_scenario(s);
  const Am4Report am4 = check_am4(bs.data);
  const CriticalEntropy crit = critical_entropy(bs.data, bs.grid);
  const double e0 = entropy(bs.data, bs.grid, bs.u0);
  const CellField u_inf = ideal_free_distribution(bs.data);

  std::ostringstream out;
  out << "scenario:       " << s.name << "\n";
  out << "domain:         dim " << s.dim << ", cells " << s.cells_x;
  if (s.dim == 2) out << " x " << s.cells_y;
  out << "\n";
  out << "species:        " << s.n_species << "\n";
  out << "ellipticity:    lambda in [" << format_g17(bs.data.lambda_min()) << ", "
      << format_g17(bs.data.lambda_max()) << "]\n";
  out << "kappa_hat:      " << format_g17(am4.kappa_hat) << " at I="
      << pattern_text(am4.worst_subset) << ", j=" << am4.worst_j + 1 << ", cell="
      << am4.worst_cell << (am4.holds ? " (holds)" : " (VIOLATED)") << "\n";
  out << "E*:             " << format_g17(crit.e_star) << " at I=" << pattern_text(crit.argmin)
      << (crit.am4_flagged ? " [flagged: structural condition violated]" : "") << "\n";
  out << "E(u0):          " << format_g17(e0) << (e0 < crit.e_star ? " (subcritical)" : "")
      << "\n";
  out << "u_inf range:    [" << format_g17(u_inf.min_value()) << ", "
      << format_g17(u_inf.max_value()) << "]\n";
  return out.str();
}

}  // namespace ifd
