#include "ifd/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ifd {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string field_csv(const Grid& grid, const CellField& field) {
  if (field.n_cells() != grid.n_cells())
    throw std::invalid_argument("field_csv: field/grid cell count mismatch");
  std::string out;
  out += grid.dim() == 2 ? "x,y" : "x";
  for (std::size_t k = 0; k < field.n_comp(); ++k) out += ",species_" + std::to_string(k + 1);
  out += '\n';
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    out += format_g17(grid.center_x(c));
    if (grid.dim() == 2) {
      out += ',';
      out += format_g17(grid.center_y(c));
    }
    for (std::size_t k = 0; k < field.n_comp(); ++k) {
      out += ',';
      out += format_g17(field(k, c));
    }
    out += '\n';
  }
  return out;
}

std::string functionals_csv(const Trajectory& tr) {
  std::string out = "t,E,D";
  const std::size_t n = tr.functionals.empty() ? 0 : tr.functionals[0].masses.size();
  for (std::size_t k = 0; k < n; ++k) out += ",mass_" + std::to_string(k + 1);
  for (std::size_t k = 0; k < n; ++k) out += ",H_" + std::to_string(k + 1);
  out += ",fitness_l2,grad_u_l2\n";
  for (std::size_t s = 0; s < tr.times.size(); ++s) {
    const FunctionalValues& v = tr.functionals[s];
    out += format_g17(tr.times[s]);
    out += ',';
    out += format_g17(v.entropy);
    out += ',';
    out += format_g17(v.dissipation);
    for (double m : v.masses) {
      out += ',';
      out += format_g17(m);
    }
    for (double h : v.boltzmann) {
      out += ',';
      out += format_g17(h);
    }
    out += ',';
    out += format_g17(v.fitness_l2);
    out += ',';
    out += format_g17(v.grad_u_l2);
    out += '\n';
  }
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t consumed = 0;
        const double v = std::stod(cell, &consumed);
        if (consumed != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("read_csv: " + path.string() + ":" + std::to_string(lineno) +
                                 ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != table.header.size())
      throw std::runtime_error("read_csv: " + path.string() + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(table.header.size()) + " columns");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ifd
