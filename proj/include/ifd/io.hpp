#ifndef IFD_IO_HPP_
#define IFD_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ifd/grid.hpp"
#include "ifd/solver.hpp"

namespace ifd {

inline constexpr const char* kVersion = "0.1.0";

// 17 significant digits: doubles round-trip losslessly and output bytes are
// reproducible across runs.
std::string format_g17(double v);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

// Field snapshot: header `x[,y],species_1..species_N`, row-major cell order.
std::string field_csv(const Grid& grid, const CellField& field);

// One row per snapshot: `t,E,D,mass_1..mass_N,H_1..H_N,fitness_l2,grad_u_l2`.
std::string functionals_csv(const Trajectory& tr);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Strict numeric CSV with a header line; used for per-cell coefficient tables.
CsvTable read_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ifd

#endif  // IFD_IO_HPP_
