#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "spamm/hier_matrix.hpp"

namespace spamm {

// Coordinate format, real (or integer), general or symmetric. Square only.
// Symmetric storage is expanded, duplicate entries are summed.
HierMatrix read_matrix_market(std::istream& in, Geometry geometry);
HierMatrix read_matrix_market(const std::filesystem::path& path, Geometry geometry);

// Writes "%%MatrixMarket matrix coordinate real general" with 17 significant digits.
void write_matrix_market(std::ostream& out, const HierMatrix& matrix);
void write_matrix_market(const std::filesystem::path& path, const HierMatrix& matrix);

}  // namespace spamm
