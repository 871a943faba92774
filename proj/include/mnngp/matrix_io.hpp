#pragma once

// Headerless CSV of decimal reals, row-major, 17 significant digits.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mnngp/kernel.hpp"

namespace mnngp {

void write_matrix_csv(const Matrix& M, std::ostream& out);
void save_matrix_csv(const Matrix& M, const std::filesystem::path& path);

/// Throws FormatError (with source:line) on ragged rows or unparsable fields.
Matrix read_matrix_csv(std::istream& in, const std::string& source = "<stream>");
Matrix load_matrix_csv(const std::filesystem::path& path);

/// %.17g
std::string format_real17(double v);

}  // namespace mnngp
