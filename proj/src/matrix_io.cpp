#include "mnngp/matrix_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "mnngp/errors.hpp"

namespace mnngp {

std::string format_real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_matrix_csv(const Matrix& M, std::ostream& out) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_real17(M(i, j));
    }
    out << '\n';
  }
}

void save_matrix_csv(const Matrix& M, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_matrix_csv(M, out);
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

Matrix read_matrix_csv(std::istream& in, const std::string& source) {
  std::vector<double> data;
  long cols = -1;
  long rows = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    long count = 0;
    while (std::getline(row, field, ',')) {
      const char* begin = field.c_str();
      while (*begin == ' ') ++begin;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      while (end && *end == ' ') ++end;
      if (end == begin || *end != '\0') {
        throw FormatError(source + ":" + std::to_string(lineno) + ": cannot parse '" + field + "'");
      }
      data.push_back(v);
      ++count;
    }
    if (cols < 0) cols = count;
    if (count != cols) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(cols) + " fields, got " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw FormatError(source + ": empty matrix file");
  Matrix M(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) M(i, j) = data[i * cols + j];
  }
  return M;
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_matrix_csv(in, path.string());
}

}  // namespace mnngp
