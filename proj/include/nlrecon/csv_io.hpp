#pragma once

#include "nlrecon/core.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nlrecon::csv {

/// Header `u_1,...,u_{n_u},b_1,...,b_{n_b}`.
std::vector<std::string> series_header(int n_u, int n_b);

/// Rows of a table whose header follows the series convention; `n_u` is
/// recovered from the header.
struct SeriesTable {
    RowMatrix values;
    int n_u = 0;
};

/// Values are written with 17 significant digits so they read back bit-exact.
void write_series(std::ostream& os, const RowMatrix& values, int n_u);
void write_series(const std::filesystem::path& path, const RowMatrix& values, int n_u);
SeriesTable read_series(std::istream& is, const std::string& source = "<stream>");
SeriesTable read_series(const std::filesystem::path& path);

void write_cloud(const std::filesystem::path& path, const SampleCloud& cloud);
SampleCloud read_cloud(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace nlrecon::csv
