#include "nlrecon/csv_io.hpp"

#include "nlrecon/errors.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace nlrecon::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, const std::string& source, int line_no) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (!s.empty() && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": cannot parse '" + s + "' as a number");
    }
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string> series_header(int n_u, int n_b) {
    std::vector<std::string> h;
    for (int k = 1; k <= n_u; ++k) h.push_back("u_" + std::to_string(k));
    for (int k = 1; k <= n_b; ++k) h.push_back("b_" + std::to_string(k));
    return h;
}

void write_series(std::ostream& os, const RowMatrix& values, int n_u) {
    const auto header = series_header(n_u, static_cast<int>(values.cols()) - n_u);
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << format_double(values(i, j));
        os << '\n';
    }
}

void write_series(const std::filesystem::path& path, const RowMatrix& values, int n_u) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    write_series(os, values, n_u);
}

SeriesTable read_series(std::istream& is, const std::string& source) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError(source + ": empty file");
    const auto header = split_line(line);
    int n_u = 0;
    while (n_u < static_cast<int>(header.size()) && header[static_cast<std::size_t>(n_u)] == "u_" + std::to_string(n_u + 1)) {
        ++n_u;
    }
    const int n_b = static_cast<int>(header.size()) - n_u;
    if (n_u < 1 || n_b < 1 || header != series_header(n_u, n_b)) {
        throw ConfigError(source + ": header must be u_1,...,u_{n_u},b_1,...,b_{n_b}");
    }
    const int n = n_u + n_b;

    std::vector<double> flat;
    int rows = 0;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_line(line);
        if (static_cast<int>(fields.size()) != n) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(n) + " fields");
        }
        for (const auto& f : fields) flat.push_back(parse_double(f, source, line_no));
        ++rows;
    }
    SeriesTable out;
    out.n_u = n_u;
    out.values = Eigen::Map<RowMatrix>(flat.data(), rows, n);
    return out;
}

SeriesTable read_series(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    return read_series(is, path.string());
}

void write_cloud(const std::filesystem::path& path, const SampleCloud& cloud) {
    write_series(path, cloud.samples(), cloud.n_u());
}

SampleCloud read_cloud(const std::filesystem::path& path) {
    auto table = read_series(path);
    return SampleCloud(std::move(table.values), table.n_u);
}

}  // namespace nlrecon::csv
