#include "hgmae/textio.hpp"

#include "hgmae/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hgmae::textio {

namespace fs = std::filesystem;

namespace {

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open file");
  return in;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError(file.string() + ": cannot open file for writing");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Eigen::MatrixXd read_csv_matrix(const fs::path& file) {
  auto in = open_in(file);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = trim(line);
    if (body.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = body.find(',', start);
      std::string_view field = trim(body.substr(start, comma == std::string_view::npos
                                                           ? std::string_view::npos
                                                           : comma - start));
      double v = 0.0;
      auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw DataError(where(file, line_no) + ": malformed number '" + std::string(field) + "'");
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(where(file, line_no) + ": expected " + std::to_string(rows.front().size()) +
                      " columns, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, c);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void write_csv_matrix(const fs::path& file, const Eigen::MatrixXd& m) {
  auto out = open_out(file);
  std::string line;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
}

std::vector<std::pair<long, long>> read_int_pairs(const fs::path& file) {
  auto in = open_in(file);
  std::vector<std::pair<long, long>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    long a = 0, b = 0;
    std::string rest;
    if (!(ss >> a >> b) || (ss >> rest)) {
      throw DataError(where(file, line_no) + ": expected two integer columns");
    }
    rows.emplace_back(a, b);
  }
  return rows;
}

void write_int_pairs(const fs::path& file, const std::vector<std::pair<long, long>>& rows) {
  auto out = open_out(file);
  for (const auto& [a, b] : rows) out << a << '\t' << b << '\n';
}

std::string read_text(const fs::path& file) {
  auto in = open_in(file);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  auto out = open_out(file);
  out << text;
}

}  // namespace hgmae::textio
