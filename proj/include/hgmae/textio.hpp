#pragma once

// Plain-text matrix and table IO shared by the dataset loader, the CLI and
// the run-directory writers. Every reader reports the file and 1-based line of
// the first malformed record.

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hgmae::textio {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Comma-separated reals, one row per line. All rows must have equal width.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& file);
void write_csv_matrix(const std::filesystem::path& file, const Eigen::MatrixXd& m);

/// Tab- or whitespace-separated integer pairs, one per line.
std::vector<std::pair<long, long>> read_int_pairs(const std::filesystem::path& file);
void write_int_pairs(const std::filesystem::path& file,
                     const std::vector<std::pair<long, long>>& rows);

std::string read_text(const std::filesystem::path& file);
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace hgmae::textio
