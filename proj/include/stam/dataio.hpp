// CSV and timestamp plumbing for the dataset interchange formats:
//   values.csv     header = node ids, one row per timestep, empty cell = missing
//   mask.csv       0/1 matrix, same header/shape as values.csv
//   dist.csv       headerless N x N distance matrix
//   meta.json      {"interval_minutes": int, "start_timestamp": iso8601}
// Doubles are written with shortest-round-trip formatting, so echoing a parsed
// value reproduces its bytes.
#pragma once

#include "stam/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stam {

std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;  // nullopt = empty cell
    Index n_rows() const { return Index(rows.size()); }
    Index n_cols() const { return Index(header.size()); }
};

// First line is always the header. Throws std::invalid_argument on ragged
// rows or non-numeric non-empty cells.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Tensor& values_tn, const Tensor* mask_tn);  // mask 0 -> empty cell

// Headerless numeric matrix (dist.csv, exported adjacencies).
Tensor read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Tensor& m);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// ---- calendar helpers (UTC, no timezone handling) ----
int64_t days_from_civil(int64_t y, int m, int d);
void civil_from_days(int64_t days, int64_t& y, int& m, int& d);
// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional trailing 'Z'.
int64_t parse_iso8601(const std::string& s);
std::string format_iso8601(int64_t epoch_seconds);
// Monday = 1 .. Sunday = 7.
int weekday_mon1(int64_t epoch_seconds);
int64_t seconds_of_day(int64_t epoch_seconds);

}  // namespace stam
