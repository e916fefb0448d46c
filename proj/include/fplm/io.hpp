#pragma once

// Files: CSV tables, curve datasets (generic and tecator) and output
// directories.

#include "fplm/fda.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fplm::io {

/// Thrown for malformed input files; the message names the file and line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header plus string cells. Quoted cells follow RFC 4180.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws if absent
  bool has_column(std::string_view name) const;
  std::vector<double> numeric(std::string_view name) const;
  void add_row(std::vector<std::string> cells);
};

Table read_csv(std::istream& in, const std::string& source = "<stream>");
Table read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const Table& table);
void write_csv(const std::filesystem::path& path, const Table& table);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// Curves, their first derivative and the response; optionally the true
/// regression function (simulated data).
struct Dataset {
  fda::FunctionalSample X;
  fda::FunctionalSample Z;
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXd> truth;
  std::string curve_prefix = "x";
  std::string response = "y";

  std::size_t n() const { return X.n(); }
  Dataset rows(std::size_t first, std::size_t count) const;
};

/// Z as the first derivative of the default cubic B-spline fit.
Dataset make_dataset(fda::FunctionalSample X, Eigen::VectorXd y, std::optional<Eigen::VectorXd> truth = {},
                     std::string curve_prefix = "x", std::string response = "y");

/// Canonical CSV: optional "#grid,lo,hi" line, then columns <prefix>0..,
/// the response and optionally "g". spectrum_*/fat columns are read as
/// tecator records. Grid defaults to 100 (or m) points on [0, 1].
Dataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

inline constexpr std::size_t kTecatorChannels = 100;
inline constexpr std::size_t kTecatorRecords = 215;
inline constexpr double kTecatorWavelengthLo = 850.0;
inline constexpr double kTecatorWavelengthHi = 1050.0;

/// Whitespace archive layout: free text, then 25 lines of 5 numbers per
/// record (100 absorbances, 22 principal components, moisture, fat,
/// protein). The first 215 records are kept.
Dataset read_tecator_archive(std::istream& in, const std::string& source = "<stream>");

/// Either layout; a comma on the first data line selects the CSV reader.
Dataset read_dataset(const std::filesystem::path& path);

/// Relative paths missing from the working directory are looked up in
/// $FPLM_DATA_DIR.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

}  // namespace fplm::io
