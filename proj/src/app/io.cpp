#include "fplm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fplm::io {

namespace {

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

std::vector<std::string> split_record(const std::string& line, const std::string& source, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw ParseError(where(source, lineno) + "unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::optional<double> try_number(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return v;
}

fda::FunctionalSample first_derivative(const fda::FunctionalSample& X) {
  return fda::derivative(fda::fit_bsplines(X, 4, fda::default_interior_knots(X.m())), 1);
}

void check_tecator_fat(const Eigen::VectorXd& fat, const std::string& source) {
  for (Eigen::Index i = 0; i < fat.size(); ++i)
    if (!(fat(i) >= 0.0 && fat(i) <= 100.0))
      throw ParseError(source + ": record " + std::to_string(i + 1) + ": fat content " + format_double(fat(i)) +
                       " outside [0, 100]");
}

Table parse_table(std::istream& in, const std::string& source, std::size_t lineno) {
  Table t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    const std::size_t first = lineno;
    std::string more;
    while (std::count(line.begin(), line.end(), '"') % 2 == 1 && std::getline(in, more)) {
      ++lineno;
      line += '\n';
      line += more;
    }
    auto cells = split_record(line, source, first);
    if (!header) {
      t.columns = std::move(cells);
      header = true;
      continue;
    }
    if (cells.size() != t.columns.size())
      throw ParseError(where(source, first) + "expected " + std::to_string(t.columns.size()) + " fields, got " +
                       std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!header) throw ParseError(source + ": empty file");
  return t;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("table has no column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

bool Table::has_column(std::string_view name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> Table::numeric(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(parse_double(r[c]));
  return out;
}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns.size()) throw std::invalid_argument("table row has the wrong number of cells");
  rows.push_back(std::move(cells));
}

Table read_csv(std::istream& in, const std::string& source) { return parse_table(in, source, 0); }

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in, path.string());
}

void write_csv(std::ostream& out, const Table& table) {
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << quote(cells[i]);
    out << '\n';
  };
  emit(table.columns);
  for (const auto& r : table.rows) emit(r);
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out, table);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan" || text == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  const auto v = try_number(text);
  if (!v) throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return *v;
}

Dataset Dataset::rows(std::size_t first, std::size_t count) const {
  if (first + count > n()) throw std::out_of_range("dataset row range out of bounds");
  std::vector<std::size_t> idx(count);
  for (std::size_t k = 0; k < count; ++k) idx[k] = first + k;
  Dataset out;
  out.X = X.rows(idx);
  out.Z = Z.rows(idx);
  out.y = y.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  if (truth) out.truth = truth->segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
  out.curve_prefix = curve_prefix;
  out.response = response;
  return out;
}

Dataset make_dataset(fda::FunctionalSample X, Eigen::VectorXd y, std::optional<Eigen::VectorXd> truth,
                     std::string curve_prefix, std::string response) {
  if (static_cast<std::size_t>(y.size()) != X.n()) throw std::invalid_argument("dataset: response length differs from curve count");
  if (truth && truth->size() != y.size()) throw std::invalid_argument("dataset: truth length differs");
  Dataset d;
  d.Z = first_derivative(X);
  d.X = std::move(X);
  d.y = std::move(y);
  d.truth = std::move(truth);
  d.curve_prefix = std::move(curve_prefix);
  d.response = std::move(response);
  return d;
}

Dataset read_dataset_csv(std::istream& in, const std::string& source) {
  std::optional<std::pair<double, double>> range;
  std::string line;
  std::size_t offset = 0;
  for (std::streampos pos = in.tellg(); std::getline(in, line); pos = in.tellg()) {
    if (is_blank(line)) {
      ++offset;
      continue;
    }
    if (line.rfind("#grid", 0) != 0) {
      in.clear();
      in.seekg(pos);
      break;
    }
    ++offset;
    const auto cells = split_record(line, source, offset);
    const auto lo = cells.size() == 3 ? try_number(cells[1]) : std::nullopt;
    const auto hi = cells.size() == 3 ? try_number(cells[2]) : std::nullopt;
    if (!lo || !hi || !(*hi > *lo)) throw ParseError(where(source, offset) + "grid line must be #grid,lo,hi with lo < hi");
    range = std::pair{*lo, *hi};
    break;
  }
  const Table t = parse_table(in, source, offset);
  const std::size_t header_line = offset + 1;

  const bool tecator = t.has_column("fat") && t.has_column("spectrum_0");
  const std::string prefix = tecator ? "spectrum_" : "x";
  const std::string response = tecator ? "fat" : "y";
  std::vector<std::size_t> curve_cols;
  for (std::size_t j = 0;; ++j) {
    const auto name = prefix + std::to_string(j);
    if (!t.has_column(name)) break;
    curve_cols.push_back(t.column(name));
  }
  if (curve_cols.empty()) throw ParseError(source + ": no curve columns (" + prefix + "0, " + prefix + "1, ...)");
  if (!t.has_column(response)) throw ParseError(source + ": missing response column '" + response + "'");
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const auto& name = t.columns[c];
    if (name == response || name == "g" || std::find(curve_cols.begin(), curve_cols.end(), c) != curve_cols.end())
      continue;
    if (name.rfind(prefix, 0) == 0)
      throw ParseError(source + ": curve columns are not numbered consecutively (found '" + name + "')");
  }
  const std::size_t m = curve_cols.size();
  if (tecator && m != kTecatorChannels)
    throw ParseError(source + ": expected " + std::to_string(kTecatorChannels) + " spectrum columns, got " +
                     std::to_string(m));
  const std::size_t n = t.rows.size();
  if (n < 2) throw ParseError(source + ": need at least two records");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::optional<Eigen::VectorXd> truth;
  if (t.has_column("g")) truth = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  const std::size_t yc = t.column(response);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = t.rows[i];
    auto cell = [&](std::size_t c) {
      const auto v = try_number(r[c]);
      if (!v || !std::isfinite(*v))
        throw ParseError(where(source, header_line + i + 1) + "record " + std::to_string(i + 1) + ": column '" +
                         t.columns[c] + "' is not a finite number");
      return *v;
    };
    for (std::size_t j = 0; j < m; ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cell(curve_cols[j]);
    y(static_cast<Eigen::Index>(i)) = cell(yc);
    if (truth) (*truth)(static_cast<Eigen::Index>(i)) = cell(t.column("g"));
  }
  if (tecator) check_tecator_fat(y, source);
  const auto [lo, hi] = range.value_or(std::pair{0.0, 1.0});
  return make_dataset({fda::Grid::uniform(lo, hi, m), std::move(values)}, std::move(y), std::move(truth), prefix,
                      response);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const auto& g = data.X.grid();
  out << "#grid," << format_double(g.support_lo()) << ',' << format_double(g.support_hi()) << '\n';
  Table t;
  for (std::size_t j = 0; j < data.X.m(); ++j) t.columns.push_back(data.curve_prefix + std::to_string(j));
  t.columns.push_back(data.response);
  if (data.truth) t.columns.push_back("g");
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::vector<std::string> row;
    row.reserve(t.columns.size());
    for (std::size_t j = 0; j < data.X.m(); ++j) row.push_back(format_double(data.X.values()(ii, static_cast<Eigen::Index>(j))));
    row.push_back(format_double(data.y(ii)));
    if (data.truth) row.push_back(format_double((*data.truth)(ii)));
    t.rows.push_back(std::move(row));
  }
  write_csv(out, t);
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset_csv(out, data);
}

Dataset read_tecator_archive(std::istream& in, const std::string& source) {
  constexpr std::size_t kLines = 25, kPerLine = 5, kValues = kLines * kPerLine;
  std::vector<std::vector<double>> records;
  std::vector<double> current;
  std::string line;
  std::size_t lineno = 0;
  std::size_t record_start = 0;
  bool data = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    std::istringstream ss(line);
    std::vector<double> nums;
    std::string tok;
    bool numeric = true;
    while (ss >> tok) {
      const auto v = try_number(tok);
      if (!v) {
        numeric = false;
        break;
      }
      nums.push_back(*v);
    }
    if (!numeric) {
      if (!data) continue;  // free-text preamble
      throw ParseError(where(source, lineno) + "record " + std::to_string(records.size() + 1) +
                       ": non-numeric data line");
    }
    data = true;
    if (current.empty()) record_start = lineno;
    if (nums.size() != kPerLine)
      throw ParseError(where(source, lineno) + "record " + std::to_string(records.size() + 1) + ": expected " +
                       std::to_string(kPerLine) + " values per line, got " + std::to_string(nums.size()));
    current.insert(current.end(), nums.begin(), nums.end());
    if (current.size() == kValues) {
      records.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty())
    throw ParseError(where(source, record_start) + "record " + std::to_string(records.size() + 1) + ": truncated, " +
                     std::to_string(current.size()) + " of " + std::to_string(kValues) + " values");
  if (records.size() < kTecatorRecords)
    throw ParseError(source + ": expected at least " + std::to_string(kTecatorRecords) + " records, got " +
                     std::to_string(records.size()));
  const auto n = static_cast<Eigen::Index>(kTecatorRecords);
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(kTecatorChannels));
  Eigen::VectorXd fat(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < kTecatorChannels; ++j) values(i, static_cast<Eigen::Index>(j)) = r[j];
    fat(i) = r[kTecatorChannels + 22 + 1];
  }
  check_tecator_fat(fat, source);
  return make_dataset({fda::Grid::uniform(0.0, 1.0, kTecatorChannels), std::move(values)}, std::move(fat), {},
                      "spectrum_", "fat");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::streampos start = in.tellg();
  while (std::getline(in, line))
    if (!is_blank(line)) break;
  in.clear();
  in.seekg(start);
  if (line.find(',') != std::string::npos) return read_dataset_csv(in, path.string());
  return read_tecator_archive(in, path.string());
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* dir = std::getenv("FPLM_DATA_DIR"); dir && *dir) {
    const auto candidate = std::filesystem::path(dir) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

}  // namespace fplm::io
