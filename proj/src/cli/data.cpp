#include "cate/cli.hpp"

#include "cate/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>

namespace cate::cli {

namespace {

std::string
trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string>
split_fields(const std::string& line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos)
      break;
    start = comma + 1;
  }
  return out;
}

std::string
unquote(std::string s)
{
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  return s;
}

} // namespace

Index
CsvTable::column(std::string_view name) const
{
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name)
      return static_cast<Index>(j);
  return -1;
}

CsvTable
read_numeric_csv(std::istream& in)
{
  CsvTable table;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0)
      line.erase(0, 3);
    if (trim(line).empty())
      continue;
    if (table.header.empty()) {
      for (auto& f : split_fields(line))
        table.header.push_back(unquote(f));
      for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (table.header[j].empty())
          throw DataError("line " + std::to_string(line_no) + ": empty column name at position " +
                          std::to_string(j + 1));
        if (std::count(table.header.begin(), table.header.end(), table.header[j]) > 1)
          throw DataError("line " + std::to_string(line_no) + ": duplicate column '" + table.header[j] + "'");
      }
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size())
      throw DataError("line " + std::to_string(line_no) + ": " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), row[j]);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(row[j]))
        throw DataError("line " + std::to_string(line_no) + ", column '" + table.header[j] +
                        "': not a finite number: '" + f + "'");
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty())
    throw DataError("CSV has no header row");
  if (table.rows.empty())
    throw DataError("CSV has a header but no data rows");
  return table;
}

SampleSet
sample_from_table(const CsvTable& table, const ColumnRoles& roles)
{
  auto col = [&](const std::string& name, const char* role) {
    const Index j = table.column(name);
    if (j < 0)
      throw ConfigError(std::string(role) + ": no column named '" + name + "' in the data header");
    return j;
  };
  const Index jy = col(roles.y, "y");
  const Index jd = col(roles.d, "d");
  std::vector<Index> jx;
  for (const auto& name : roles.x)
    jx.push_back(col(name, "x"));

  const auto n = static_cast<Index>(table.rows.size());
  SampleSet s;
  s.X.resize(n, static_cast<Index>(jx.size()));
  s.Y.resize(n);
  s.D.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const double d = row[static_cast<std::size_t>(jd)];
    if (d != 0.0 && d != 1.0)
      // Line numbers count the header as line 1.
      throw DataError("row " + std::to_string(i + 1) + " (line " + std::to_string(i + 2) + "): " + roles.d +
                      " = " + format_g9(d) + " is not 0 or 1");
    s.D[static_cast<std::size_t>(i)] = static_cast<int>(d);
    s.Y(i) = row[static_cast<std::size_t>(jy)];
    for (std::size_t j = 0; j < jx.size(); ++j)
      s.X(i, static_cast<Index>(j)) = row[static_cast<std::size_t>(jx[j])];
  }
  for (const auto& name : roles.x1) {
    const auto it = std::find(roles.x.begin(), roles.x.end(), name);
    if (it == roles.x.end())
      throw ConfigError("x1: column '" + name + "' is not listed in x");
    s.x1_idx.push_back(static_cast<Index>(it - roles.x.begin()));
  }
  s.validate();
  return s;
}

RowMatrix
quantile_grid(const SampleSet& data, const GridSpec& spec)
{
  if (!spec.points.empty()) {
    RowMatrix g(static_cast<Index>(spec.points.size()), data.k());
    for (std::size_t i = 0; i < spec.points.size(); ++i) {
      if (static_cast<Index>(spec.points[i].size()) != data.k())
        throw ConfigError("grid point " + std::to_string(i + 1) + " has the wrong dimension");
      for (Index j = 0; j < data.k(); ++j)
        g(static_cast<Index>(i), j) = spec.points[i][static_cast<std::size_t>(j)];
    }
    return g;
  }
  if (data.k() != 1)
    throw ConfigError("quantile grids need a single conditioning covariate; give grid.points");
  std::vector<double> v(static_cast<std::size_t>(data.n()));
  for (Index i = 0; i < data.n(); ++i)
    v[static_cast<std::size_t>(i)] = data.X(i, data.x1_idx[0]);
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  RowMatrix g(spec.count, 1);
  for (int i = 0; i < spec.count; ++i) {
    const double q = spec.count == 1 ? 0.5 * (spec.lower_quantile + spec.upper_quantile)
                                     : spec.lower_quantile + (spec.upper_quantile - spec.lower_quantile) * i /
                                                               (spec.count - 1.0);
    g(i, 0) = quantile(q);
  }
  return g;
}

} // namespace cate::cli
