#include "slam/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace slam {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for reading: " + path);
  return f;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    std::string field = line.substr(start, pos == std::string::npos
                                               ? std::string::npos
                                               : pos - start);
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ":" + std::to_string(line_no) +
                    ": expected a number, got '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& path, int line_no) {
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path + ":" + std::to_string(line_no) +
                    ": expected an integer, got '" + s + "'");
  }
}

template <typename CellFn>
std::pair<int, int> read_grid(const std::string& path, CellFn&& on_cell) {
  std::ifstream f = open_in(path);
  std::string line;
  int rows = 0, cols = -1;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (cols < 0)
      cols = static_cast<int>(fields.size());
    else if (static_cast<int>(fields.size()) != cols)
      throw DataError(path + ":" + std::to_string(rows + 1) +
                      ": ragged row (expected " + std::to_string(cols) +
                      " fields)");
    for (int c = 0; c < cols; ++c) on_cell(rows, c, fields[c]);
    ++rows;
  }
  if (rows == 0 || cols <= 0) throw DataError(path + ": empty matrix");
  return {rows, cols};
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_bit_csv(const std::string& path, const BitMatrix& m) {
  std::ofstream f = open_out(path);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) f << ',';
      f << static_cast<int>(m(i, j));
    }
    f << '\n';
  }
}

BitMatrix read_bit_csv(const std::string& path) {
  std::vector<std::vector<std::uint8_t>> grid;
  auto [rows, cols] = read_grid(path, [&](int r, int c, const std::string& s) {
    if (c == 0) grid.emplace_back();
    if (s == "0")
      grid[r].push_back(0);
    else if (s == "1")
      grid[r].push_back(1);
    else
      throw DataError(path + ":" + std::to_string(r + 1) +
                      ": expected 0 or 1, got '" + s + "'");
  });
  BitMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = grid[r][c];
  return m;
}

void write_response_csv(const std::string& path, const ResponseMatrix& r) {
  std::ofstream f = open_out(path);
  for (int i = 0; i < r.rows(); ++i) {
    for (int j = 0; j < r.cols(); ++j) {
      if (j) f << ',';
      if (r(i, j) == kMissingCell)
        f << "NA";
      else
        f << static_cast<int>(r(i, j));
    }
    f << '\n';
  }
}

ResponseMatrix read_response_csv(const std::string& path) {
  std::vector<std::vector<std::uint8_t>> grid;
  auto [rows, cols] = read_grid(path, [&](int r, int c, const std::string& s) {
    if (c == 0) grid.emplace_back();
    if (s == "0")
      grid[r].push_back(0);
    else if (s == "1")
      grid[r].push_back(1);
    else if (s == "NA")
      grid[r].push_back(kMissingCell);
    else
      throw DataError(path + ":" + std::to_string(r + 1) +
                      ": expected 0, 1 or NA, got '" + s + "'");
  });
  ResponseMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = grid[r][c];
  return m;
}

void write_real_csv(const std::string& path, const RealMatrix& m) {
  std::ofstream f = open_out(path);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) f << ',';
      f << format_double(m(i, j));
    }
    f << '\n';
  }
}

RealMatrix read_real_csv(const std::string& path) {
  std::vector<std::vector<double>> grid;
  auto [rows, cols] = read_grid(path, [&](int r, int c, const std::string& s) {
    if (c == 0) grid.emplace_back();
    grid[r].push_back(parse_double(s, path, r + 1));
  });
  RealMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = grid[r][c];
  return m;
}

void write_theta_csv(const std::string& path, const ItemParamsTwo& theta) {
  std::ofstream f = open_out(path);
  for (int j = 0; j < theta.items(); ++j)
    f << format_double(theta.theta_plus[j]) << ','
      << format_double(theta.theta_minus[j]) << '\n';
}

ItemParamsTwo read_theta_csv(const std::string& path) {
  RealMatrix m = read_real_csv(path);
  if (m.cols() != 2) throw DataError(path + ": expected two columns");
  ItemParamsTwo theta;
  theta.theta_plus.resize(m.rows());
  theta.theta_minus.resize(m.rows());
  for (int j = 0; j < m.rows(); ++j) {
    theta.theta_plus[j] = m(j, 0);
    theta.theta_minus[j] = m(j, 1);
  }
  return theta;
}

void write_trace_csv(const std::string& path,
                     const std::vector<FitTraceRow>& trace) {
  std::ofstream f = open_out(path);
  f << "iteration,q_entry_flips,objective\n";
  for (const auto& row : trace)
    f << row.iter << ',' << row.q_flips << ',' << format_double(row.objective)
      << '\n';
}

void write_theta_table_csv(const std::string& path, const ThetaTable& table) {
  std::ofstream f = open_out(path);
  f << "item,class_mask,n_obs,theta\n";
  for (std::size_t j = 0; j < table.size(); ++j)
    for (std::size_t c = 0; c < table[j].classes.size(); ++c) {
      const ClassStat& cs = table[j].classes[c];
      f << j << ',' << c << ',' << cs.n_obs << ','
        << format_double(cs.smoothed) << '\n';
    }
}

std::vector<std::pair<int, std::vector<std::uint8_t>>> read_anchors_csv(
    const std::string& path, int k) {
  std::ifstream f = open_in(path);
  std::string line;
  std::vector<std::pair<int, std::vector<std::uint8_t>>> anchors;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (static_cast<int>(fields.size()) != k + 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(k + 1) + " fields (item index plus " +
                      std::to_string(k) + " bits)");
    int item = static_cast<int>(parse_long(fields[0], path, line_no));
    std::vector<std::uint8_t> bits(k);
    for (int c = 0; c < k; ++c) {
      long v = parse_long(fields[c + 1], path, line_no);
      if (v != 0 && v != 1)
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": anchor bits must be 0 or 1");
      bits[c] = static_cast<std::uint8_t>(v);
    }
    anchors.emplace_back(item, std::move(bits));
  }
  return anchors;
}

}  // namespace slam
