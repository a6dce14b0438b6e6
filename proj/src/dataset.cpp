#include "bne/dataset.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace bne {

Dataset Dataset::rows(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.x.resize(idx.size(), x.cols());
  out.y.resize(idx.size());
  out.base_preds.resize(idx.size(), base_preds.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.x.row(i) = x.row(idx[i]);
    out.y[i] = y[idx[i]];
    if (base_preds.cols() > 0) out.base_preds.row(i) = base_preds.row(idx[i]);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_cell(const std::string& cell, const std::string& column, int row) {
  const std::string t = trim(cell);
  if (t.empty()) {
    throw std::runtime_error("load_csv: missing value in column '" + column +
                             "' at data row " + std::to_string(row));
  }
  try {
    size_t pos = 0;
    const double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    if (!std::isfinite(v)) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("load_csv: non-numeric cell '" + t + "' in column '" +
                             column + "' at data row " + std::to_string(row));
  }
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file '" + path + "'");

  const std::vector<std::string> header = split_csv_line(line);
  std::vector<int> x_cols, f_cols;
  int y_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name == "y") {
      y_col = static_cast<int>(i);
    } else if (name.size() >= 2 && name[0] == 'x') {
      x_cols.push_back(static_cast<int>(i));
    } else if (name.size() >= 2 && name[0] == 'f') {
      f_cols.push_back(static_cast<int>(i));
    }
  }
  if (y_col < 0) throw std::runtime_error("load_csv: missing column 'y' in '" + path + "'");
  if (x_cols.empty()) throw std::runtime_error("load_csv: no feature columns x1..xp in '" + path + "'");

  std::vector<std::vector<double>> rows;
  int row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                               " has " + std::to_string(cells.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> parsed(header.size());
    for (size_t i = 0; i < cells.size(); ++i) {
      parsed[i] = parse_cell(cells[i], trim(header[i]), row_no);
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in '" + path + "'");

  Dataset data;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  data.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  data.y.resize(n);
  data.base_preds.resize(n, static_cast<Eigen::Index>(f_cols.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (size_t c = 0; c < x_cols.size(); ++c) data.x(r, c) = rows[r][x_cols[c]];
    data.y[r] = rows[r][y_col];
    for (size_t c = 0; c < f_cols.size(); ++c) data.base_preds(r, c) = rows[r][f_cols[c]];
  }
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open '" + path + "' for writing");
  for (Eigen::Index c = 0; c < data.x.cols(); ++c) out << "x" << (c + 1) << ",";
  out << "y";
  for (Eigen::Index c = 0; c < data.base_preds.cols(); ++c) out << ",f" << (c + 1);
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.x.cols(); ++c) {
      put(data.x(r, c));
      out << ",";
    }
    put(data.y[r]);
    for (Eigen::Index c = 0; c < data.base_preds.cols(); ++c) {
      out << ",";
      put(data.base_preds(r, c));
    }
    out << "\n";
  }
}

}  // namespace bne
