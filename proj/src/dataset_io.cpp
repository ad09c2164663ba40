#include "rbmsem/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace rbmsem {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    const std::string field = trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (field.empty() || ec != std::errc() || ptr != last) return false;
    out.push_back(v);
    if (comma == std::string::npos) return true;
    start = comma + 1;
  }
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::vector<double> vals;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (!parse_row(line, vals)) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw std::runtime_error("line " + std::to_string(lineno) + ": non-numeric field");
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) +
                               " columns, found " + std::to_string(vals.size()));
    rows.push_back(vals);
  }
  if (rows.empty()) throw std::runtime_error("dataset has no rows");
  Dataset out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

Dataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open data file '" + path + "'");
  return read_csv(f);
}

void write_csv(std::ostream& out, const Dataset& data, const std::vector<std::string>& header) {
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != data.cols()) throw std::invalid_argument("header size mismatch");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  char buf[40];
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const Dataset& data, const std::vector<std::string>& header) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(f, data, header);
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace rbmsem
