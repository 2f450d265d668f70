// Item catalog CSV:
//   item_id,x0,...,x{d-1}[,theta][,revenue]
// UTF-8, '.' decimal separator, no thousands separators, LF or CRLF.
#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtss/core.hpp"

namespace mtss {

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <class T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("catalog line " + std::to_string(line_no) + ": cannot parse '" +
                      std::string(field) + "'");
  return value;
}

}  // namespace detail

[[nodiscard]] inline ItemCatalog read_catalog_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("catalog CSV is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "item_id")
    throw ConfigError("catalog header must start with item_id");

  std::size_t dim = 0;
  while (1 + dim < header.size() && header[1 + dim] == "x" + std::to_string(dim)) ++dim;
  if (dim == 0) throw ConfigError("catalog header has no feature columns x0..");
  std::size_t col = 1 + dim;
  const bool has_theta = col < header.size() && header[col] == "theta";
  if (has_theta) ++col;
  const bool has_revenue = col < header.size() && header[col] == "revenue";
  if (has_revenue) ++col;
  if (col != header.size())
    throw ConfigError("unexpected catalog column '" + std::string(header[col]) + "'");

  std::vector<std::uint64_t> ids;
  std::vector<double> feats, theta, revenue;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw ConfigError("catalog line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    ids.push_back(detail::parse_number<std::uint64_t>(fields[0], line_no));
    for (std::size_t j = 0; j < dim; ++j)
      feats.push_back(detail::parse_number<double>(fields[1 + j], line_no));
    std::size_t c = 1 + dim;
    if (has_theta) theta.push_back(detail::parse_number<double>(fields[c++], line_no));
    if (has_revenue) revenue.push_back(detail::parse_number<double>(fields[c++], line_no));
  }
  if (ids.empty()) throw ConfigError("catalog CSV has no items");

  const auto n = static_cast<Eigen::Index>(ids.size());
  ItemCatalog cat(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      feats.data(), n, static_cast<Eigen::Index>(dim)));
  cat.item_ids = std::move(ids);
  if (has_theta) cat.true_theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), n);
  if (has_revenue) cat.revenues = Eigen::Map<const Eigen::VectorXd>(revenue.data(), n);
  cat.validate();
  return cat;
}

[[nodiscard]] inline ItemCatalog read_catalog_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog '" + path + "'");
  return read_catalog_csv(in);
}

inline void write_catalog_csv(std::ostream& out, const ItemCatalog& cat) {
  out << "item_id";
  for (std::size_t j = 0; j < cat.dim(); ++j) out << ",x" << j;
  if (cat.true_theta) out << ",theta";
  if (cat.revenues) out << ",revenue";
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
  };
  for (std::size_t i = 0; i < cat.n_items(); ++i) {
    out << cat.item_ids[i];
    for (std::size_t j = 0; j < cat.dim(); ++j)
      put(cat.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    if (cat.true_theta) put((*cat.true_theta)(static_cast<Eigen::Index>(i)));
    if (cat.revenues) put((*cat.revenues)(static_cast<Eigen::Index>(i)));
    out << '\n';
  }
}

}  // namespace mtss
