#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "jsqps/sojourn_cdf.hpp"

namespace jsqps {

namespace {

constexpr double kLowLoadLimit = 0.6;
constexpr double kHighLoadLimit = 0.97;
constexpr int kMappedServers = 10;

}  // namespace

MethodId best_method(const SystemConfig& config) {
  const double rho = config.load();
  if (config.servers() == 1 && rho < kHighLoadLimit) return MethodId::D;
  if (rho < kLowLoadLimit) return MethodId::D;
  if (rho < kHighLoadLimit) return MethodId::C;
  return MethodId::E;
}

MethodId best_method(const SystemConfig& config, const RegimeMap& map) {
  if (auto found = map.find(config.servers(), config.load())) return *found;
  return best_method(config);
}

RegimeMap::RegimeMap(std::vector<Row> rows) : rows_(std::move(rows)) {
  for (const auto& row : rows_) {
    if (row.servers < 1 || !(row.rho_low < row.rho_high)) {
      throw ParameterError(fmt::format(
          "regime map row (R={}, [{}, {})) is empty or invalid", row.servers,
          row.rho_low, row.rho_high));
    }
  }
}

RegimeMap RegimeMap::defaults() {
  std::vector<Row> rows;
  rows.push_back({1, 0.0, kHighLoadLimit, MethodId::D});
  rows.push_back({1, kHighLoadLimit, 1.0, MethodId::E});
  for (int r = 2; r <= kMappedServers; ++r) {
    rows.push_back({r, 0.0, kLowLoadLimit, MethodId::D});
    rows.push_back({r, kLowLoadLimit, kHighLoadLimit, MethodId::C});
    rows.push_back({r, kHighLoadLimit, 1.0, MethodId::E});
  }
  return RegimeMap(std::move(rows));
}

RegimeMap RegimeMap::parse(std::istream& in) {
  std::vector<Row> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    Row row{};
    std::string method;
    if (!(fields >> row.servers)) {
      if (fields.eof()) continue;  // blank line
      throw ParameterError(fmt::format("regime map line {}: bad R", line_no));
    }
    if (!(fields >> row.rho_low >> row.rho_high >> method)) {
      throw ParameterError(fmt::format(
          "regime map line {}: expected 'R rho_low rho_high method'", line_no));
    }
    const auto id = parse_method(method);
    if (!id) {
      throw ParameterError(fmt::format(
          "regime map line {}: unknown method '{}'", line_no, method));
    }
    std::string extra;
    if (fields >> extra) {
      throw ParameterError(
          fmt::format("regime map line {}: trailing field '{}'", line_no, extra));
    }
    row.method = *id;
    rows.push_back(row);
  }
  RegimeMap map(std::move(rows));
  map.require_total();
  return map;
}

RegimeMap RegimeMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParameterError(fmt::format("cannot open regime map '{}'", path));
  }
  return parse(in);
}

void RegimeMap::write(std::ostream& out) const {
  out << "# R rho_low rho_high method\n";
  for (const auto& row : rows_) {
    out << fmt::format("{} {:.6g} {:.6g} {}\n", row.servers, row.rho_low,
                       row.rho_high, to_string(row.method));
  }
}

std::optional<MethodId> RegimeMap::find(int servers, double load) const {
  for (const auto& row : rows_) {
    if (row.servers == servers && row.rho_low <= load && load < row.rho_high) {
      return row.method;
    }
  }
  return std::nullopt;
}

void RegimeMap::require_total() const {
  for (int r = 1; r <= kMappedServers; ++r) {
    for (int decile = 1; decile <= 9; ++decile) {
      const double rho = decile / 10.0;
      if (!find(r, rho)) {
        throw ParameterError(fmt::format(
            "regime map does not cover R={}, rho={}", r, rho));
      }
    }
  }
}

}  // namespace jsqps
