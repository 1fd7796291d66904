#include "healthpredictor/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "healthpredictor/errors.hpp"

namespace hp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnmappedLabel: return "UnmappedLabel";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::UnimputableSeries: return "UnimputableSeries";
    case ErrorCode::ZeroRowSum: return "ZeroRowSum";
    case ErrorCode::NegativeShare: return "NegativeShare";
    case ErrorCode::NoPlantForFuel: return "NoPlantForFuel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownPlant: return "UnknownPlant";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::MissingValuation: return "MissingValuation";
    case ErrorCode::UnknownReceptor: return "UnknownReceptor";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ShortHistory: return "ShortHistory";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BetaOutOfRange: return "BetaOutOfRange";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::ZeroNormalizer: return "ZeroNormalizer";
    case ErrorCode::InfeasibleSession: return "InfeasibleSession";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::SignalCoverageGap: return "SignalCoverageGap";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace hp

namespace hp::csv {

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorCode::MalformedRow, "missing column '" + name + "'");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

Table parse(const std::string& text, const std::string& source) {
  Table table;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRow, source + ":" + std::to_string(lineno) + ": expected " +
                                               std::to_string(table.header.size()) + " fields, got " +
                                               std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.lines.push_back(lineno);
  }
  if (!have_header) throw Error(ErrorCode::MalformedRow, source + ": empty file");
  return table;
}

Table read(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

double parse_double(const std::string& field, const std::string& context) {
  const std::string s = trim(field);
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw Error(ErrorCode::MalformedRow, context + ": bad number '" + field + "'");
  return value;
}

long long parse_int(const std::string& field, const std::string& context) {
  const std::string s = trim(field);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::MalformedRow, context + ": bad integer '" + field + "'");
  return value;
}

bool parse_bool(const std::string& field, const std::string& context) {
  const std::string s = trim(field);
  if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
  throw Error(ErrorCode::MalformedRow, context + ": bad boolean '" + field + "'");
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(ErrorCode::Io, "cannot format number");
  return std::string(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hp::csv
