#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hp::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  std::size_t column(const std::string& name) const;
};

// Reads a comma separated file with a header line. No quoting support; blank
// lines are skipped and a trailing '\r' is stripped. Rows whose arity differs
// from the header raise MalformedRow.
Table read(const std::filesystem::path& path);
Table parse(const std::string& text, const std::string& source = "<memory>");

// Strict number parsing: the whole trimmed field must be consumed.
double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);
bool parse_bool(const std::string& field, const std::string& context);

// Shortest representation that round-trips a double.
std::string format_double(double value);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace hp::csv
