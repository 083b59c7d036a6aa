#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tram::io {

/// Splits one CSV line on commas and trims surrounding whitespace. No quoting
/// support; none of the project formats need it.
[[nodiscard]] std::vector<std::string> split_csv_line(std::string_view line);

/// Reads non-empty lines; `\r` line endings are stripped.
struct CsvReader {
  explicit CsvReader(const std::filesystem::path& path);

  /// Returns false at end of file. line_number() refers to the last row read.
  bool next(std::vector<std::string>& fields);
  [[nodiscard]] std::size_t line_number() const { return line_; }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> lines_;
  std::size_t cursor_ = 0;
  std::size_t line_ = 0;
};

[[nodiscard]] double parse_double(const std::string& text);
[[nodiscard]] long long parse_int(const std::string& text);

/// Shortest representation that round-trips a double exactly.
[[nodiscard]] std::string format_double(double value);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a partial output behind.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer,
                      bool binary = false);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace tram::io
