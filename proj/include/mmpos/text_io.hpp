#pragma once

// Small CSV and file helpers shared by the file formats and the CLI.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmpos
{

struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row
  std::vector<std::size_t> lines;

  std::optional<std::size_t> find_column(std::string_view name) const;
  // Throws ParseError naming the column when absent.
  std::size_t column(std::string_view name) const;
  std::size_t line_of(std::size_t row) const { return lines.at(row); }
};

// Comma-separated, no quoting. Blank lines are skipped; every row must match the header width.
CsvTable parse_csv(const std::string &text, const std::string &source = "csv");
CsvTable read_csv(const std::filesystem::path &path);

double parse_double(std::string_view text, std::size_t line, std::string_view field);
std::optional<double> parse_optional_double(std::string_view text, std::size_t line, std::string_view field);

// Shortest representation that reads back to the same double.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path &path);

// Writes to a temporary sibling file and renames it over the target on commit(), so the
// target either holds complete output or is untouched.
class AtomicFile
{
public:
  explicit AtomicFile(std::filesystem::path target);
  ~AtomicFile();
  AtomicFile(const AtomicFile &) = delete;
  AtomicFile &operator=(const AtomicFile &) = delete;

  std::ofstream &stream() { return out_; }
  void commit();

private:
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

class CsvWriter
{
public:
  CsvWriter(const std::filesystem::path &path, const std::vector<std::string> &header);
  void row(const std::vector<std::string> &fields);
  void commit() { file_.commit(); }

private:
  AtomicFile file_;
  std::size_t width_;
};

void write_text_file(const std::filesystem::path &path, const std::string &content);

} // namespace mmpos
