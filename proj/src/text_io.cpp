#include "mmpos/text_io.hpp"
#include "mmpos/errors.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace mmpos
{

namespace
{

std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_fields(std::string_view line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true)
  {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return out;
}

} // namespace

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const
{
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name)
      return i;
  return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const
{
  const auto c = find_column(name);
  if (!c)
    throw ParseError("missing required column '" + std::string(name) + "'", 1, std::string(name));
  return *c;
}

CsvTable parse_csv(const std::string &text, const std::string &source)
{
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line))
  {
    ++line_no;
    if (trim(line).empty())
      continue;
    auto fields = split_fields(line);
    if (!have_header)
    {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    table.rows.push_back(std::move(fields));
    table.lines.push_back(line_no);
  }
  if (!have_header)
    throw ParseError(source + ": missing header line", 1);
  return table;
}

CsvTable read_csv(const std::filesystem::path &path) { return parse_csv(read_text_file(path), path.string()); }

double parse_double(std::string_view text, std::size_t line, std::string_view field)
{
  text = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": field '" + std::string(field) + "' is not a number: '" +
                         std::string(text) + "'",
                     line, std::string(field));
  return v;
}

std::optional<double> parse_optional_double(std::string_view text, std::size_t line, std::string_view field)
{
  if (trim(text).empty())
    return std::nullopt;
  return parse_double(text, line, field);
}

std::string format_double(double v)
{
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AtomicFile::AtomicFile(std::filesystem::path target) : target_(std::move(target))
{
  temp_ = target_;
  temp_ += ".partial";
  out_.open(temp_, std::ios::binary | std::ios::trunc);
  if (!out_)
    throw ParseError("cannot write " + target_.string());
}

AtomicFile::~AtomicFile()
{
  if (!committed_)
  {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(temp_, ec);
  }
}

void AtomicFile::commit()
{
  out_.flush();
  if (!out_)
    throw ParseError("write failed for " + target_.string());
  out_.close();
  std::filesystem::rename(temp_, target_);
  committed_ = true;
}

CsvWriter::CsvWriter(const std::filesystem::path &path, const std::vector<std::string> &header)
    : file_(path), width_(header.size())
{
  row(header);
}

void CsvWriter::row(const std::vector<std::string> &fields)
{
  if (fields.size() != width_)
    throw DomainError("CSV row width does not match header");
  auto &out = file_.stream();
  for (std::size_t i = 0; i < fields.size(); ++i)
  {
    if (fields[i].find_first_of(",\n") != std::string::npos)
      throw DomainError("CSV field may not contain commas or newlines: '" + fields[i] + "'");
    if (i)
      out << ',';
    out << fields[i];
  }
  out << '\n';
}

void write_text_file(const std::filesystem::path &path, const std::string &content)
{
  AtomicFile f(path);
  f.stream() << content;
  f.commit();
}

} // namespace mmpos
