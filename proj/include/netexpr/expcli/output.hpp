#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace netexpr::cli {

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// One CSV cell. Reals are printed with 17 significant digits so that they
// round-trip; an empty cell is written as nothing between the commas.
class Cell {
public:
  Cell() = default;
  Cell(double v);
  Cell(std::int64_t v) : text_(std::to_string(v)) {}
  Cell(std::uint64_t v) : text_(std::to_string(v)) {}
  Cell(int v) : text_(std::to_string(v)) {}
  Cell(unsigned v) : text_(std::to_string(v)) {}
  Cell(unsigned long long v) : text_(std::to_string(v)) {}
  Cell(long long v) : text_(std::to_string(v)) {}
  Cell(bool v) : text_(v ? "1" : "0") {}
  Cell(const char* v) : text_(v) {}
  Cell(std::string v) : text_(std::move(v)) {}
  Cell(std::string_view v) : text_(v) {}
  const std::string& text() const { return text_; }

private:
  std::string text_;
};

std::string format_real(double v);

class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);
  void row(std::initializer_list<Cell> cells);
  void row(const std::vector<Cell>& cells);
  void close();
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
  std::size_t columns_;
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws IoError when absent
};

CsvTable read_csv(const std::filesystem::path& path);

// Hex SHA-256 of a file's bytes, or of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(std::string_view text);

// Writes `text` to path.tmp and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view text);

std::string utc_timestamp();

// Output directory policy: creates `dir` when missing; refuses a non-empty
// directory unless `overwrite`, in which case files listed by a previous
// manifest are removed first.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

struct RunManifest {
  nlohmann::ordered_json config;
  std::string version;
  std::string prng;
  std::string started_at;
  std::string finished_at;
  std::string status = "ok";  // ok | non-converged | diverged | failed
  std::vector<std::string> notes;
  std::vector<std::string> files;  // relative to the output directory
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  // Digests are computed from the files on disk at write time.
  void write(const std::filesystem::path& dir) const;
};

nlohmann::ordered_json read_manifest(const std::filesystem::path& dir);

}  // namespace netexpr::cli
