#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace emlab::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Flat binary matrix persistence: <base>.bin holds little-endian float64 in
// row-major order, <base>.json is the sidecar (dims, field names, units).
void save_matrix(const fs::path& base, const Eigen::MatrixXd& m,
                 const std::vector<std::string>& fields = {},
                 const std::string& units = "");
Eigen::MatrixXd load_matrix(const fs::path& base);
json load_sidecar(const fs::path& base);

void save_vector(const fs::path& base, const Eigen::VectorXd& v,
                 const std::string& field = "", const std::string& units = "");
Eigen::VectorXd load_vector(const fs::path& base);

// Deterministic CSV output: header row, fixed "%.17g" double formatting.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& cells);
  static std::string format(double v);

 private:
  std::string buffer_;
  fs::path path_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 when absent
  double num(std::size_t row, int col) const;
  const std::string& cell(std::size_t row, int col) const;
};
CsvTable read_csv(const fs::path& path);

json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const json& j);

std::uint64_t file_checksum(const fs::path& path);

// Self-describing model container: <base>.json manifest plus <base>.bin with
// named float64 sections (offset/length/shape recorded in the manifest).
class BlobWriter {
 public:
  explicit BlobWriter(fs::path base);
  void add(const std::string& name, const Eigen::MatrixXd& m);
  void add(const std::string& name, const std::vector<double>& v);
  json& meta();
  void finish();

 private:
  fs::path base_;
  json manifest_;
  std::string blob_;
  bool finished_ = false;
};

class BlobReader {
 public:
  explicit BlobReader(const fs::path& base);
  Eigen::MatrixXd matrix(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  bool has(const std::string& name) const;
  const json& meta() const;

 private:
  json manifest_;
  std::string blob_;
};

}  // namespace emlab::io
