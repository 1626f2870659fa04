#include "emlab/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "emlab/core.hpp"

static_assert(std::endian::native == std::endian::little,
              "matrix files are written as-is and assume a little-endian host");

namespace emlab::io {

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

std::string pack_row_major(const Eigen::MatrixXd& m) {
  std::string bytes(sizeof(double) * static_cast<std::size_t>(m.size()), '\0');
  // Eigen defaults to column-major storage; transpose view gives row-major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  std::memcpy(bytes.data(), rm.data(), bytes.size());
  return bytes;
}

}  // namespace

void save_matrix(const fs::path& base, const Eigen::MatrixXd& m,
                 const std::vector<std::string>& fields,
                 const std::string& units) {
  fs::create_directories(base.parent_path());
  write_file(fs::path(base).concat(".bin"), pack_row_major(m));
  json side{{"dtype", "float64"},
            {"order", "row-major"},
            {"byte_order", "little"},
            {"rows", m.rows()},
            {"cols", m.cols()}};
  if (!fields.empty()) side["fields"] = fields;
  if (!units.empty()) side["units"] = units;
  write_json_file(fs::path(base).concat(".json"), side);
}

Eigen::MatrixXd load_matrix(const fs::path& base) {
  const json side = read_json_file(fs::path(base).concat(".json"));
  const auto rows = side.at("rows").get<Eigen::Index>();
  const auto cols = side.at("cols").get<Eigen::Index>();
  const std::string bytes = read_file(fs::path(base).concat(".bin"));
  if (bytes.size() != sizeof(double) * static_cast<std::size_t>(rows * cols))
    throw std::runtime_error("matrix size mismatch: " + base.string());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows,
                                                                            cols);
  std::memcpy(rm.data(), bytes.data(), bytes.size());
  return rm;
}

json load_sidecar(const fs::path& base) {
  return read_json_file(fs::path(base).concat(".json"));
}

void save_vector(const fs::path& base, const Eigen::VectorXd& v,
                 const std::string& field, const std::string& units) {
  save_matrix(base, v, field.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{field},
              units);
}

Eigen::VectorXd load_vector(const fs::path& base) {
  Eigen::MatrixXd m = load_matrix(base);
  if (m.cols() != 1)
    throw std::runtime_error("expected a column vector: " + base.string());
  return m.col(0);
}

std::string CsvWriter::format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), width_(header.size()) {
  fs::create_directories(path.parent_path());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += header[i];
  }
  buffer_ += '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != width_)
    throw std::invalid_argument("csv row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += format(values[i]);
  }
  buffer_ += '\n';
}

void CsvWriter::row_mixed(const std::vector<std::string>& cells) {
  if (cells.size() != width_)
    throw std::invalid_argument("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += cells[i];
  }
  buffer_ += '\n';
}

CsvWriter::~CsvWriter() {
  try {
    write_file(path_, buffer_);
  } catch (...) {
    // destructor must not throw; the file is simply missing on failure
  }
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

double CsvTable::num(std::size_t row, int col) const {
  return std::stod(cell(row, col));
}

const std::string& CsvTable::cell(std::size_t row, int col) const {
  if (col < 0 || row >= rows.size() ||
      static_cast<std::size_t>(col) >= rows[row].size())
    throw std::out_of_range("csv cell out of range");
  return rows[row][static_cast<std::size_t>(col)];
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = cells;
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  json j;
  in >> j;
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  write_file(path, j.dump(2) + "\n");
}

std::uint64_t file_checksum(const fs::path& path) {
  return fnv1a64(read_file(path));
}

BlobWriter::BlobWriter(fs::path base) : base_(std::move(base)) {
  manifest_["sections"] = json::object();
}

void BlobWriter::add(const std::string& name, const Eigen::MatrixXd& m) {
  const std::string bytes = pack_row_major(m);
  manifest_["sections"][name] = {{"offset", blob_.size()},
                                 {"bytes", bytes.size()},
                                 {"rows", m.rows()},
                                 {"cols", m.cols()},
                                 {"dtype", "float64"}};
  blob_ += bytes;
}

void BlobWriter::add(const std::string& name, const std::vector<double>& v) {
  Eigen::MatrixXd m =
      Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  add(name, m);
}

json& BlobWriter::meta() { return manifest_["meta"]; }

void BlobWriter::finish() {
  if (finished_) return;
  finished_ = true;
  fs::create_directories(base_.parent_path());
  write_file(fs::path(base_).concat(".bin"), blob_);
  write_json_file(fs::path(base_).concat(".json"), manifest_);
}

BlobReader::BlobReader(const fs::path& base)
    : manifest_(read_json_file(fs::path(base).concat(".json"))),
      blob_(read_file(fs::path(base).concat(".bin"))) {}

bool BlobReader::has(const std::string& name) const {
  return manifest_.at("sections").contains(name);
}

Eigen::MatrixXd BlobReader::matrix(const std::string& name) const {
  const json& s = manifest_.at("sections").at(name);
  const auto rows = s.at("rows").get<Eigen::Index>();
  const auto cols = s.at("cols").get<Eigen::Index>();
  const auto offset = s.at("offset").get<std::size_t>();
  const auto bytes = s.at("bytes").get<std::size_t>();
  if (offset + bytes > blob_.size())
    throw std::runtime_error("blob section out of range: " + name);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows,
                                                                            cols);
  std::memcpy(rm.data(), blob_.data() + offset, bytes);
  return rm;
}

std::vector<double> BlobReader::vector(const std::string& name) const {
  Eigen::MatrixXd m = matrix(name);
  if (m.cols() != 1 && m.rows() != 1)
    throw std::runtime_error("blob section is not a vector: " + name);
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    v[static_cast<std::size_t>(i)] = m.cols() == 1 ? m(i, 0) : m(0, i);
  return v;
}

const json& BlobReader::meta() const { return manifest_.at("meta"); }

}  // namespace emlab::io
