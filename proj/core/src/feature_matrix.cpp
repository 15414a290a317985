#include "omni/feature_matrix.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "omni/error.hpp"

namespace omni {

static_assert(std::endian::native == std::endian::little, "FMAT/WAV I/O assumes a little-endian host");

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("FeatureMatrix: " + std::to_string(data_.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

std::span<const double> FeatureMatrix::row(std::size_t r) const {
  if (r >= rows_) throw IndexError("FeatureMatrix::row: index out of range");
  return std::span<const double>(data_).subspan(r * cols_, cols_);
}

std::span<double> FeatureMatrix::row(std::size_t r) {
  if (r >= rows_) throw IndexError("FeatureMatrix::row: index out of range");
  return std::span<double>(data_).subspan(r * cols_, cols_);
}

void FeatureMatrix::append_row(std::span<const double> row) {
  if (rows_ == 0 && data_.empty()) cols_ = row.size();
  if (row.size() != cols_) {
    throw DimensionError("FeatureMatrix::append_row: width " + std::to_string(row.size()) +
                         " != " + std::to_string(cols_));
  }
  data_.insert(data_.end(), row.begin(), row.end());
  ++rows_;
}

void FeatureMatrix::append_rows(const FeatureMatrix& other) {
  for (std::size_t r = 0; r < other.rows(); ++r) append_row(other.row(r));
}

FeatureMatrix FeatureMatrix::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw IndexError("FeatureMatrix::slice_rows: range out of bounds");
  return FeatureMatrix(end - begin, cols_,
                       std::vector<double>(data_.begin() + begin * cols_, data_.begin() + end * cols_));
}

Tensor to_tensor(const FeatureMatrix& m, bool requires_grad) {
  return Tensor::matrix(m.rows(), m.cols(), std::vector<double>(m.data().begin(), m.data().end()),
                        requires_grad);
}

FeatureMatrix to_matrix(const Tensor& t) {
  const auto d = t.data();
  return FeatureMatrix(t.rows(), t.cols(), std::vector<double>(d.begin(), d.end()));
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_fmat(const FeatureMatrix& m) {
  std::vector<std::uint8_t> out = {'F', 'M', 'A', 'T'};
  out.reserve(12 + 4 * m.data().size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

FeatureMatrix decode_fmat(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("FMAT: truncated magic", bytes.size());
  if (std::memcmp(bytes.data(), "FMAT", 4) != 0) throw ParseError("FMAT: bad magic", 0);
  if (bytes.size() < 12) throw ParseError("FMAT: truncated header", bytes.size());
  const std::size_t rows = get_u32(bytes, 4);
  const std::size_t cols = get_u32(bytes, 8);
  const std::size_t need = 12 + 4 * rows * cols;
  if (bytes.size() < need) {
    throw ParseError("FMAT: payload needs " + std::to_string(need) + " bytes, file has " +
                         std::to_string(bytes.size()),
                     bytes.size());
  }
  if (bytes.size() > need) throw ParseError("FMAT: trailing bytes after payload", need);
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  }
  return FeatureMatrix(rows, cols, std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_fmat(const std::filesystem::path& path, const FeatureMatrix& m) {
  write_file_bytes(path, encode_fmat(m));
}

FeatureMatrix read_fmat(const std::filesystem::path& path) { return decode_fmat(read_file_bytes(path)); }

}  // namespace omni
