#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "omni/tensor.hpp"

namespace omni {

// A rows x cols block of real-valued frames: speech features, hidden states,
// logits, centroids. Plain value type without autodiff.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols);
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  // Appends one row; the first row fixes the width of an empty matrix.
  void append_row(std::span<const double> row);
  void append_rows(const FeatureMatrix& other);
  FeatureMatrix slice_rows(std::size_t begin, std::size_t end) const;

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor to_tensor(const FeatureMatrix& m, bool requires_grad = false);
FeatureMatrix to_matrix(const Tensor& t);

// FMAT: "FMAT", u32 LE rows, u32 LE cols, rows*cols float32 LE. Values are
// narrowed to float32 on write.
std::vector<std::uint8_t> encode_fmat(const FeatureMatrix& m);
FeatureMatrix decode_fmat(std::span<const std::uint8_t> bytes);
void write_fmat(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_fmat(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace omni
