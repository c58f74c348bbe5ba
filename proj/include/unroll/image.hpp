#ifndef UNROLL_IMAGE_HPP
#define UNROLL_IMAGE_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unroll {

// Dense row-major 2-D array of doubles. Used for fine-grid reconstructions,
// coarse-grid data, kernels and adjoint carriers alike.
class Image {
 public:
  Image() = default;
  Image(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Image(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vector() const { return data_; }

  bool same_shape(const Image& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);

  bool operator==(const Image& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

// Throws std::invalid_argument naming `what` when the shapes differ.
void require_same_shape(const Image& a, const Image& b, const std::string& what);

double dot(const Image& a, const Image& b);
double sum(const Image& a);
double max_value(const Image& a);
double max_abs(const Image& a);
double norm2(const Image& a);
bool all_finite(const Image& a);

// Entrywise product.
Image hadamard(const Image& a, const Image& b);
Image clip_below(const Image& a, double lo);

}  // namespace unroll

#endif  // UNROLL_IMAGE_HPP
