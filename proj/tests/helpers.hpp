#ifndef UNROLL_TESTS_HELPERS_HPP
#define UNROLL_TESTS_HELPERS_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "unroll/grid_ops.hpp"
#include "unroll/image.hpp"
#include "unroll/simulate.hpp"

namespace testing {

inline unroll::Image random_image(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
  unroll::Rng rng(seed);
  unroll::Image img(rows, cols);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

inline double rel_diff(const unroll::Image& a, const unroll::Image& b) {
  const double nb = unroll::norm2(b);
  return unroll::norm2(a - b) / (nb > 0.0 ? nb : 1.0);
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1.0e-300, std::max(std::abs(a), std::abs(b)));
}

// Row-major flattening, matching Image storage.
inline Eigen::VectorXd as_vector(const unroll::Image& img) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(img.size()));
  for (std::size_t i = 0; i < img.size(); ++i) v(static_cast<Eigen::Index>(i)) = img[i];
  return v;
}

inline unroll::Image as_image(const Eigen::VectorXd& v, std::size_t rows, std::size_t cols) {
  unroll::Image img(rows, cols);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = v(static_cast<Eigen::Index>(i));
  return img;
}

// A materialized column by column from unit impulses.
inline Eigen::MatrixXd dense_A(const unroll::ForwardModel& model) {
  const std::size_t n = model.fine_rows() * model.fine_cols();
  const std::size_t m = model.coarse_rows() * model.coarse_cols();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    unroll::Image e(model.fine_rows(), model.fine_cols());
    e[j] = 1.0;
    A.col(static_cast<Eigen::Index>(j)) = as_vector(model.apply(e));
  }
  return A;
}

}  // namespace testing

#endif  // UNROLL_TESTS_HELPERS_HPP
