#ifndef UNROLL_GRID_OPS_HPP
#define UNROLL_GRID_OPS_HPP

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include "unroll/image.hpp"

namespace unroll {

// Truncated, unit-sum isotropic Gaussian sampled on an odd square support.
struct PsfKernel {
  double width = 0.0;  // standard deviation in fine-grid pixels
  Image weights;

  std::size_t support() const { return weights.rows(); }
};

// 6*ceil(width)+1, the support used whenever none is given explicitly.
std::size_t default_support(double width);

// FWHM (nm) -> standard deviation in pixels of the given size (nm).
double width_from_fwhm(double fwhm, double pixel_size);

PsfKernel gaussian_kernel(double width, std::size_t support);

// Entrywise square of the unit-sum kernel. Not renormalized.
Image squared_kernel(double width, std::size_t support);

// Exact derivative of gaussian_kernel(width, support).weights w.r.t. width,
// including the dependence of the normalization constant.
Image gaussian_kernel_width_derivative(double width, std::size_t support);

// Exact derivative of squared_kernel(width, support) w.r.t. width.
Image kernel_width_derivative(double width, std::size_t support);

// Closed form for d/dwidth of the squared *continuous* Gaussian,
//   exp(-r^2/w^2) / (2 pi^2 w^5) * (r^2/w^2 - 2),
// with r measured from the support center. Agrees with
// kernel_width_derivative once the support covers the kernel mass.
Image kernel_width_derivative_closed_form(double width, std::size_t support);

// Half-maximum width of the kernel's central row, linearly interpolated.
double empirical_fwhm(const Image& kernel);

// Standard deviation along one axis of a non-negative kernel (treated as a
// mass distribution around its center).
double empirical_std(const Image& kernel);

// Periodic 2-D convolution; the kernel's center sits at ((rows-1)/2, (cols-1)/2).
Image convolve(const Image& img, const Image& kernel);
Image convolve(const Image& img, const PsfKernel& kernel);
// Adjoint of convolve(., kernel) (correlation with the kernel).
Image convolve_adjoint(const Image& img, const Image& kernel);

// Sum of every factor x factor patch.
Image downsample(const Image& img, std::size_t factor);
// Replicates every coarse value over its factor x factor patch.
Image upsample_adjoint(const Image& img, std::size_t factor);

// Half-spectrum of a real image, rows x (cols/2+1).
struct Spectrum {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> values;
};

Spectrum forward_fft(const Image& img);
Image inverse_fft(const Spectrum& spec);
// Spectrum of `kernel` wrapped onto a rows x cols periodic grid, center at 0.
Spectrum kernel_spectrum(const Image& kernel, std::size_t rows, std::size_t cols);

enum class KernelMode { Standard, Squared };

// A = S H (standard) or A = H^2 with the squared kernel (fluctuation model).
class ForwardModel {
 public:
  // support == 0 selects default_support(width).
  ForwardModel(double width, std::size_t factor, KernelMode mode, std::size_t fine_rows,
               std::size_t fine_cols, std::size_t support = 0);

  double width() const { return width_; }
  std::size_t factor() const { return factor_; }
  KernelMode mode() const { return mode_; }
  std::size_t support() const { return support_; }
  std::size_t fixed_support() const { return fixed_support_; }
  std::size_t fine_rows() const { return fine_rows_; }
  std::size_t fine_cols() const { return fine_cols_; }
  std::size_t coarse_rows() const { return fine_rows_ / factor_; }
  std::size_t coarse_cols() const { return fine_cols_ / factor_; }

  // The kernel actually applied (h or h^2) and its width derivative.
  const Image& kernel() const { return *kernel_; }
  const Image& kernel_derivative() const { return *dkernel_; }

  Image apply(const Image& u) const;
  Image apply_adjoint(const Image& r) const;
  // (dA/dwidth) u and its adjoint.
  Image apply_width_derivative(const Image& u) const;
  Image apply_width_derivative_adjoint(const Image& r) const;

  // Same model with a different kernel width; a fixed support is kept,
  // an automatic one is re-derived from the new width.
  ForwardModel with_width(double width) const;

 private:
  Image multiply(const Image& fine, const Spectrum& spectrum, bool conjugate) const;

  double width_;
  std::size_t factor_;
  KernelMode mode_;
  std::size_t fine_rows_;
  std::size_t fine_cols_;
  std::size_t fixed_support_;
  std::size_t support_;
  std::shared_ptr<const Image> kernel_;
  std::shared_ptr<const Image> dkernel_;
  std::shared_ptr<const Spectrum> spectrum_;
  std::shared_ptr<const Spectrum> dspectrum_;
};

// ||A||^2 = L^2 (sum of kernel)^2, attained by the constant image.
double operator_norm_sq(const ForwardModel& model);

Image apply_A(const ForwardModel& model, const Image& u);
Image apply_At(const ForwardModel& model, const Image& r);

}  // namespace unroll

#endif  // UNROLL_GRID_OPS_HPP
