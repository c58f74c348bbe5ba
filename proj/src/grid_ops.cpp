#include "unroll/grid_ops.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace unroll {
namespace {

void require_kernel_args(double width, std::size_t support) {
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw std::invalid_argument("kernel width must be positive, got " + std::to_string(width));
  }
  if (support < 3 || support % 2 == 0) {
    throw std::invalid_argument("kernel support must be odd and >= 3, got " +
                                std::to_string(support));
  }
}

// Unnormalized samples exp(-r^2 / (2 w^2)) and the squared radii.
void sample_gaussian(double width, std::size_t support, Image& g, Image& r2) {
  g = Image(support, support);
  r2 = Image(support, support);
  const double c = 0.5 * static_cast<double>(support - 1);
  for (std::size_t i = 0; i < support; ++i) {
    for (std::size_t j = 0; j < support; ++j) {
      const double dx = static_cast<double>(i) - c;
      const double dy = static_cast<double>(j) - c;
      r2(i, j) = dx * dx + dy * dy;
      g(i, j) = std::exp(-r2(i, j) / (2.0 * width * width));
    }
  }
}

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

// Plans are created once per grid size under a lock; execution through the
// new-array interface is thread-safe.
const FftPlans& plans_for(std::size_t rows, std::size_t cols) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::size_t>, FftPlans> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find({rows, cols});
  if (it != cache.end()) return it->second;

  const std::size_t half = cols / 2 + 1;
  double* real = fftw_alloc_real(rows * cols);
  fftw_complex* cplx = fftw_alloc_complex(rows * half);
  FftPlans plans;
  plans.forward = fftw_plan_dft_r2c_2d(static_cast<int>(rows), static_cast<int>(cols), real,
                                       cplx, FFTW_ESTIMATE);
  plans.backward = fftw_plan_dft_c2r_2d(static_cast<int>(rows), static_cast<int>(cols), cplx,
                                        real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(cplx);
  return cache.emplace(std::make_pair(rows, cols), plans).first->second;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

Spectrum multiply_spectra(Spectrum a, const Spectrum& b, bool conjugate) {
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    a.values[i] *= conjugate ? std::conj(b.values[i]) : b.values[i];
  }
  return a;
}

void require_fits(const Image& img, const Image& kernel) {
  if (kernel.rows() > img.rows() || kernel.cols() > img.cols()) {
    throw std::invalid_argument("convolve: kernel " + std::to_string(kernel.rows()) + "x" +
                                std::to_string(kernel.cols()) + " larger than image " +
                                std::to_string(img.rows()) + "x" + std::to_string(img.cols()));
  }
}

}  // namespace

std::size_t default_support(double width) {
  if (!(width > 0.0)) {
    throw std::invalid_argument("kernel width must be positive, got " + std::to_string(width));
  }
  return 6 * static_cast<std::size_t>(std::ceil(width)) + 1;
}

double width_from_fwhm(double fwhm, double pixel_size) {
  return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2)) / pixel_size;
}

PsfKernel gaussian_kernel(double width, std::size_t support) {
  require_kernel_args(width, support);
  Image g, r2;
  sample_gaussian(width, support, g, r2);
  g *= 1.0 / sum(g);
  return PsfKernel{width, std::move(g)};
}

Image squared_kernel(double width, std::size_t support) {
  const PsfKernel h = gaussian_kernel(width, support);
  return hadamard(h.weights, h.weights);
}

Image gaussian_kernel_width_derivative(double width, std::size_t support) {
  require_kernel_args(width, support);
  Image g, r2;
  sample_gaussian(width, support, g, r2);
  g *= 1.0 / sum(g);
  // h_i = g_i / Z  =>  dh_i/dw = h_i (r_i^2 - sum_j h_j r_j^2) / w^3
  const double mean_r2 = dot(g, r2);
  const double w3 = width * width * width;
  Image out(support, support);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] * (r2[i] - mean_r2) / w3;
  return out;
}

Image kernel_width_derivative(double width, std::size_t support) {
  const PsfKernel h = gaussian_kernel(width, support);
  Image out = hadamard(h.weights, gaussian_kernel_width_derivative(width, support));
  out *= 2.0;
  return out;
}

Image kernel_width_derivative_closed_form(double width, std::size_t support) {
  require_kernel_args(width, support);
  Image g, r2;
  sample_gaussian(width, support, g, r2);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double w2 = width * width;
  const double scale = 1.0 / (2.0 * pi2 * std::pow(width, 5));
  Image out(support, support);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(-r2[i] / w2) * scale * (r2[i] / w2 - 2.0);
  }
  return out;
}

double empirical_fwhm(const Image& kernel) {
  const std::size_t c = (kernel.rows() - 1) / 2;
  const std::size_t cc = (kernel.cols() - 1) / 2;
  const double half = 0.5 * kernel(c, cc);
  for (std::size_t j = cc + 1; j < kernel.cols(); ++j) {
    const double prev = kernel(c, j - 1);
    const double cur = kernel(c, j);
    if (cur <= half) {
      const double x = static_cast<double>(j - 1) + (prev - half) / (prev - cur);
      return 2.0 * (x - static_cast<double>(cc));
    }
  }
  throw std::invalid_argument("empirical_fwhm: kernel support too small to reach half maximum");
}

double empirical_std(const Image& kernel) {
  const double cc = 0.5 * static_cast<double>(kernel.cols() - 1);
  double mass = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < kernel.rows(); ++i) {
    for (std::size_t j = 0; j < kernel.cols(); ++j) {
      const double dx = static_cast<double>(j) - cc;
      mass += kernel(i, j);
      second += kernel(i, j) * dx * dx;
    }
  }
  return std::sqrt(second / mass);
}

Spectrum forward_fft(const Image& img) {
  const std::size_t rows = img.rows();
  const std::size_t cols = img.cols();
  const std::size_t half = cols / 2 + 1;
  const FftPlans& plans = plans_for(rows, cols);
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(rows * cols));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(rows * half));
  std::copy(img.values().begin(), img.values().end(), in.get());
  fftw_execute_dft_r2c(plans.forward, in.get(), out.get());
  Spectrum spec{rows, cols, std::vector<std::complex<double>>(rows * half)};
  for (std::size_t i = 0; i < rows * half; ++i) spec.values[i] = {out.get()[i][0], out.get()[i][1]};
  return spec;
}

Image inverse_fft(const Spectrum& spec) {
  const std::size_t rows = spec.rows;
  const std::size_t cols = spec.cols;
  const std::size_t half = cols / 2 + 1;
  const FftPlans& plans = plans_for(rows, cols);
  std::unique_ptr<fftw_complex, FftwDeleter> in(fftw_alloc_complex(rows * half));
  std::unique_ptr<double, FftwDeleter> out(fftw_alloc_real(rows * cols));
  for (std::size_t i = 0; i < rows * half; ++i) {
    in.get()[i][0] = spec.values[i].real();
    in.get()[i][1] = spec.values[i].imag();
  }
  fftw_execute_dft_c2r(plans.backward, in.get(), out.get());
  Image img(rows, cols);
  const double scale = 1.0 / static_cast<double>(rows * cols);
  for (std::size_t i = 0; i < rows * cols; ++i) img[i] = out.get()[i] * scale;
  return img;
}

Spectrum kernel_spectrum(const Image& kernel, std::size_t rows, std::size_t cols) {
  if (kernel.rows() > rows || kernel.cols() > cols) {
    throw std::invalid_argument("kernel_spectrum: kernel larger than grid");
  }
  Image wrapped(rows, cols);
  const std::size_t cr = (kernel.rows() - 1) / 2;
  const std::size_t cc = (kernel.cols() - 1) / 2;
  for (std::size_t a = 0; a < kernel.rows(); ++a) {
    for (std::size_t b = 0; b < kernel.cols(); ++b) {
      const std::size_t r = (a + rows - cr) % rows;
      const std::size_t c = (b + cols - cc) % cols;
      wrapped(r, c) += kernel(a, b);
    }
  }
  return forward_fft(wrapped);
}

Image convolve(const Image& img, const Image& kernel) {
  require_fits(img, kernel);
  return inverse_fft(multiply_spectra(forward_fft(img),
                                      kernel_spectrum(kernel, img.rows(), img.cols()), false));
}

Image convolve(const Image& img, const PsfKernel& kernel) { return convolve(img, kernel.weights); }

Image convolve_adjoint(const Image& img, const Image& kernel) {
  require_fits(img, kernel);
  return inverse_fft(multiply_spectra(forward_fft(img),
                                      kernel_spectrum(kernel, img.rows(), img.cols()), true));
}

Image downsample(const Image& img, std::size_t factor) {
  if (factor == 0 || img.rows() % factor != 0 || img.cols() % factor != 0) {
    throw std::invalid_argument("downsample: " + std::to_string(img.rows()) + "x" +
                                std::to_string(img.cols()) + " not divisible by factor " +
                                std::to_string(factor));
  }
  if (factor == 1) return img;
  Image out(img.rows() / factor, img.cols() / factor);
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) out(r / factor, c / factor) += img(r, c);
  }
  return out;
}

Image upsample_adjoint(const Image& img, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("upsample_adjoint: factor must be positive");
  if (factor == 1) return img;
  Image out(img.rows() * factor, img.cols() * factor);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = img(r / factor, c / factor);
  }
  return out;
}

ForwardModel::ForwardModel(double width, std::size_t factor, KernelMode mode,
                           std::size_t fine_rows, std::size_t fine_cols, std::size_t support)
    : width_(width),
      factor_(factor),
      mode_(mode),
      fine_rows_(fine_rows),
      fine_cols_(fine_cols),
      fixed_support_(support),
      support_(support == 0 ? default_support(width) : support) {
  if (factor_ == 0 || fine_rows_ % factor_ != 0 || fine_cols_ % factor_ != 0) {
    throw std::invalid_argument("ForwardModel: fine grid " + std::to_string(fine_rows_) + "x" +
                                std::to_string(fine_cols_) + " not divisible by factor " +
                                std::to_string(factor_));
  }
  if (mode_ == KernelMode::Squared && factor_ != 1) {
    throw std::invalid_argument("ForwardModel: squared-kernel mode requires factor 1");
  }
  if (support_ > fine_rows_ || support_ > fine_cols_) {
    throw std::invalid_argument("ForwardModel: kernel support " + std::to_string(support_) +
                                " exceeds fine grid " + std::to_string(fine_rows_) + "x" +
                                std::to_string(fine_cols_));
  }
  if (mode_ == KernelMode::Standard) {
    kernel_ = std::make_shared<const Image>(gaussian_kernel(width_, support_).weights);
    dkernel_ = std::make_shared<const Image>(gaussian_kernel_width_derivative(width_, support_));
  } else {
    kernel_ = std::make_shared<const Image>(squared_kernel(width_, support_));
    dkernel_ = std::make_shared<const Image>(kernel_width_derivative(width_, support_));
  }
  spectrum_ = std::make_shared<const Spectrum>(kernel_spectrum(*kernel_, fine_rows_, fine_cols_));
  dspectrum_ =
      std::make_shared<const Spectrum>(kernel_spectrum(*dkernel_, fine_rows_, fine_cols_));
}

Image ForwardModel::multiply(const Image& fine, const Spectrum& spectrum, bool conjugate) const {
  return inverse_fft(multiply_spectra(forward_fft(fine), spectrum, conjugate));
}

Image ForwardModel::apply(const Image& u) const {
  if (u.rows() != fine_rows_ || u.cols() != fine_cols_) {
    throw std::invalid_argument("apply_A: expected " + std::to_string(fine_rows_) + "x" +
                                std::to_string(fine_cols_) + " input, got " +
                                std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
  }
  return downsample(multiply(u, *spectrum_, false), factor_);
}

Image ForwardModel::apply_adjoint(const Image& r) const {
  if (r.rows() != coarse_rows() || r.cols() != coarse_cols()) {
    throw std::invalid_argument("apply_At: expected " + std::to_string(coarse_rows()) + "x" +
                                std::to_string(coarse_cols()) + " input, got " +
                                std::to_string(r.rows()) + "x" + std::to_string(r.cols()));
  }
  return multiply(upsample_adjoint(r, factor_), *spectrum_, true);
}

Image ForwardModel::apply_width_derivative(const Image& u) const {
  if (u.rows() != fine_rows_ || u.cols() != fine_cols_) {
    throw std::invalid_argument("apply_width_derivative: shape mismatch");
  }
  return downsample(multiply(u, *dspectrum_, false), factor_);
}

Image ForwardModel::apply_width_derivative_adjoint(const Image& r) const {
  if (r.rows() != coarse_rows() || r.cols() != coarse_cols()) {
    throw std::invalid_argument("apply_width_derivative_adjoint: shape mismatch");
  }
  return multiply(upsample_adjoint(r, factor_), *dspectrum_, true);
}

ForwardModel ForwardModel::with_width(double width) const {
  return ForwardModel(width, factor_, mode_, fine_rows_, fine_cols_, fixed_support_);
}

double operator_norm_sq(const ForwardModel& model) {
  const double L = static_cast<double>(model.factor());
  const double mass = sum(model.kernel());
  return L * L * mass * mass;
}

Image apply_A(const ForwardModel& model, const Image& u) { return model.apply(u); }
Image apply_At(const ForwardModel& model, const Image& r) { return model.apply_adjoint(r); }

}  // namespace unroll
