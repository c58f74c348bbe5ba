#ifndef UNROLL_LOSSES_HPP
#define UNROLL_LOSSES_HPP

#include <optional>

#include "unroll/image.hpp"

namespace unroll {

// Smoothed step with threshold delta, half-level point c = delta + c0 and
// cubic smoothing intervals of width eps at both corners.
struct BinarizationParams {
  double delta = 0.0;
  double c0 = 0.01;
  double eps = 1e-4;

  double c() const { return delta + c0; }
};

struct HuberParams {
  double gamma = 1e-2;
};

double loss_l2(const Image& u, const Image& g);

double huber(double s, double gamma);
double huber_deriv(double s, double gamma);

// Peak level p used by the binarization: max of the image, or 1 when the
// image has no positive entry.
double binarization_peak(const Image& s);

double binarize(double s, const BinarizationParams& params, double peak);
// dB/ds at fixed delta.
double binarize_ds(double s, const BinarizationParams& params, double peak);
// dB/ddelta at fixed s, c0 and peak.
double binarize_ddelta(double s, const BinarizationParams& params, double peak);

// The image versions take the peak from the input unless one is given.
Image binarize(const Image& s, const BinarizationParams& params,
               std::optional<double> peak = std::nullopt);
Image binarize_ds(const Image& s, const BinarizationParams& params,
                  std::optional<double> peak = std::nullopt);
Image binarize_ddelta(const Image& s, const BinarizationParams& params,
                      std::optional<double> peak = std::nullopt);

// sum_i huber((B(u) - gt_bin)_i^2)
double loss_l1(const Image& u, const Image& gt_bin, const BinarizationParams& bin,
               const HuberParams& hub, std::optional<double> peak = std::nullopt);

// Nonzero entries become `peak`, zeros stay zero.
Image binarize_ground_truth(const Image& g, double peak);

}  // namespace unroll

#endif  // UNROLL_LOSSES_HPP
