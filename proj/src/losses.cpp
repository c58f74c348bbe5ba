#include "unroll/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unroll {
namespace {

void require_valid(const BinarizationParams& p) {
  if (!(p.eps > 0.0) || !(p.c0 > p.eps)) {
    throw std::invalid_argument("binarization requires 0 < eps < c0 (eps=" +
                                std::to_string(p.eps) + ", c0=" + std::to_string(p.c0) + ")");
  }
}

template <typename F>
Image map_image(const Image& s, F&& fn) {
  Image out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = fn(s[i]);
  return out;
}

}  // namespace

double loss_l2(const Image& u, const Image& g) {
  require_same_shape(u, g, "loss_l2");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - g[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

double huber(double s, double gamma) {
  if (s < 0.0) throw std::invalid_argument("huber: negative argument " + std::to_string(s));
  if (s <= gamma * gamma) return s / gamma;
  return 2.0 * std::sqrt(s) - gamma;
}

double huber_deriv(double s, double gamma) {
  if (s < 0.0) throw std::invalid_argument("huber_deriv: negative argument " + std::to_string(s));
  if (s <= gamma * gamma) return 1.0 / gamma;
  return 1.0 / std::sqrt(s);
}

double binarization_peak(const Image& s) {
  const double m = max_value(s);
  return m > 0.0 ? m : 1.0;
}

double binarize(double s, const BinarizationParams& p, double peak) {
  require_valid(p);
  const double slope = peak / (2.0 * p.c0);
  const double t = s - p.delta;
  const double top = 2.0 * p.c0;
  if (t <= 0.0) return 0.0;
  if (t < p.eps) return (2.0 - t / p.eps) * t * t / p.eps * slope;
  if (t <= top - p.eps) return slope * t;
  if (t < top) {
    const double q = top - t;
    return peak - (2.0 - q / p.eps) * q * q / p.eps * slope;
  }
  return peak;
}

double binarize_ds(double s, const BinarizationParams& p, double peak) {
  require_valid(p);
  const double slope = peak / (2.0 * p.c0);
  const double t = s - p.delta;
  const double top = 2.0 * p.c0;
  if (t <= 0.0) return 0.0;
  if (t < p.eps) return slope * (4.0 * t / p.eps - 3.0 * t * t / (p.eps * p.eps));
  if (t <= top - p.eps) return slope;
  if (t < top) {
    const double q = top - t;
    return slope * (4.0 * q / p.eps - 3.0 * q * q / (p.eps * p.eps));
  }
  return 0.0;
}

double binarize_ddelta(double s, const BinarizationParams& p, double peak) {
  require_valid(p);
  const double slope = peak / (2.0 * p.c0);
  const double d = p.delta;
  const double e = p.eps;
  const double c0 = p.c0;
  if (d >= s) return 0.0;
  if (d > s - e) {
    const double t = s - d;
    return slope * (3.0 * t * t / (e * e) - 4.0 * t / e);
  }
  if (d >= s + e - 2.0 * c0) return -slope;
  if (d > s - 2.0 * c0) {
    const double q = 2.0 * c0 - s + d;
    return -slope * (4.0 * q / e - 3.0 * q * q / (e * e));
  }
  return 0.0;
}

Image binarize(const Image& s, const BinarizationParams& params, std::optional<double> peak) {
  require_valid(params);
  const double pk = peak.value_or(binarization_peak(s));
  return map_image(s, [&](double x) { return binarize(x, params, pk); });
}

Image binarize_ds(const Image& s, const BinarizationParams& params, std::optional<double> peak) {
  require_valid(params);
  const double pk = peak.value_or(binarization_peak(s));
  return map_image(s, [&](double x) { return binarize_ds(x, params, pk); });
}

Image binarize_ddelta(const Image& s, const BinarizationParams& params,
                      std::optional<double> peak) {
  require_valid(params);
  const double pk = peak.value_or(binarization_peak(s));
  return map_image(s, [&](double x) { return binarize_ddelta(x, params, pk); });
}

double loss_l1(const Image& u, const Image& gt_bin, const BinarizationParams& bin,
               const HuberParams& hub, std::optional<double> peak) {
  require_same_shape(u, gt_bin, "loss_l1");
  const Image b = binarize(u, bin, peak);
  double acc = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double r = b[i] - gt_bin[i];
    acc += huber(r * r, hub.gamma);
  }
  return acc;
}

Image binarize_ground_truth(const Image& g, double peak) {
  return map_image(g, [&](double x) { return x != 0.0 ? peak : 0.0; });
}

}  // namespace unroll
