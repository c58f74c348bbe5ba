#ifndef UNROLL_SIMULATE_HPP
#define UNROLL_SIMULATE_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "unroll/grid_ops.hpp"
#include "unroll/image.hpp"
#include "unroll/outer_trainer.hpp"

namespace unroll {

// Deterministic random stream. Uniforms and normals are derived from the
// raw 64-bit engine output so results do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for sample `index` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class NoiseKind { Gaussian, Poisson };

struct NoiseConfig {
  NoiseKind kind = NoiseKind::Gaussian;
  double sigma = 0.15;       // Gaussian standard deviation
  double background = 0.0;   // Poisson background b
};

struct FrameGenConfig {
  std::size_t coarse = 32;  // m
  std::size_t factor = 4;   // L, fine side n = L m
  std::size_t emitters_lo = 19;
  std::size_t emitters_hi = 38;
  double intensity_lo = 100.0;
  double intensity_hi = 255.0;
  // When non-empty, intensities are drawn uniformly from these levels instead
  // of the continuous range.
  std::vector<double> levels;
  double width = 2.5;
  std::size_t support = 0;  // 0 = default for the width
  NoiseConfig noise;

  std::size_t fine() const { return coarse * factor; }
  ForwardModel model() const;
  void validate() const;
};

// Emitters that stay ON over several frames with categorical intensities.
struct EmissionConfig {
  std::size_t molecules = 400;        // positions the active emitters are drawn from
  double activations_per_frame = 5.0;  // mean new activations per frame
  double mean_on_frames = 4.0;         // geometric ON duration
  std::vector<double> level_probs{0.1, 0.25, 0.3, 0.25, 0.1};  // P(level = i)
  double level_scale = 1.0;            // intensity of level i is i * level_scale
};

struct FluctuationConfig {
  std::size_t size = 64;
  std::size_t frames = 1000;
  double width = 3.0;
  std::size_t support = 0;
  double sigma = 3.0;
  double on_fraction = 0.5;     // stationary ON probability q
  double mean_on_frames = 2.0;  // mean ON dwell; 1/(1-q) gives i.i.d. frames
  // Pattern generator
  std::size_t filaments_lo = 3;
  std::size_t filaments_hi = 5;
  double intensity = 32.0;
  std::size_t thickness = 0;  // stamp radius around each curve sample (0 = single pixel)

  void validate() const;
};

Image gen_sparse_frame(const FrameGenConfig& cfg, Rng& rng);
// A g + noise (Gaussian) or Poisson(A g + b).
Image corrupt(const Image& g, const ForwardModel& model, const NoiseConfig& noise, Rng& rng);

std::vector<Image> gen_emission_sequence(const FrameGenConfig& cfg, const EmissionConfig& em,
                                         std::size_t frames, Rng& rng);

// Superposed rasterized cubic Bezier curves.
Image gen_filament_pattern(const FluctuationConfig& cfg, Rng& rng);
// Independent two-state Markov blinking per emitter pixel.
std::vector<Image> gen_blinking_stack(const Image& pattern, const FluctuationConfig& cfg,
                                      Rng& rng);
// Unbiased per-pixel sample variance over the stack.
Image empirical_variance(const std::vector<Image>& stack);

struct FluctuationPair {
  Image vf;  // variance of the blurred, noisy stack
  Image vg;  // variance of the clean stack
};

FluctuationPair gen_fluctuation_pair(const Image& pattern, const FluctuationConfig& cfg,
                                     Rng& rng);

// ---- persistence -----------------------------------------------------------

// Flat array: 8-byte magic, uint32 rows, uint32 cols (little endian), then
// rows*cols little-endian float64 values in row-major order.
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

struct SampleSet {
  std::vector<Sample> samples;
  std::vector<std::uint64_t> seeds;
  // Generation metadata (JSON text): grids, forward model, noise, config.
  std::string metadata_json;
};

void save_sample_set(const SampleSet& set, const std::string& dir);
SampleSet load_sample_set(const std::string& dir);

}  // namespace unroll

#endif  // UNROLL_SIMULATE_HPP
