#pragma once

// Standard-normal simulation draws for the latent-noise integral, indexed
// (observation, draw, dimension) and fully determined by (seed, scheme, shape).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iclv {

enum class DrawScheme { pseudo_random, halton };

std::string_view to_string(DrawScheme s);
std::optional<DrawScheme> parse_draw_scheme(std::string_view s);

/// Standard normal quantile function.
double normal_quantile(double u);

/// SplitMix64 step; used to derive independent substreams from one seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// Uniform (0,1) generator with a fixed, platform-independent mapping from
/// the 64-bit engine output.
class UniformStream {
public:
  explicit UniformStream(std::uint64_t seed);
  double next();

private:
  std::uint64_t state_[4];
};

struct HaltonOptions {
  bool scramble = true;
  std::size_t burn = 10;  ///< leading points discarded
  std::size_t leap = 1;   ///< stride between used points
};

class SimulationDraws {
public:
  SimulationDraws() = default;

  static SimulationDraws generate(std::size_t n_obs, std::size_t n_draws, std::size_t dims, std::uint64_t seed,
                                  DrawScheme scheme, const HaltonOptions& halton = {});
  /// Wraps explicit values laid out (obs, draw, dim).
  static SimulationDraws from_values(std::size_t n_obs, std::size_t n_draws, std::size_t dims,
                                     std::vector<double> values);

  std::size_t n_obs() const { return n_obs_; }
  std::size_t n_draws() const { return n_draws_; }
  std::size_t dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }
  DrawScheme scheme() const { return scheme_; }

  double at(std::size_t obs, std::size_t r, std::size_t dim) const {
    return values_[(obs * n_draws_ + r) * dims_ + dim];
  }
  /// The n_draws x dims block of one observation, draw-major.
  std::span<const double> observation(std::size_t obs) const {
    return {values_.data() + obs * n_draws_ * dims_, n_draws_ * dims_};
  }

  /// Binary cache file; load verifies the key (seed, scheme, shape).
  void save(const std::string& path) const;
  static std::optional<SimulationDraws> load(const std::string& path, std::size_t n_obs, std::size_t n_draws,
                                             std::size_t dims, std::uint64_t seed, DrawScheme scheme);

  bool operator==(const SimulationDraws&) const = default;

private:
  std::size_t n_obs_ = 0;
  std::size_t n_draws_ = 0;
  std::size_t dims_ = 0;
  std::uint64_t seed_ = 0;
  DrawScheme scheme_ = DrawScheme::halton;
  std::vector<double> values_;
};

}  // namespace iclv
