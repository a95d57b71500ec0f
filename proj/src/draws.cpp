#include "iclv/draws.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "iclv/error.hpp"
#include "iclv/text.hpp"

namespace iclv {

namespace {

constexpr std::array<std::uint32_t, 16> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
constexpr char kMagic[8] = {'I', 'C', 'L', 'V', 'D', 'R', 'W', '1'};

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

double clamp_unit(double u) {
  constexpr double lo = 1e-16;
  return std::clamp(u, lo, 1.0 - 1e-16);
}

// Radical inverse of `index` in `base`, optionally with one digit permutation
// per digit position (random-start scrambling).
class HaltonDimension {
public:
  HaltonDimension(std::uint32_t base, bool scramble, UniformStream& rng) : base_(base) {
    // enough digits to resolve 2^-53
    digits_ = static_cast<int>(std::ceil(53.0 * std::log(2.0) / std::log(static_cast<double>(base))));
    perms_.resize(static_cast<std::size_t>(digits_) * base);
    for (int d = 0; d < digits_; ++d) {
      auto* p = perms_.data() + static_cast<std::size_t>(d) * base;
      std::iota(p, p + base, 0u);
      if (scramble) {
        for (std::uint32_t i = base - 1; i > 0; --i) {
          const auto j = static_cast<std::uint32_t>(rng.next() * (i + 1));
          std::swap(p[i], p[std::min(j, i)]);
        }
      }
    }
  }

  double operator()(std::uint64_t index) const {
    double value = 0.0;
    double scale = 1.0 / base_;
    for (int d = 0; d < digits_; ++d) {
      const auto digit = static_cast<std::uint32_t>(index % base_);
      index /= base_;
      value += perms_[static_cast<std::size_t>(d) * base_ + digit] * scale;
      scale /= base_;
    }
    return value;
  }

private:
  std::uint32_t base_;
  int digits_ = 0;
  std::vector<std::uint32_t> perms_;
};

}  // namespace

std::string_view to_string(DrawScheme s) { return s == DrawScheme::halton ? "halton" : "pseudo_random"; }

std::optional<DrawScheme> parse_draw_scheme(std::string_view s) {
  const auto v = text::to_lower(text::trim(s));
  if (v == "halton") return DrawScheme::halton;
  if (v == "pseudo_random" || v == "pseudo-random" || v == "prng" || v == "random") return DrawScheme::pseudo_random;
  return std::nullopt;
}

double normal_quantile(double u) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u); }

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

UniformStream::UniformStream(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

// xoshiro256** with the 53 high bits mapped to the open interval (0,1).
double UniformStream::next() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return (static_cast<double>(result >> 11) + 0.5) * 0x1.0p-53;
}

SimulationDraws SimulationDraws::generate(std::size_t n_obs, std::size_t n_draws, std::size_t dims, std::uint64_t seed,
                                          DrawScheme scheme, const HaltonOptions& halton) {
  if (n_draws == 0) throw NumericError("draw count must be at least 1");
  if (dims > kPrimes.size()) throw NumericError("too many draw dimensions");
  SimulationDraws d;
  d.n_obs_ = n_obs;
  d.n_draws_ = n_draws;
  d.dims_ = dims;
  d.seed_ = seed;
  d.scheme_ = scheme;
  d.values_.resize(n_obs * n_draws * dims);
  if (scheme == DrawScheme::pseudo_random) {
    UniformStream rng(seed);
    for (auto& v : d.values_) v = normal_quantile(rng.next());
    return d;
  }
  UniformStream rng(seed);
  const std::size_t leap = std::max<std::size_t>(1, halton.leap);
  for (std::size_t k = 0; k < dims; ++k) {
    const HaltonDimension seq(kPrimes[k], halton.scramble, rng);
    for (std::size_t i = 0; i < n_obs * n_draws; ++i) {
      const auto index = static_cast<std::uint64_t>(halton.burn + 1 + i * leap);
      d.values_[i * dims + k] = normal_quantile(clamp_unit(seq(index)));
    }
  }
  return d;
}

SimulationDraws SimulationDraws::from_values(std::size_t n_obs, std::size_t n_draws, std::size_t dims,
                                             std::vector<double> values) {
  if (n_draws == 0) throw NumericError("draw count must be at least 1");
  if (values.size() != n_obs * n_draws * dims) throw NumericError("draw values do not match the requested shape");
  SimulationDraws d;
  d.n_obs_ = n_obs;
  d.n_draws_ = n_draws;
  d.dims_ = dims;
  d.values_ = std::move(values);
  return d;
}

void SimulationDraws::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write draws cache '" + path + "'");
  const std::uint64_t header[5] = {n_obs_, n_draws_, dims_, seed_, static_cast<std::uint64_t>(scheme_)};
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
}

std::optional<SimulationDraws> SimulationDraws::load(const std::string& path, std::size_t n_obs, std::size_t n_draws,
                                                     std::size_t dims, std::uint64_t seed, DrawScheme scheme) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t header[5];
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) return std::nullopt;
  if (header[0] != n_obs || header[1] != n_draws || header[2] != dims || header[3] != seed ||
      header[4] != static_cast<std::uint64_t>(scheme))
    return std::nullopt;
  SimulationDraws d;
  d.n_obs_ = n_obs;
  d.n_draws_ = n_draws;
  d.dims_ = dims;
  d.seed_ = seed;
  d.scheme_ = scheme;
  d.values_.resize(n_obs * n_draws * dims);
  in.read(reinterpret_cast<char*>(d.values_.data()), static_cast<std::streamsize>(d.values_.size() * sizeof(double)));
  if (!in) return std::nullopt;
  return d;
}

}  // namespace iclv
