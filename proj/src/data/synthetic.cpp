#include <numbers>
#include <random>

#include "fslstm/data/dataset.hpp"
#include "fslstm/errors.hpp"

namespace fslstm::data {

GaugeRecord generate_synthetic(double alpha, double beta, double gamma, double noise_sd,
                               std::size_t T, std::uint64_t seed) {
  if (T < kWindow + 1)
    throw ConfigError("synthetic record needs T >= " + std::to_string(kWindow + 1) + ", got " +
                      std::to_string(T));
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
    throw ConfigError("synthetic noise_sd must be finite and >= 0");
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma))
    throw ConfigError("synthetic alpha, beta and gamma must be finite");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> rain(1.0 / 8.0);  // mean 8 mm on wet days
  constexpr double kWetProbability = 0.35;
  constexpr double kWalkStep = 0.05;

  GaugeRecord r;
  r.id = "synthetic";
  r.start = parse_date("1990-10-01");
  r.attributes.lon = -53.0 + 8.5 * unit(rng);
  r.attributes.lat = -26.5 + 6.5 * unit(rng);
  for (double& v : r.attributes.values) v = unit(rng);
  r.resize(T);

  double w = 0.5;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < T; ++i) {
    w += kWalkStep * normal(rng);
    // Reflect into [0, 1]; repeated for steps that overshoot twice.
    while (w < 0.0 || w > 1.0) w = w < 0.0 ? -w : 2.0 - w;
    const double p = unit(rng) < kWetProbability ? rain(rng) : 0.0;
    double q = alpha * w * p + beta * w + gamma;
    if (noise_sd > 0.0) q += noise_sd * normal(rng);
    if (q < 0.0) {
      q = 0.0;
      ++clamped;
    }
    const double season =
        std::sin(2.0 * std::numbers::pi * static_cast<double>(day_of_year(r.date(i))) / 365.25);
    const double tmean = 20.0 + 5.0 * season + normal(rng);
    r.precip[i] = p;
    r.soil_moisture[i] = w;
    r.tmean[i] = tmean;
    r.tmin[i] = tmean - 4.0 - 2.0 * unit(rng);
    r.tmax[i] = tmean + 4.0 + 2.0 * unit(rng);
    r.streamflow[i] = q;
    r.quality[i] = 1;
  }
  if (static_cast<double>(clamped) > 0.01 * static_cast<double>(T))
    throw DataError("synthetic parameters are degenerate: " + std::to_string(clamped) + " of " +
                    std::to_string(T) + " days clamped at zero streamflow");
  return r;
}

}  // namespace fslstm::data
