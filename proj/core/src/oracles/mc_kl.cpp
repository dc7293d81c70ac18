#include "varscale/oracles/mc_kl.hpp"

#include <cmath>

#include "varscale/error.hpp"

namespace varscale::oracles {

namespace {

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

}  // namespace

McEstimate mc_kl(double mu, double sigma, double mu0, double sigma0,
                 std::int64_t n_samples, Rng& rng) {
  if (n_samples < 10000) throw ContractError("mc_kl needs at least 10^4 samples");
  if (!(sigma > 0.0) || !(sigma0 > 0.0)) throw ContractError("mc_kl needs positive sigmas");
  // Welford running mean/variance.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double a = mu + sigma * rng.normal();
    const double v = log_normal_pdf(a, mu, sigma) - log_normal_pdf(a, mu0, sigma0);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples))};
}

}  // namespace varscale::oracles
