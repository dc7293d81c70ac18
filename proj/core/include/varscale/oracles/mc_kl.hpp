#pragma once

#include <cstdint>

#include "varscale/rng.hpp"

namespace varscale::oracles {

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo KL(N(mu, sigma^2) || N(mu0, sigma0^2)) as the sample mean of
// log q(a) - log p(a), a ~ q. Requires n_samples >= 10^4.
McEstimate mc_kl(double mu, double sigma, double mu0, double sigma0,
                 std::int64_t n_samples, Rng& rng);

}  // namespace varscale::oracles
