#include "mehmm/random.hpp"

#include "mehmm/error.hpp"

#include <cmath>
#include <vector>

namespace mehmm {

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (tags.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double gamma_draw(Rng& rng, double shape) {
  if (!(shape > 0.0)) throw NumericalError("gamma draw with non-positive shape");
  return std::gamma_distribution<double>(shape, 1.0)(rng);
}

int categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("categorical draw with zero total weight");
  double u = uniform01(rng) * total;
  int last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    last_positive = static_cast<int>(k);
    if (u < weights[k]) return static_cast<int>(k);
    u -= weights[k];
  }
  return last_positive;
}

Eigen::VectorXd dirichlet(Rng& rng, std::span<const double> concentration) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(concentration.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = gamma_draw(rng, concentration[k]);
    total += out[static_cast<Eigen::Index>(k)];
  }
  if (!(total > 0.0)) throw NumericalError("Dirichlet draw underflowed");
  return out / total;
}

double scaled_inv_chi2(Rng& rng, double df, double scale2) {
  if (!(df > 0.0)) throw NumericalError("scaled inverse chi-squared with non-positive degrees of freedom");
  const double x = 2.0 * gamma_draw(rng, df / 2.0);
  return df * scale2 / x;
}

}  // namespace mehmm
