#include "ctscore/particles.hpp"

#include <algorithm>
#include <cmath>

#include "ctscore/errors.hpp"

namespace ctscore {

double log_sum_exp(std::span<const double> log_weights) {
  double mx = kNegInf;
  for (double v : log_weights) {
    if (v > mx) mx = v;
  }
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double v : log_weights) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double normalize_log_weights(std::span<const double> log_weights, std::span<double> out) {
  double mx = kNegInf;
  for (double v : log_weights) {
    if (v > mx) mx = v;
  }
  if (!std::isfinite(mx)) throw WeightCollapseError("weight collapse: no finite log-weight");
  double sum = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    out[i] = std::exp(log_weights[i] - mx);
    sum += out[i];
  }
  for (auto& w : out) w /= sum;
  return mx + std::log(sum);
}

double effective_sample_size(std::span<const double> normalized) {
  double sq = 0.0;
  for (double w : normalized) sq += w * w;
  return 1.0 / sq;
}

std::size_t sample_cumulative(std::span<const double> cumulative, double u) {
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
  if (it == cumulative.end()) {
    // u rounded up to the total: take the last cell with positive mass.
    idx = cumulative.size() - 1;
    while (idx > 0 && cumulative[idx] == cumulative[idx - 1]) --idx;
  }
  return idx;
}

void multinomial_resample(std::span<const double> normalized, std::span<std::size_t> ancestors,
                          RandomStream& rng) {
  const std::size_t n = normalized.size();
  const std::size_t m = ancestors.size();
  // Sorted uniforms via normalized exponential spacings, then one sweep.
  std::vector<double> spacings(m + 1);
  double total = 0.0;
  for (auto& e : spacings) {
    e = -std::log1p(-rng.uniform());
    total += e;
  }
  double cum_u = 0.0;
  double cum_w = normalized[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < m; ++i) {
    cum_u += spacings[i] / total;
    while (cum_u > cum_w && j + 1 < n) cum_w += normalized[++j];
    // Never land on a zero-weight particle because of rounding at the tail.
    std::size_t pick = j;
    while (normalized[pick] == 0.0 && pick > 0) --pick;
    ancestors[i] = pick;
  }
  // Exchangeable output order.
  std::shuffle(ancestors.begin(), ancestors.end(), rng.engine());
}

}  // namespace ctscore
