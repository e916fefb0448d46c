#pragma once

// Brute-force references shared by the unit and acceptance tests.

#include "fplm/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fplm::oracle {

/// log of the double integral of L(y | h2, b2) pi(h2) pi(b2) over a
/// log-spaced box, trapezoid rule in log space. Global bandwidth only.
inline double quadrature_log_marginal(const bayes::BandwidthPosterior& post, double h2_lo, double h2_hi, double e2_lo,
                                      double e2_hi, int points = 240) {
  const double uh0 = std::log(h2_lo), duh = (std::log(h2_hi) - uh0) / (points - 1);
  const double ue0 = std::log(e2_lo), due = (std::log(e2_hi) - ue0) / (points - 1);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(points) * static_cast<std::size_t>(points));
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double h2 = std::exp(uh0 + i * duh);
    const auto draw = post.model().fit_at(std::sqrt(h2));
    const double wi = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    for (int j = 0; j < points; ++j) {
      const double e2 = std::exp(ue0 + j * due);
      const double wj = (j == 0 || j == points - 1) ? 0.5 : 1.0;
      const double lp = post.log_posterior({h2, e2, 0.0}, draw.residuals);
      const double t = lp + std::log(h2) + std::log(e2) + std::log(wi * wj);
      terms.push_back(t);
      top = std::max(top, t);
    }
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return top + std::log(s) + std::log(duh) + std::log(due);
}

}  // namespace fplm::oracle
