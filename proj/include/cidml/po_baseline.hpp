#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cidml/dataset.hpp"

namespace cidml {

struct BinEstimate {
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  double counterfactual_mean = 0.0;
  double actual_mean = 0.0;
  double delta = 0.0;  // actual_mean - counterfactual_mean
};

struct PoEstimate {
  double att = 0.0;
  std::vector<BinEstimate> bin_estimates;
  std::optional<std::pair<double, double>> ci_bootstrap;
  std::size_t n_bootstrap = 0;
  std::size_t bootstrap_failures = 0;
  std::size_t merged_bins = 0;
};

// Propensity-binning + regression-adjustment baseline. Customers fall into
// propensity-quantile bins (ties broken by customer id, so the estimate is
// order-independent); per bin a ridge model fit on controls predicts the
// treated counterfactual; bin deltas are averaged with treated-count weights.
// Bins lacking a treated customer or at least two controls are merged into
// their right neighbor (left for the last bin). n_bootstrap > 0 adds a
// customer-resampling percentile CI.
PoEstimate estimate_po(const Dataset& ds, const Eigen::VectorXd& e_hat,
                       int n_bins, int n_bootstrap, std::uint64_t seed,
                       double ridge_lambda = 1.0, double level = 0.95);

}  // namespace cidml
