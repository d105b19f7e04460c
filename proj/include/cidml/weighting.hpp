#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "cidml/nuisance.hpp"

namespace cidml {

enum class EstimandKind { ATE, ATT };

struct EstimandSpec {
  EstimandKind kind = EstimandKind::ATT;
  double alpha = 0.001;         // trim to [alpha, 1 - alpha]; 0 disables
  bool rescale = true;          // rescale propensities before filtering
  bool common_support = true;   // restrict to the min-max overlap interval

  void validate() const;
};

struct DropLog {
  std::size_t treated_common_support = 0;
  std::size_t control_common_support = 0;
  std::size_t treated_trimming = 0;
  std::size_t control_trimming = 0;

  std::size_t total() const {
    return treated_common_support + control_common_support + treated_trimming +
           control_trimming;
  }
};

struct WeightedSample {
  std::vector<int> kept_indices;  // ascending row indices into the dataset
  Eigen::VectorXd weights;        // per kept customer, > 0
  Eigen::VectorXd e_scaled;       // (rescaled) propensity per kept customer
  DropLog drop_log;
  EstimandSpec estimand;
};

// Eq.-(5)-style rescaling: e_i * (mean(d) / mean(e)), means over the combined
// population; output clamped into [1e-12, 1 - 1e-12].
Eigen::VectorXd rescale_propensities(const Eigen::VectorXd& e_hat,
                                     const std::vector<int>& d);

// Table-1 IPW weights. ATE: d/e + (1-d)/(1-e). ATT: d + (1-d) e/(1-e).
Eigen::VectorXd ipw_weights(const Eigen::VectorXd& e, const std::vector<int>& d,
                            EstimandKind kind);

// Pipeline: rescale -> common support -> trim -> weights. The treatment
// vector is passed explicitly because (d_res + e_hat) does not reproduce it
// exactly in floating point.
WeightedSample apply_support_and_trim(const CrossFitResult& cf,
                                      const std::vector<int>& treatment,
                                      const EstimandSpec& spec);

}  // namespace cidml
