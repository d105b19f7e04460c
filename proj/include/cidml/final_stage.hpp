#pragma once

#include <Eigen/Dense>
#include <utility>

#include "cidml/nuisance.hpp"
#include "cidml/weighting.hpp"

namespace cidml {

struct AttEstimate {
  double beta = 0.0;
  double var_homoscedastic = 0.0;
  double var_hc = 0.0;
  std::pair<double, double> ci_homoscedastic{0.0, 0.0};
  std::pair<double, double> ci_hc{0.0, 0.0};
  double level = 0.95;
  std::size_t n_used = 0;
  EstimandSpec estimand;
};

// beta = sum(w y~ d~) / sum(w d~^2); no intercept. Sums are deterministic
// pairwise reductions.
double weighted_ols_scalar(const Eigen::VectorXd& y_res,
                           const Eigen::VectorXd& d_res,
                           const Eigen::VectorXd& w);

// Sandwich variance with H = (D~' W D~)^-1 D~' W. Returns {homoscedastic,
// heteroscedasticity-consistent}: the HC form puts each customer's squared
// residual on the Sigma diagonal, the homoscedastic form uses the weighted
// mean squared residual (denominator sum of weights).
std::pair<double, double> sandwich_variance(const Eigen::VectorXd& y_res,
                                            const Eigen::VectorXd& d_res,
                                            const Eigen::VectorXd& w,
                                            double beta);

// Final stage on the weighted sample: residuals restricted to kept_indices,
// weighted OLS point estimate, both variance flavors, two-sided normal CIs.
// include_intercept=true adds an unpenalized intercept to the residual
// regression (off by default; the residuals are centered by construction).
AttEstimate estimate_att(const CrossFitResult& cf, const WeightedSample& ws,
                         double level = 0.95, bool include_intercept = false);

}  // namespace cidml
