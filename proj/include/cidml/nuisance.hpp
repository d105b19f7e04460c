#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cidml/dataset.hpp"

namespace cidml {

// Per-feature location/scale learned from training data. Constant columns
// get scale 1 so they pass through unchanged.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

struct RidgeModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  std::optional<Standardizer> standardizer;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Minimizes ||y - Xw - b||^2 + lambda * ||w||^2 with the intercept left
// unpenalized, via normal equations on centered (optionally standardized)
// features. lambda = 0 on a rank-deficient design throws NumericalError.
RidgeModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     double lambda, bool standardize = false);

struct LogisticModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double l2 = 0.0;
  bool converged = false;
  int iterations = 0;
  std::optional<Standardizer> standardizer;

  // Probabilities clamped to [1e-12, 1 - 1e-12].
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const;
};

// L2-penalized Bernoulli maximum likelihood via IRLS with step halving.
// Separable data with l2 = 0 terminates at the iteration cap with
// converged = false instead of diverging.
LogisticModel fit_logistic(const Eigen::MatrixXd& X, const std::vector<int>& d,
                           double l2, int max_iter = 100, double tol = 1e-8,
                           bool standardize = false);

// Penalized Bernoulli log-likelihood of (coef, intercept) on (X, d);
// the objective fit_logistic maximizes.
double logistic_penalized_loglik(const Eigen::MatrixXd& X,
                                 const std::vector<int>& d,
                                 const Eigen::VectorXd& coef, double intercept,
                                 double l2);

// Settings for one nuisance model inside cross-fitting. An unset penalty
// triggers a grid search over {1e-3, ..., 1e3} scored by out-of-fold loss
// on a nested 2-fold split of the training complement.
struct NuisanceConfig {
  std::optional<double> penalty;
  bool standardize = true;
  int max_iter = 100;   // logistic only
  double tol = 1e-8;    // logistic only
};

// A fitted per-fold model reduced to what cross-fitting needs: a scorer
// plus a small info blob (chosen hyperparameters, convergence) for reports.
struct FittedNuisance {
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> predict;
  nlohmann::json info;
};

// Extension point: any callable with this shape can serve as a nuisance
// learner in cross_fit (see ModelRegistry in pipeline.hpp).
using OutcomeFitter = std::function<FittedNuisance(const Eigen::MatrixXd& X,
                                                   const Eigen::VectorXd& y)>;
using PropensityFitter = std::function<FittedNuisance(const Eigen::MatrixXd& X,
                                                      const std::vector<int>& d)>;

OutcomeFitter make_ridge_fitter(const NuisanceConfig& cfg);
PropensityFitter make_logistic_fitter(const NuisanceConfig& cfg);

struct FoldMetrics {
  int fold = 0;
  double outcome_r2 = 0.0;
  double propensity_auc = 0.0;
  nlohmann::json outcome_info;
  nlohmann::json propensity_info;
};

struct CrossFitResult {
  Eigen::VectorXd y_hat;  // out-of-fold E(Y|X)
  Eigen::VectorXd e_hat;  // out-of-fold E(D|X), inside (0,1)
  Eigen::VectorXd y_res;  // Y - y_hat, exact elementwise
  Eigen::VectorXd d_res;  // D - e_hat, exact elementwise
  FoldPlan fold_plan;
  std::vector<FoldMetrics> fit_metrics;
};

// DML2 cross-fitting: for each fold, models trained on the complement score
// the held-out fold; residuals are pooled across folds.
CrossFitResult cross_fit(const Dataset& ds, const FoldPlan& plan,
                         const OutcomeFitter& outcome,
                         const PropensityFitter& propensity);

CrossFitResult cross_fit(const Dataset& ds, const FoldPlan& plan,
                         const NuisanceConfig& outcome_cfg,
                         const NuisanceConfig& propensity_cfg);

// Rank-based (Mann-Whitney) AUC with average ranks for ties.
double rank_auc(const Eigen::VectorXd& scores, const std::vector<int>& labels);

}  // namespace cidml
