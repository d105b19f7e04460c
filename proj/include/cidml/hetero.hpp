#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cidml/dataset.hpp"
#include "cidml/final_stage.hpp"
#include "cidml/nuisance.hpp"
#include "cidml/weighting.hpp"

namespace cidml {

struct PcaBasis {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;      // empty when inputs were not standardized
  Eigen::MatrixXd components;  // M x R, orthonormal columns, descending variance
  Eigen::VectorXd explained_variance_ratio;  // length R, nonincreasing
  Eigen::VectorXd spectrum;    // all variance ratios, for the scree curve
  Eigen::VectorXd component_sd;  // sqrt(eigenvalue) per retained component

  int r() const { return static_cast<int>(components.cols()); }
  // Projects rows of X onto the retained components.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
};

struct PcaTarget {
  std::optional<double> variance;  // smallest R reaching this fraction
  std::optional<int> components;   // or a fixed component count

  static PcaTarget fraction(double f) { return {f, std::nullopt}; }
  static PcaTarget fixed(int r) { return {std::nullopt, r}; }
};

PcaBasis fit_pca(const Eigen::MatrixXd& X, const PcaTarget& target,
                 bool standardize = true);

struct ClusterModel {
  Eigen::MatrixXd centroids;  // K x R
  int k = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
};

// Lloyd's algorithm, k-means++ seeding, best of n_init restarts by inertia
// (ties to the lowest restart index). Empty clusters are re-seeded at the
// point farthest from its assigned centroid.
ClusterModel fit_kmeans(const Eigen::MatrixXd& Z, int k, std::uint64_t seed,
                        int max_iter = 300, int n_init = 10);

// Inverse-distance scores over the K centroids; collapses to the indicator of
// the nearest centroid when the point sits on one (d < 1e-12).
Eigen::VectorXd cluster_scores(const Eigen::VectorXd& z_row,
                               const ClusterModel& clusters);

// Row-wise cluster_scores.
Eigen::MatrixXd score_matrix(const Eigen::MatrixXd& Z,
                             const ClusterModel& clusters);

struct HeteroModel {
  PcaBasis basis;
  ClusterModel clusters;
  Eigen::VectorXd beta;         // length K
  Eigen::MatrixXd beta_cov_hc;  // K x K
  Eigen::MatrixXd beta_cov_homoscedastic;
  int effective_rank = 0;  // < K when the interacted design was deficient
};

// Weighted OLS of the pooled outcome residuals on the K interacted regressors
// psi * d_res over the kept sample. psi_matrix rows align with
// ws.kept_indices. Solved by eigendecomposition pseudoinverse so that
// rank-deficient score patterns (e.g. constant psi) still yield the
// minimum-norm beta whose fitted effects are well defined.
HeteroModel fit_hetero_stage(const CrossFitResult& cf, const WeightedSample& ws,
                             const Eigen::MatrixXd& psi_matrix);

struct CustomerEffect {
  std::string customer_id;
  double h = 0.0;
  double var_h = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  Eigen::VectorXd psi;
};

// h_i = psi_i . beta, var_h_i = psi_i Cov(beta) psi_i', normal CI at level.
// use_hc selects which stored covariance feeds var_h.
std::vector<CustomerEffect> customer_effects(
    const HeteroModel& hm, const Eigen::MatrixXd& psi_matrix,
    const std::vector<std::string>& customer_ids, double level = 0.95,
    bool use_hc = true);

struct EffectSummary {
  double mean_h = 0.0;
  double pct_ci_crossing_zero = 0.0;
  std::vector<double> bin_edges;
  std::vector<std::size_t> bin_counts;
};

EffectSummary summarize_effects(const std::vector<CustomerEffect>& effects,
                                int n_bins = 20);

struct HeteroConfig {
  bool enabled = true;
  std::optional<int> n_components;  // fixed R; unset -> target_variance rule
  double target_variance = 0.80;
  int k = 20;
  int n_init = 10;
  int max_iter = 300;
  bool standardize_features = true;  // standardize X before PCA
  bool standardize_pcs = true;       // unit-variance PC space for distances
  std::uint64_t seed = 0;
};

struct HeteroResult {
  HeteroModel model;
  Eigen::MatrixXd psi;  // kept-sample rows aligned with ws.kept_indices
  std::vector<CustomerEffect> effects;
  EffectSummary summary_all;
  EffectSummary summary_treated;
};

// Full pipeline over the kept sample: PCA on kept features, K-means in
// (optionally standardized) PC space, psi scores, interacted regression,
// per-customer effects.
HeteroResult estimate_hetero(const Dataset& ds, const CrossFitResult& cf,
                             const WeightedSample& ws, const HeteroConfig& cfg,
                             double level = 0.95);

}  // namespace cidml
