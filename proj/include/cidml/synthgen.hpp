#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "cidml/dataset.hpp"

namespace cidml {

// Two latent segments split by a single feature threshold.
struct SegmentedEffect {
  int feature = 0;
  double threshold = 0.0;
  double tau_below = 0.0;
  double tau_above = 0.0;
};

struct DgpSpec {
  std::size_t n = 0;
  std::size_t m = 1;
  double tau = 0.0;  // constant treatment effect, ignored when segmented is set
  std::optional<SegmentedEffect> segmented;
  double confounding_strength = 1.0;
  double noise_sd = 1.0;
  bool heteroscedastic = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DgpTruth {
  double true_att = 0.0;
  double true_ate = 0.0;
  Eigen::VectorXd per_customer_effect;
  Eigen::VectorXd true_propensity;
  std::vector<int> segment;  // 0 below threshold, 1 above; all 0 for constant
};

// Confounded selection-on-observables draw:
//   X ~ N(0, I_m)
//   e(X) = sigmoid(confounding_strength * X a),  a = 1/sqrt(m)
//   D ~ Bernoulli(e(X))
//   Y = g(X) + D * effect(X) + eps,  g linear plus one mild interaction
// Heteroscedastic mode scales the noise sd per row by (0.5 + |X_0|).
std::pair<Dataset, DgpTruth> generate(const DgpSpec& spec);

// Shifted-period analog of a placebo event: treated flags are kept, features
// are redrawn from each customer's own distribution (correlation kPlaceboRho
// with the originals), and the outcome is regenerated with the effect forced
// to zero. The placebo truth is exactly 0.
Dataset make_placebo(const Dataset& ds, const DgpTruth& truth,
                     const DgpSpec& spec);

inline constexpr double kPlaceboRho = 0.7;

// Systematic part of the outcome; exposed so tests can compute noise-level
// oracles without re-deriving the functional form.
Eigen::VectorXd dgp_systematic(const DgpSpec& spec, const Eigen::MatrixXd& X);

}  // namespace cidml
