#include "cidml/weighting.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "cidml/errors.hpp"

namespace cidml {

namespace {

constexpr double kPropClamp = 1e-12;

void check_propensities(const Eigen::VectorXd& e, std::size_t n) {
  if (static_cast<std::size_t>(e.size()) != n) {
    throw ArgumentError("propensities and treatment disagree on length");
  }
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    if (!(e(i) > 0.0 && e(i) < 1.0)) {
      throw ArgumentError("propensity at index " + std::to_string(i) +
                          " is outside (0, 1)");
    }
  }
}

}  // namespace

void EstimandSpec::validate() const {
  if (!(alpha >= 0.0 && alpha < 0.5)) {
    throw ArgumentError("EstimandSpec: alpha must lie in [0, 0.5)");
  }
}

Eigen::VectorXd rescale_propensities(const Eigen::VectorXd& e_hat,
                                     const std::vector<int>& d) {
  check_propensities(e_hat, d.size());
  long long treated = 0;
  for (int v : d) treated += v;
  const double dbar = static_cast<double>(treated) / static_cast<double>(d.size());
  const double scale = dbar / e_hat.mean();
  Eigen::VectorXd out(e_hat.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = std::clamp(scale * e_hat(i), kPropClamp, 1.0 - kPropClamp);
  }
  return out;
}

Eigen::VectorXd ipw_weights(const Eigen::VectorXd& e, const std::vector<int>& d,
                            EstimandKind kind) {
  check_propensities(e, d.size());
  Eigen::VectorXd w(e.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const bool treated = d[static_cast<std::size_t>(i)] == 1;
    if (kind == EstimandKind::ATE) {
      w(i) = treated ? 1.0 / e(i) : 1.0 / (1.0 - e(i));
    } else {
      w(i) = treated ? 1.0 : e(i) / (1.0 - e(i));
    }
  }
  return w;
}

WeightedSample apply_support_and_trim(const CrossFitResult& cf,
                                      const std::vector<int>& treatment,
                                      const EstimandSpec& spec) {
  spec.validate();
  const std::size_t n = treatment.size();
  if (static_cast<std::size_t>(cf.e_hat.size()) != n) {
    throw ArgumentError("apply_support_and_trim: treatment length mismatch");
  }

  WeightedSample ws;
  ws.estimand = spec;
  Eigen::VectorXd e = spec.rescale ? rescale_propensities(cf.e_hat, treatment)
                                   : cf.e_hat;

  std::vector<int> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) kept.push_back(static_cast<int>(i));

  if (spec.common_support) {
    double min_t = std::numeric_limits<double>::infinity();
    double max_t = -std::numeric_limits<double>::infinity();
    double min_c = std::numeric_limits<double>::infinity();
    double max_c = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double ei = e(static_cast<Eigen::Index>(i));
      if (treatment[i] == 1) {
        min_t = std::min(min_t, ei);
        max_t = std::max(max_t, ei);
      } else {
        min_c = std::min(min_c, ei);
        max_c = std::max(max_c, ei);
      }
    }
    if (!std::isfinite(min_t) || !std::isfinite(min_c)) {
      throw EstimationError(
          "apply_support_and_trim: both treatment arms are required");
    }
    const double lo = std::max(min_t, min_c);
    const double hi = std::min(max_t, max_c);
    std::vector<int> next;
    next.reserve(kept.size());
    for (int i : kept) {
      const double ei = e(i);
      if (ei < lo || ei > hi) {
        auto& slot = treatment[static_cast<std::size_t>(i)] == 1
                         ? ws.drop_log.treated_common_support
                         : ws.drop_log.control_common_support;
        ++slot;
      } else {
        next.push_back(i);
      }
    }
    kept.swap(next);
  }

  if (spec.alpha > 0.0) {
    std::vector<int> next;
    next.reserve(kept.size());
    for (int i : kept) {
      const double ei = e(i);
      if (ei < spec.alpha || ei > 1.0 - spec.alpha) {
        auto& slot = treatment[static_cast<std::size_t>(i)] == 1
                         ? ws.drop_log.treated_trimming
                         : ws.drop_log.control_trimming;
        ++slot;
      } else {
        next.push_back(i);
      }
    }
    kept.swap(next);
  }

  std::size_t kept_treated = 0;
  for (int i : kept) kept_treated += treatment[static_cast<std::size_t>(i)] == 1;
  if (kept.empty() || kept_treated == 0 || kept_treated == kept.size()) {
    throw EstimationError(
        "apply_support_and_trim: an arm is empty after filtering (dropped by "
        "common support: treated " +
        std::to_string(ws.drop_log.treated_common_support) + ", control " +
        std::to_string(ws.drop_log.control_common_support) +
        "; by trimming: treated " +
        std::to_string(ws.drop_log.treated_trimming) + ", control " +
        std::to_string(ws.drop_log.control_trimming) + ")");
  }

  ws.kept_indices = std::move(kept);
  ws.e_scaled.resize(static_cast<Eigen::Index>(ws.kept_indices.size()));
  std::vector<int> d_kept(ws.kept_indices.size());
  for (std::size_t k = 0; k < ws.kept_indices.size(); ++k) {
    ws.e_scaled(static_cast<Eigen::Index>(k)) = e(ws.kept_indices[k]);
    d_kept[k] = treatment[static_cast<std::size_t>(ws.kept_indices[k])];
  }
  ws.weights = ipw_weights(ws.e_scaled, d_kept, spec.kind);
  return ws;
}

}  // namespace cidml
