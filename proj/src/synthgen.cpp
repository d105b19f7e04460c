#include "cidml/synthgen.hpp"

#include <cmath>
#include <string>

#include "cidml/errors.hpp"
#include "cidml/rng.hpp"

namespace cidml {

namespace {

Eigen::VectorXd confounder_direction(std::size_t m) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m),
                                   1.0 / std::sqrt(static_cast<double>(m)));
}

Eigen::VectorXd outcome_direction(std::size_t m) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(m));
  const double s = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = (j % 2 == 0) ? s : -s;
  return b;
}

Eigen::MatrixXd draw_features(Rng& rng, std::size_t n, std::size_t m) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.normal();
  }
  return X;
}

Eigen::VectorXd effect_of(const DgpSpec& spec, const Eigen::MatrixXd& X,
                          std::vector<int>* segment_out) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd effect(n);
  if (segment_out) segment_out->assign(static_cast<std::size_t>(n), 0);
  if (spec.segmented) {
    const auto& seg = *spec.segmented;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool above = X(i, seg.feature) > seg.threshold;
      effect(i) = above ? seg.tau_above : seg.tau_below;
      if (segment_out) (*segment_out)[static_cast<std::size_t>(i)] = above ? 1 : 0;
    }
  } else {
    effect.setConstant(spec.tau);
  }
  return effect;
}

Eigen::VectorXd noise_sd_of(const DgpSpec& spec, const Eigen::MatrixXd& X) {
  Eigen::VectorXd sd(X.rows());
  if (spec.heteroscedastic) {
    sd = spec.noise_sd * (0.5 + X.col(0).array().abs());
  } else {
    sd.setConstant(spec.noise_sd);
  }
  return sd;
}

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "c" + std::to_string(i);
  return ids;
}

std::vector<std::string> make_feature_names(std::size_t m) {
  std::vector<std::string> names(m);
  for (std::size_t j = 0; j < m; ++j) names[j] = "x" + std::to_string(j);
  return names;
}

constexpr std::uint64_t kStreamPlacebo = 0x706c616365626f00ULL;

}  // namespace

void DgpSpec::validate() const {
  if (n < 1 || m < 1) throw ArgumentError("DgpSpec: n and m must be >= 1");
  if (!(noise_sd > 0.0)) throw ArgumentError("DgpSpec: noise_sd must be > 0");
  if (segmented) {
    if (segmented->feature < 0 ||
        static_cast<std::size_t>(segmented->feature) >= m) {
      throw ArgumentError("DgpSpec: segment feature out of range");
    }
  }
}

Eigen::VectorXd dgp_systematic(const DgpSpec& spec, const Eigen::MatrixXd& X) {
  const Eigen::VectorXd a = confounder_direction(spec.m);
  const Eigen::VectorXd b = outcome_direction(spec.m);
  Eigen::VectorXd g = spec.confounding_strength * (X * a) + X * b;
  if (spec.m >= 2) {
    g.array() += 0.5 * X.col(0).array() * X.col(1).array();
  }
  return g;
}

std::pair<Dataset, DgpTruth> generate(const DgpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const Eigen::MatrixXd X =
      draw_features(rng, spec.n, spec.m);
  const Eigen::VectorXd a = confounder_direction(spec.m);

  DgpTruth truth;
  truth.true_propensity =
      (1.0 / (1.0 + (-spec.confounding_strength * (X * a).array()).exp()))
          .matrix();
  truth.per_customer_effect = effect_of(spec, X, &truth.segment);

  Dataset ds;
  ds.customer_ids = make_ids(spec.n);
  ds.feature_names = make_feature_names(spec.m);
  ds.features = X;
  ds.treatment.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    ds.treatment[i] = rng.bernoulli(truth.true_propensity(
                          static_cast<Eigen::Index>(i)))
                          ? 1
                          : 0;
  }

  const Eigen::VectorXd g = dgp_systematic(spec, X);
  const Eigen::VectorXd sd = noise_sd_of(spec, X);
  ds.outcome.resize(static_cast<Eigen::Index>(spec.n));
  for (Eigen::Index i = 0; i < ds.outcome.size(); ++i) {
    const double d = static_cast<double>(ds.treatment[static_cast<std::size_t>(i)]);
    ds.outcome(i) = g(i) + d * truth.per_customer_effect(i) + sd(i) * rng.normal();
  }

  truth.true_ate = truth.per_customer_effect.mean();
  double att_sum = 0.0;
  std::size_t n_treated = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    if (ds.treatment[i] == 1) {
      att_sum += truth.per_customer_effect(static_cast<Eigen::Index>(i));
      ++n_treated;
    }
  }
  truth.true_att = (n_treated > 0) ? att_sum / static_cast<double>(n_treated)
                                   : truth.true_ate;

  ds.validate();
  return {std::move(ds), std::move(truth)};
}

Dataset make_placebo(const Dataset& ds, const DgpTruth& truth,
                     const DgpSpec& spec) {
  spec.validate();
  if (ds.n() != spec.n || ds.m() != spec.m ||
      truth.true_propensity.size() != static_cast<Eigen::Index>(spec.n)) {
    throw ArgumentError("make_placebo: dataset does not match its spec");
  }
  Rng rng(derive_seed(spec.seed, kStreamPlacebo));

  // Redraw features with correlation kPlaceboRho to the originals: same
  // customers, a different observation window. Treatment flags are kept, so
  // any selection bias survives into the placebo data.
  const double rho = kPlaceboRho;
  const double mix = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd Xp(ds.features.rows(), ds.features.cols());
  for (Eigen::Index i = 0; i < Xp.rows(); ++i) {
    for (Eigen::Index j = 0; j < Xp.cols(); ++j) {
      Xp(i, j) = rho * ds.features(i, j) + mix * rng.normal();
    }
  }

  Dataset out;
  out.customer_ids = ds.customer_ids;
  out.feature_names = ds.feature_names;
  out.features = Xp;
  out.treatment = ds.treatment;

  const Eigen::VectorXd g = dgp_systematic(spec, Xp);
  const Eigen::VectorXd sd = noise_sd_of(spec, Xp);
  out.outcome.resize(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    out.outcome(i) = g(i) + sd(i) * rng.normal();
  }

  out.validate();
  return out;
}

}  // namespace cidml
