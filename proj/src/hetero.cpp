#include "cidml/hetero.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"

namespace cidml {

namespace {

constexpr double kRankCutoffRel = 1e-10;

struct PinvParts {
  Eigen::MatrixXd pinv;
  int effective_rank = 0;
};

PinvParts sym_pinv(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("fit_hetero_stage: eigendecomposition failed");
  }
  const Eigen::VectorXd& vals = eig.eigenvalues();
  const double lmax = vals.maxCoeff();
  if (!(lmax > 0.0)) {
    throw EstimationError(
        "fit_hetero_stage: interacted design is degenerate; reduce the "
        "cluster count");
  }
  const double cutoff = lmax * kRankCutoffRel;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(vals.size());
  PinvParts out;
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) > cutoff) {
      inv(i) = 1.0 / vals(i);
      ++out.effective_rank;
    }
  }
  out.pinv = eig.eigenvectors() * inv.asDiagonal() *
             eig.eigenvectors().transpose();
  return out;
}

}  // namespace

HeteroModel fit_hetero_stage(const CrossFitResult& cf, const WeightedSample& ws,
                             const Eigen::MatrixXd& psi_matrix) {
  const Eigen::Index n = static_cast<Eigen::Index>(ws.kept_indices.size());
  const Eigen::Index K = psi_matrix.cols();
  if (K < 2) throw ArgumentError("fit_hetero_stage: need K >= 2 clusters");
  if (psi_matrix.rows() != n) {
    throw ArgumentError(
        "fit_hetero_stage: psi rows must align with the kept sample");
  }
  if (n < K) throw ArgumentError("fit_hetero_stage: fewer rows than clusters");

  Eigen::VectorXd y(n), w = ws.weights;
  Eigen::MatrixXd G(n, K);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int i = ws.kept_indices[static_cast<std::size_t>(r)];
    y(r) = cf.y_res(i);
    G.row(r) = psi_matrix.row(r) * cf.d_res(i);
  }

  const Eigen::MatrixXd Gw = G.array().colwise() * w.array();
  const Eigen::MatrixXd A = Gw.transpose() * G;
  const Eigen::VectorXd b = Gw.transpose() * y;

  const PinvParts p = sym_pinv(A);
  HeteroModel model;
  model.effective_rank = p.effective_rank;
  model.beta = p.pinv * b;

  const Eigen::VectorXd r = y - G * model.beta;
  Eigen::MatrixXd meat_hc = Eigen::MatrixXd::Zero(K, K);
  Eigen::MatrixXd meat_w2 = Eigen::MatrixXd::Zero(K, K);
  std::vector<double> wr2(static_cast<std::size_t>(n)),
      wvec(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd gw = w(i) * G.row(i).transpose();
    meat_hc.noalias() += (r(i) * r(i)) * gw * gw.transpose();
    meat_w2.noalias() += gw * gw.transpose();
    wr2[static_cast<std::size_t>(i)] = w(i) * r(i) * r(i);
    wvec[static_cast<std::size_t>(i)] = w(i);
  }
  const double sigma2 = pairwise_sum(wr2) / pairwise_sum(wvec);
  model.beta_cov_hc = p.pinv * meat_hc * p.pinv;
  model.beta_cov_homoscedastic = sigma2 * (p.pinv * meat_w2 * p.pinv);
  return model;
}

std::vector<CustomerEffect> customer_effects(
    const HeteroModel& hm, const Eigen::MatrixXd& psi_matrix,
    const std::vector<std::string>& customer_ids, double level, bool use_hc) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ArgumentError("customer_effects: level must lie in (0, 1)");
  }
  if (psi_matrix.rows() != static_cast<Eigen::Index>(customer_ids.size())) {
    throw ArgumentError("customer_effects: ids and psi rows disagree");
  }
  if (psi_matrix.cols() != hm.beta.size()) {
    throw ArgumentError("customer_effects: psi columns and beta disagree");
  }
  const Eigen::MatrixXd& cov =
      use_hc ? hm.beta_cov_hc : hm.beta_cov_homoscedastic;
  const double z = normal_critical_value(level);

  std::vector<CustomerEffect> out(customer_ids.size());
  for (Eigen::Index i = 0; i < psi_matrix.rows(); ++i) {
    CustomerEffect& e = out[static_cast<std::size_t>(i)];
    e.customer_id = customer_ids[static_cast<std::size_t>(i)];
    e.psi = psi_matrix.row(i).transpose();
    e.h = e.psi.dot(hm.beta);
    e.var_h = std::max(0.0, double(e.psi.transpose() * cov * e.psi));
    const double half = z * std::sqrt(e.var_h);
    e.ci = {e.h - half, e.h + half};
  }
  return out;
}

EffectSummary summarize_effects(const std::vector<CustomerEffect>& effects,
                                int n_bins) {
  if (effects.empty()) throw ArgumentError("summarize_effects: no effects");
  if (n_bins < 1) throw ArgumentError("summarize_effects: n_bins must be >= 1");

  EffectSummary s;
  std::vector<double> hs(effects.size());
  std::size_t crossing = 0;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    hs[i] = effects[i].h;
    if (effects[i].ci.first <= 0.0 && 0.0 <= effects[i].ci.second) ++crossing;
  }
  s.mean_h = mean(hs);
  s.pct_ci_crossing_zero =
      100.0 * static_cast<double>(crossing) / static_cast<double>(effects.size());

  const auto [lo_it, hi_it] = std::minmax_element(hs.begin(), hs.end());
  double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) hi = lo + 1.0;  // all-equal effects: one unit-width bin
  s.bin_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int b = 0; b <= n_bins; ++b) {
    s.bin_edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(n_bins);
  }
  s.bin_counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (double h : hs) {
    int b = static_cast<int>(std::floor((h - lo) / (hi - lo) *
                                        static_cast<double>(n_bins)));
    b = std::clamp(b, 0, n_bins - 1);
    ++s.bin_counts[static_cast<std::size_t>(b)];
  }
  return s;
}

HeteroResult estimate_hetero(const Dataset& ds, const CrossFitResult& cf,
                             const WeightedSample& ws, const HeteroConfig& cfg,
                             double level) {
  const std::size_t n = ws.kept_indices.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), ds.features.cols());
  std::vector<std::string> ids(n);
  std::vector<int> treated(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int i = ws.kept_indices[r];
    X.row(static_cast<Eigen::Index>(r)) = ds.features.row(i);
    ids[r] = ds.customer_ids[static_cast<std::size_t>(i)];
    treated[r] = ds.treatment[static_cast<std::size_t>(i)];
  }

  const PcaTarget target = cfg.n_components
                               ? PcaTarget::fixed(*cfg.n_components)
                               : PcaTarget::fraction(cfg.target_variance);
  HeteroResult result;
  PcaBasis basis = fit_pca(X, target, cfg.standardize_features);
  Eigen::MatrixXd Z = basis.transform(X);
  if (cfg.standardize_pcs) {
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const double sd = basis.component_sd(j);
      if (sd > 0.0) Z.col(j) /= sd;
    }
  }

  ClusterModel clusters =
      fit_kmeans(Z, cfg.k, cfg.seed, cfg.max_iter, cfg.n_init);
  result.psi = score_matrix(Z, clusters);
  result.model = fit_hetero_stage(cf, ws, result.psi);
  result.model.basis = std::move(basis);
  result.model.clusters = std::move(clusters);
  result.effects = customer_effects(result.model, result.psi, ids, level);
  result.summary_all = summarize_effects(result.effects);

  std::vector<CustomerEffect> treated_effects;
  for (std::size_t r = 0; r < n; ++r) {
    if (treated[r] == 1) treated_effects.push_back(result.effects[r]);
  }
  if (!treated_effects.empty()) {
    result.summary_treated = summarize_effects(treated_effects);
  }
  return result;
}

}  // namespace cidml
