#include "cidml/final_stage.hpp"

#include <cmath>
#include <vector>

#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"

namespace cidml {

namespace {

void check_triplet(const Eigen::VectorXd& y_res, const Eigen::VectorXd& d_res,
                   const Eigen::VectorXd& w) {
  if (y_res.size() != d_res.size() || y_res.size() != w.size()) {
    throw ArgumentError("final stage: input vectors disagree on length");
  }
  if (y_res.size() < 2) {
    throw ArgumentError("final stage: need at least 2 rows");
  }
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) {
      throw ArgumentError("final stage: weights must be positive and finite");
    }
  }
}

double pairwise_dot3(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                     const Eigen::VectorXd& c) {
  std::vector<double> t(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    t[static_cast<std::size_t>(i)] = a(i) * b(i) * c(i);
  }
  return pairwise_sum(t);
}

}  // namespace

double weighted_ols_scalar(const Eigen::VectorXd& y_res,
                           const Eigen::VectorXd& d_res,
                           const Eigen::VectorXd& w) {
  check_triplet(y_res, d_res, w);
  const double den = pairwise_dot3(w, d_res, d_res);
  if (!(den > 0.0)) {
    throw EstimationError(
        "weighted_ols_scalar: sum w*d_res^2 is zero; treatment residuals are "
        "degenerate");
  }
  return pairwise_dot3(w, d_res, y_res) / den;
}

std::pair<double, double> sandwich_variance(const Eigen::VectorXd& y_res,
                                            const Eigen::VectorXd& d_res,
                                            const Eigen::VectorXd& w,
                                            double beta) {
  check_triplet(y_res, d_res, w);
  const std::size_t n = static_cast<std::size_t>(y_res.size());
  const double den = pairwise_dot3(w, d_res, d_res);
  if (!(den > 0.0)) {
    throw EstimationError("sandwich_variance: degenerate treatment residuals");
  }

  std::vector<double> wd2(n), wr2(n), hc_terms(n), wvec(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double wd = w(k) * d_res(k);
    const double r = y_res(k) - d_res(k) * beta;
    wd2[i] = wd * wd;
    wr2[i] = w(k) * r * r;
    hc_terms[i] = wd * wd * (r * r);
    wvec[i] = w(k);
  }
  const double den2 = den * den;
  const double var_hc = pairwise_sum(hc_terms) / den2;
  const double sigma2 = pairwise_sum(wr2) / pairwise_sum(wvec);
  const double var_homo = sigma2 * pairwise_sum(wd2) / den2;
  return {var_homo, var_hc};
}

AttEstimate estimate_att(const CrossFitResult& cf, const WeightedSample& ws,
                         double level, bool include_intercept) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ArgumentError("estimate_att: level must lie in (0, 1)");
  }
  const std::size_t n = ws.kept_indices.size();
  if (static_cast<std::size_t>(cf.y_res.size()) < n) {
    throw ArgumentError("estimate_att: weighted sample does not match residuals");
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd d(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const int i = ws.kept_indices[k];
    if (i < 0 || i >= cf.y_res.size()) {
      throw ArgumentError("estimate_att: kept index out of range");
    }
    y(static_cast<Eigen::Index>(k)) = cf.y_res(i);
    d(static_cast<Eigen::Index>(k)) = cf.d_res(i);
  }
  const Eigen::VectorXd& w = ws.weights;

  AttEstimate est;
  est.level = level;
  est.n_used = n;
  est.estimand = ws.estimand;

  if (!include_intercept) {
    est.beta = weighted_ols_scalar(y, d, w);
    const auto [vh, vhc] = sandwich_variance(y, d, w, est.beta);
    est.var_homoscedastic = vh;
    est.var_hc = vhc;
  } else {
    check_triplet(y, d, w);
    // Two-column design [1, d~]; report the slope with exact 2x2 sandwiches.
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const Eigen::Vector2d x(1.0, d(i));
      A += w(i) * x * x.transpose();
      b += w(i) * x * y(i);
    }
    if (!(A.determinant() > 0.0)) {
      throw EstimationError("estimate_att: degenerate intercept design");
    }
    const Eigen::Vector2d coef = A.ldlt().solve(b);
    est.beta = coef(1);
    Eigen::Matrix2d meat_hc = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d meat_w2 = Eigen::Matrix2d::Zero();
    double wr2 = 0.0, wsum = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const Eigen::Vector2d x(1.0, d(i));
      const double r = y(i) - coef.dot(x);
      const Eigen::Matrix2d m = (w(i) * w(i)) * x * x.transpose();
      meat_hc += m * (r * r);
      meat_w2 += m;
      wr2 += w(i) * r * r;
      wsum += w(i);
    }
    const Eigen::Matrix2d Ainv = A.inverse();
    est.var_hc = (Ainv * meat_hc * Ainv)(1, 1);
    est.var_homoscedastic = (wr2 / wsum) * (Ainv * meat_w2 * Ainv)(1, 1);
  }

  const double z = normal_critical_value(level);
  const double se_h = std::sqrt(est.var_homoscedastic);
  const double se_hc = std::sqrt(est.var_hc);
  est.ci_homoscedastic = {est.beta - z * se_h, est.beta + z * se_h};
  est.ci_hc = {est.beta - z * se_hc, est.beta + z * se_hc};
  return est;
}

}  // namespace cidml
