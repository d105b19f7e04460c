#include "cidml/nuisance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"

namespace cidml {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr std::array<double, 7> kPenaltyGrid = {1e-3, 1e-2, 1e-1, 1.0,
                                                10.0, 100.0, 1000.0};

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& eta) {
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    p(i) = clamp_prob(1.0 / (1.0 + std::exp(-eta(i))));
  }
  return p;
}

double mean_int(const std::vector<int>& d) {
  long long s = 0;
  for (int v : d) s += v;
  return static_cast<double>(s) / static_cast<double>(d.size());
}

bool has_both_classes(const std::vector<int>& d) {
  bool any0 = false, any1 = false;
  for (int v : d) {
    (v == 0 ? any0 : any1) = true;
    if (any0 && any1) return true;
  }
  return false;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  }
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v,
                          const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  }
  return out;
}

std::vector<int> take_rows(const std::vector<int>& v,
                           const std::vector<int>& rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = v[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

double validation_mse(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  return (y - pred).squaredNorm() / static_cast<double>(y.size());
}

double validation_logloss(const std::vector<int>& d, const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = clamp_prob(p(i));
    s -= d[static_cast<std::size_t>(i)] ? std::log(pi) : std::log(1.0 - pi);
  }
  return s / static_cast<double>(p.size());
}

// Positions split by parity: a deterministic nested 2-fold of the training
// complement used only for hyperparameter search.
void parity_split(int n, std::vector<int>& even, std::vector<int>& odd) {
  even.clear();
  odd.clear();
  for (int i = 0; i < n; ++i) (i % 2 == 0 ? even : odd).push_back(i);
}

}  // namespace

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  Standardizer st;
  st.mean = X.colwise().mean();
  st.scale.resize(X.cols());
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - st.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    st.scale(j) = (sd > 0.0) ? sd : 1.0;
  }
  return st;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd Z = standardizer ? standardizer->apply(X) : X;
  return (Z * coefficients).array() + intercept;
}

RidgeModel fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     double lambda, bool standardize) {
  const Eigen::Index N = X.rows();
  const Eigen::Index M = X.cols();
  if (N < 2) throw ArgumentError("fit_ridge: need at least 2 rows");
  if (y.size() != N) throw ArgumentError("fit_ridge: X and y disagree on rows");
  if (!(lambda >= 0.0)) throw ArgumentError("fit_ridge: lambda must be >= 0");

  RidgeModel model;
  model.lambda = lambda;
  Eigen::MatrixXd Z;
  if (standardize) {
    model.standardizer = Standardizer::fit(X);
    Z = model.standardizer->apply(X);
  } else {
    Z = X;
  }
  // Centering the design solves the unpenalized-intercept problem exactly.
  const Eigen::RowVectorXd zbar = Z.colwise().mean();
  const Eigen::MatrixXd Zc = Z.rowwise() - zbar;
  const double ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ybar;

  Eigen::VectorXd w;
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zc);
    if (qr.rank() < M) {
      throw NumericalError(
          "fit_ridge: singular system with lambda = 0; supply lambda > 0");
    }
    w = qr.solve(yc);
  } else {
    Eigen::MatrixXd A = Zc.transpose() * Zc;
    A.diagonal().array() += lambda;
    w = A.llt().solve(Zc.transpose() * yc);
  }
  if (!w.allFinite()) throw NumericalError("fit_ridge: non-finite solution");
  model.coefficients = w;
  model.intercept = ybar - zbar.dot(w);
  return model;
}

Eigen::VectorXd LogisticModel::predict_proba(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd Z = standardizer ? standardizer->apply(X) : X;
  return sigmoid(((Z * coefficients).array() + intercept).matrix());
}

double logistic_penalized_loglik(const Eigen::MatrixXd& X,
                                 const std::vector<int>& d,
                                 const Eigen::VectorXd& coef, double intercept,
                                 double l2) {
  const Eigen::VectorXd p = sigmoid(((X * coef).array() + intercept).matrix());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ll += d[static_cast<std::size_t>(i)] ? std::log(p(i)) : std::log(1.0 - p(i));
  }
  return ll - 0.5 * l2 * coef.squaredNorm();
}

LogisticModel fit_logistic(const Eigen::MatrixXd& X, const std::vector<int>& d,
                           double l2, int max_iter, double tol,
                           bool standardize) {
  const Eigen::Index N = X.rows();
  const Eigen::Index M = X.cols();
  if (d.size() != static_cast<std::size_t>(N)) {
    throw ArgumentError("fit_logistic: X and d disagree on rows");
  }
  if (!(l2 >= 0.0)) throw ArgumentError("fit_logistic: l2 must be >= 0");
  if (!has_both_classes(d)) {
    throw ArgumentError("fit_logistic: d must contain both classes");
  }

  LogisticModel model;
  model.l2 = l2;
  Eigen::MatrixXd Z;
  if (standardize) {
    model.standardizer = Standardizer::fit(X);
    Z = model.standardizer->apply(X);
  } else {
    Z = X;
  }

  Eigen::VectorXd dv(N);
  for (Eigen::Index i = 0; i < N; ++i) dv(i) = d[static_cast<std::size_t>(i)];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(M);
  const double dbar = mean_int(d);
  double b = std::log(dbar / (1.0 - dbar));
  double ll = logistic_penalized_loglik(Z, d, w, b, l2);

  for (int iter = 1; iter <= max_iter; ++iter) {
    model.iterations = iter;
    const Eigen::VectorXd p = sigmoid(((Z * w).array() + b).matrix());
    const Eigen::VectorXd s = p.array() * (1.0 - p.array());
    const Eigen::VectorXd resid = dv - p;

    // Newton system on the augmented design [Z | 1], intercept unpenalized.
    Eigen::MatrixXd H(M + 1, M + 1);
    const Eigen::MatrixXd Zs = Z.array().colwise() * s.array();
    H.topLeftCorner(M, M) = Z.transpose() * Zs;
    const Eigen::VectorXd zs_col = Zs.colwise().sum();
    H.topRightCorner(M, 1) = zs_col;
    H.bottomLeftCorner(1, M) = zs_col.transpose();
    H(M, M) = s.sum();
    H.topLeftCorner(M, M).diagonal().array() += l2;

    Eigen::VectorXd grad(M + 1);
    grad.head(M) = Z.transpose() * resid - l2 * w;
    grad(M) = resid.sum();

    const Eigen::VectorXd delta = H.ldlt().solve(grad);
    if (!delta.allFinite()) break;

    // Step halving: never let the penalized log-likelihood decrease.
    double step = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd w_try = w + step * delta.head(M);
      const double b_try = b + step * delta(M);
      const double ll_try = logistic_penalized_loglik(Z, d, w_try, b_try, l2);
      if (std::isfinite(ll_try) && ll_try >= ll - 1e-12) {
        w = w_try;
        b = b_try;
        ll = ll_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (step * delta.cwiseAbs().maxCoeff() < tol) {
      model.converged = true;
      break;
    }
  }

  if (!w.allFinite() || !std::isfinite(b)) {
    throw NumericalError("fit_logistic: non-finite coefficients");
  }
  model.coefficients = w;
  model.intercept = b;
  return model;
}

OutcomeFitter make_ridge_fitter(const NuisanceConfig& cfg) {
  return [cfg](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    double lambda = 1.0;
    nlohmann::json info;
    info["model"] = "ridge";
    if (cfg.penalty) {
      lambda = *cfg.penalty;
      info["lambda"] = lambda;
      info["searched"] = false;
    } else {
      std::vector<int> even, odd;
      parity_split(static_cast<int>(X.rows()), even, odd);
      double best_loss = std::numeric_limits<double>::infinity();
      for (double cand : kPenaltyGrid) {
        double loss = 0.0;
        bool ok = true;
        for (const auto* half : {&even, &odd}) {
          const auto* other = (half == &even) ? &odd : &even;
          try {
            const RidgeModel m = fit_ridge(take_rows(X, *other),
                                           take_rows(y, *other), cand,
                                           cfg.standardize);
            loss += validation_mse(take_rows(y, *half),
                                   m.predict(take_rows(X, *half)));
          } catch (const Error&) {
            ok = false;
            break;
          }
        }
        if (ok && loss < best_loss) {
          best_loss = loss;
          lambda = cand;
        }
      }
      info["lambda"] = lambda;
      info["searched"] = true;
    }
    const RidgeModel model = fit_ridge(X, y, lambda, cfg.standardize);
    return FittedNuisance{
        [model](const Eigen::MatrixXd& Xq) { return model.predict(Xq); },
        std::move(info)};
  };
}

PropensityFitter make_logistic_fitter(const NuisanceConfig& cfg) {
  return [cfg](const Eigen::MatrixXd& X, const std::vector<int>& d) {
    double l2 = 1.0;
    nlohmann::json info;
    info["model"] = "logistic";
    if (cfg.penalty) {
      l2 = *cfg.penalty;
      info["l2"] = l2;
      info["searched"] = false;
    } else {
      std::vector<int> even, odd;
      parity_split(static_cast<int>(X.rows()), even, odd);
      const std::vector<int> d_even = take_rows(d, even);
      const std::vector<int> d_odd = take_rows(d, odd);
      if (!has_both_classes(d_even) || !has_both_classes(d_odd)) {
        // Too little class variation for a nested split; keep the default.
        info["l2"] = l2;
        info["searched"] = false;
        info["search_skipped"] = "nested split lacks both classes";
      } else {
        double best_loss = std::numeric_limits<double>::infinity();
        for (double cand : kPenaltyGrid) {
          double loss = 0.0;
          bool ok = true;
          for (const auto* half : {&even, &odd}) {
            const auto* other = (half == &even) ? &odd : &even;
            try {
              const LogisticModel m =
                  fit_logistic(take_rows(X, *other), take_rows(d, *other), cand,
                               cfg.max_iter, cfg.tol, cfg.standardize);
              loss += validation_logloss(take_rows(d, *half),
                                         m.predict_proba(take_rows(X, *half)));
            } catch (const Error&) {
              ok = false;
              break;
            }
          }
          if (ok && loss < best_loss) {
            best_loss = loss;
            l2 = cand;
          }
        }
        info["l2"] = l2;
        info["searched"] = true;
      }
    }
    const LogisticModel model =
        fit_logistic(X, d, l2, cfg.max_iter, cfg.tol, cfg.standardize);
    nlohmann::json fit_info = info;
    fit_info["converged"] = model.converged;
    fit_info["iterations"] = model.iterations;
    return FittedNuisance{
        [model](const Eigen::MatrixXd& Xq) { return model.predict_proba(Xq); },
        std::move(fit_info)};
  };
}

double rank_auc(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) <
           scores(static_cast<Eigen::Index>(b));
  });

  std::size_t n_pos = 0;
  for (int v : labels) n_pos += static_cast<std::size_t>(v);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           scores(static_cast<Eigen::Index>(order[j + 1])) ==
               scores(static_cast<Eigen::Index>(order[i]))) {
      ++j;
    }
    // average rank over the tie block [i, j], 1-based ranks
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

CrossFitResult cross_fit(const Dataset& ds, const FoldPlan& plan,
                         const OutcomeFitter& outcome,
                         const PropensityFitter& propensity) {
  const std::size_t N = ds.n();
  if (plan.fold_of.size() != N) {
    throw ArgumentError("cross_fit: fold plan does not match dataset length");
  }
  if (plan.n_folds < 2) throw ArgumentError("cross_fit: need at least 2 folds");
  for (int f : plan.fold_of) {
    if (f < 0 || f >= plan.n_folds) {
      throw ArgumentError("cross_fit: fold index out of range");
    }
  }

  CrossFitResult result;
  result.fold_plan = plan;
  result.y_hat.resize(static_cast<Eigen::Index>(N));
  result.e_hat.resize(static_cast<Eigen::Index>(N));

  for (int f = 0; f < plan.n_folds; ++f) {
    std::vector<int> train_idx, test_idx;
    for (std::size_t i = 0; i < N; ++i) {
      (plan.fold_of[i] == f ? test_idx : train_idx).push_back(static_cast<int>(i));
    }
    if (test_idx.empty()) {
      throw ArgumentError("cross_fit: fold " + std::to_string(f) + " is empty");
    }
    const std::vector<int> d_train = take_rows(ds.treatment, train_idx);
    if (!has_both_classes(d_train)) {
      throw EstimationError("cross_fit: training complement of fold " +
                            std::to_string(f) +
                            " contains a single treatment class");
    }

    const Eigen::MatrixXd X_train = take_rows(ds.features, train_idx);
    const Eigen::MatrixXd X_test = take_rows(ds.features, test_idx);
    const Eigen::VectorXd y_train = take_rows(ds.outcome, train_idx);

    const FittedNuisance om = outcome(X_train, y_train);
    const FittedNuisance pm = propensity(X_train, d_train);

    const Eigen::VectorXd y_pred = om.predict(X_test);
    Eigen::VectorXd e_pred = pm.predict(X_test);
    for (Eigen::Index i = 0; i < e_pred.size(); ++i) {
      e_pred(i) = clamp_prob(e_pred(i));
    }
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      result.y_hat(test_idx[i]) = y_pred(static_cast<Eigen::Index>(i));
      result.e_hat(test_idx[i]) = e_pred(static_cast<Eigen::Index>(i));
    }

    FoldMetrics fm;
    fm.fold = f;
    const Eigen::VectorXd y_test = take_rows(ds.outcome, test_idx);
    const double sst = (y_test.array() - y_test.mean()).square().sum();
    const double ssr = (y_test - y_pred).squaredNorm();
    fm.outcome_r2 = (sst > 0.0) ? 1.0 - ssr / sst
                                : std::numeric_limits<double>::quiet_NaN();
    fm.propensity_auc = rank_auc(e_pred, take_rows(ds.treatment, test_idx));
    fm.outcome_info = om.info;
    fm.propensity_info = pm.info;
    result.fit_metrics.push_back(std::move(fm));
  }

  // Exact residual identities; downstream relies on them elementwise.
  result.y_res = ds.outcome - result.y_hat;
  result.d_res.resize(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    result.d_res(static_cast<Eigen::Index>(i)) =
        static_cast<double>(ds.treatment[i]) - result.e_hat(static_cast<Eigen::Index>(i));
  }
  return result;
}

CrossFitResult cross_fit(const Dataset& ds, const FoldPlan& plan,
                         const NuisanceConfig& outcome_cfg,
                         const NuisanceConfig& propensity_cfg) {
  return cross_fit(ds, plan, make_ridge_fitter(outcome_cfg),
                   make_logistic_fitter(propensity_cfg));
}

}  // namespace cidml
