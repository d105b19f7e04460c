#include "cidml/po_baseline.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"
#include "cidml/nuisance.hpp"
#include "cidml/rng.hpp"

namespace cidml {

namespace {

constexpr std::size_t kMinControlsPerBin = 2;

struct PoInputs {
  const Eigen::MatrixXd* X;
  const Eigen::VectorXd* y;
  const std::vector<int>* d;
  const std::vector<std::string>* ids;
  const Eigen::VectorXd* e;
};

struct CoreResult {
  double att = 0.0;
  std::vector<BinEstimate> bins;
  std::size_t merged = 0;
};

CoreResult estimate_po_core(const PoInputs& in, int n_bins,
                            double ridge_lambda) {
  const std::size_t N = in.ids->size();

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ea = (*in.e)(static_cast<Eigen::Index>(a));
    const double eb = (*in.e)(static_cast<Eigen::Index>(b));
    if (ea != eb) return ea < eb;
    if ((*in.ids)[a] != (*in.ids)[b]) return (*in.ids)[a] < (*in.ids)[b];
    return a < b;
  });

  // Near-equal quantile groups over the sorted order.
  std::vector<std::vector<std::size_t>> groups;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t lo = (static_cast<std::size_t>(b) * N) /
                           static_cast<std::size_t>(n_bins);
    const std::size_t hi = (static_cast<std::size_t>(b + 1) * N) /
                           static_cast<std::size_t>(n_bins);
    if (hi > lo) groups.emplace_back(order.begin() + lo, order.begin() + hi);
  }

  // Merge bins that cannot support regression adjustment.
  CoreResult out;
  auto viable = [&](const std::vector<std::size_t>& g) {
    std::size_t nt = 0, nc = 0;
    for (std::size_t i : g) ((*in.d)[i] == 1 ? nt : nc) += 1;
    return nt >= 1 && nc >= kMinControlsPerBin;
  };
  for (std::size_t b = 0; b < groups.size();) {
    if (viable(groups[b])) {
      ++b;
      continue;
    }
    ++out.merged;
    if (b + 1 < groups.size()) {
      groups[b + 1].insert(groups[b + 1].begin(), groups[b].begin(),
                           groups[b].end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
    } else if (b > 0) {
      groups[b - 1].insert(groups[b - 1].end(), groups[b].begin(),
                           groups[b].end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
      b = groups.size();  // tail merge can only end the scan
    } else {
      throw EstimationError(
          "estimate_po: no bin supports regression adjustment (needs a "
          "treated customer and at least " +
          std::to_string(kMinControlsPerBin) + " controls)");
    }
  }
  if (groups.empty() || !viable(groups.back())) {
    throw EstimationError(
        "estimate_po: bin merging exhausted without a viable bin");
  }

  double weighted_delta = 0.0;
  std::size_t total_treated = 0;
  for (const auto& g : groups) {
    std::vector<std::size_t> tr, co;
    for (std::size_t i : g) ((*in.d)[i] == 1 ? tr : co).push_back(i);

    Eigen::MatrixXd Xc(static_cast<Eigen::Index>(co.size()), in.X->cols());
    Eigen::VectorXd yc(static_cast<Eigen::Index>(co.size()));
    for (std::size_t r = 0; r < co.size(); ++r) {
      Xc.row(static_cast<Eigen::Index>(r)) =
          in.X->row(static_cast<Eigen::Index>(co[r]));
      yc(static_cast<Eigen::Index>(r)) =
          (*in.y)(static_cast<Eigen::Index>(co[r]));
    }
    const RidgeModel model = fit_ridge(Xc, yc, ridge_lambda, true);

    Eigen::MatrixXd Xt(static_cast<Eigen::Index>(tr.size()), in.X->cols());
    Eigen::VectorXd yt(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t r = 0; r < tr.size(); ++r) {
      Xt.row(static_cast<Eigen::Index>(r)) =
          in.X->row(static_cast<Eigen::Index>(tr[r]));
      yt(static_cast<Eigen::Index>(r)) =
          (*in.y)(static_cast<Eigen::Index>(tr[r]));
    }
    const Eigen::VectorXd cf = model.predict(Xt);

    BinEstimate be;
    be.n_treated = tr.size();
    be.n_control = co.size();
    be.actual_mean = yt.mean();
    be.counterfactual_mean = cf.mean();
    be.delta = be.actual_mean - be.counterfactual_mean;
    out.bins.push_back(be);

    weighted_delta += static_cast<double>(be.n_treated) * be.delta;
    total_treated += be.n_treated;
  }
  out.att = weighted_delta / static_cast<double>(total_treated);
  return out;
}

}  // namespace

PoEstimate estimate_po(const Dataset& ds, const Eigen::VectorXd& e_hat,
                       int n_bins, int n_bootstrap, std::uint64_t seed,
                       double ridge_lambda, double level) {
  if (n_bins < 1) throw ArgumentError("estimate_po: n_bins must be >= 1");
  if (n_bootstrap < 0) {
    throw ArgumentError("estimate_po: n_bootstrap must be >= 0");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw ArgumentError("estimate_po: level must lie in (0, 1)");
  }
  if (static_cast<std::size_t>(e_hat.size()) != ds.n()) {
    throw ArgumentError("estimate_po: e_hat length must match the dataset");
  }

  PoInputs in{&ds.features, &ds.outcome, &ds.treatment, &ds.customer_ids,
              &e_hat};
  const CoreResult core = estimate_po_core(in, n_bins, ridge_lambda);

  PoEstimate est;
  est.att = core.att;
  est.bin_estimates = core.bins;
  est.merged_bins = core.merged;
  est.n_bootstrap = static_cast<std::size_t>(n_bootstrap);

  if (n_bootstrap > 0) {
    const std::size_t N = ds.n();
    std::vector<double> atts;
    atts.reserve(static_cast<std::size_t>(n_bootstrap));
    for (int rep = 0; rep < n_bootstrap; ++rep) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
      Eigen::MatrixXd Xb(static_cast<Eigen::Index>(N), ds.features.cols());
      Eigen::VectorXd yb(static_cast<Eigen::Index>(N));
      Eigen::VectorXd eb(static_cast<Eigen::Index>(N));
      std::vector<int> db(N);
      std::vector<std::string> idb(N);
      for (std::size_t i = 0; i < N; ++i) {
        const auto pick = static_cast<std::size_t>(rng.uniform_index(N));
        const auto k = static_cast<Eigen::Index>(i);
        const auto p = static_cast<Eigen::Index>(pick);
        Xb.row(k) = ds.features.row(p);
        yb(k) = ds.outcome(p);
        eb(k) = e_hat(p);
        db[i] = ds.treatment[pick];
        idb[i] = ds.customer_ids[pick];
      }
      try {
        PoInputs bin{&Xb, &yb, &db, &idb, &eb};
        atts.push_back(estimate_po_core(bin, n_bins, ridge_lambda).att);
      } catch (const Error&) {
        ++est.bootstrap_failures;
      }
    }
    if (atts.size() < 2) {
      throw EstimationError(
          "estimate_po: bootstrap produced fewer than 2 usable replicates");
    }
    std::sort(atts.begin(), atts.end());
    const double tail = (1.0 - level) / 2.0;
    est.ci_bootstrap = {quantile_sorted(atts, tail),
                        quantile_sorted(atts, 1.0 - tail)};
  }
  return est;
}

}  // namespace cidml
