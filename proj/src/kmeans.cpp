#include <limits>
#include <vector>

#include "cidml/errors.hpp"
#include "cidml/hetero.hpp"
#include "cidml/rng.hpp"

namespace cidml {

namespace {

struct LloydRun {
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
};

Eigen::VectorXd dist2_to(const Eigen::MatrixXd& Z, const Eigen::VectorXd& c) {
  return (Z.rowwise() - c.transpose()).rowwise().squaredNorm();
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& Z, int k, Rng& rng) {
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd centroids(k, Z.cols());
  centroids.row(0) = Z.row(static_cast<Eigen::Index>(
      rng.uniform_index(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = dist2_to(Z, centroids.row(0).transpose());
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        cum += d2(i);
        if (cum >= target) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(
          rng.uniform_index(static_cast<std::uint64_t>(n)));
    }
    centroids.row(c) = Z.row(pick);
    d2 = d2.cwiseMin(dist2_to(Z, centroids.row(c).transpose()));
  }
  return centroids;
}

LloydRun lloyd(const Eigen::MatrixXd& Z, int k, int max_iter, Rng& rng) {
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd centroids = seed_plus_plus(Z, k, rng);
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd min_d2(n);

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d2 =
            (Z.row(i) - centroids.row(c)).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
      min_d2(i) = best_d2;
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, Z.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += Z.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seed an empty cluster at the point farthest from its centroid.
        Eigen::Index far = 0;
        min_d2.maxCoeff(&far);
        centroids.row(c) = Z.row(far);
        min_d2(far) = 0.0;
      }
    }
  }

  LloydRun run;
  run.centroids = std::move(centroids);
  run.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      best_d2 = std::min(best_d2, (Z.row(i) - run.centroids.row(c)).squaredNorm());
    }
    run.inertia += best_d2;
  }
  return run;
}

}  // namespace

ClusterModel fit_kmeans(const Eigen::MatrixXd& Z, int k, std::uint64_t seed,
                        int max_iter, int n_init) {
  if (k < 1) throw ArgumentError("fit_kmeans: k must be >= 1");
  if (Z.rows() < k) throw ArgumentError("fit_kmeans: k exceeds the row count");
  if (max_iter < 1 || n_init < 1) {
    throw ArgumentError("fit_kmeans: max_iter and n_init must be >= 1");
  }

  LloydRun best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < n_init; ++restart) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(restart)));
    LloydRun run = lloyd(Z, k, max_iter, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }

  ClusterModel model;
  model.centroids = std::move(best.centroids);
  model.k = k;
  model.inertia = best.inertia;
  model.seed = seed;
  return model;
}

Eigen::VectorXd cluster_scores(const Eigen::VectorXd& z_row,
                               const ClusterModel& clusters) {
  const int k = clusters.k;
  Eigen::VectorXd d(k);
  for (int c = 0; c < k; ++c) {
    d(c) = (z_row.transpose() - clusters.centroids.row(c)).norm();
  }
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(k);
  for (int c = 0; c < k; ++c) {
    if (d(c) < 1e-12) {  // on a centroid: indicator limit of 1/d weighting
      psi(c) = 1.0;
      return psi;
    }
  }
  const Eigen::VectorXd inv = d.cwiseInverse();
  return inv / inv.sum();
}

Eigen::MatrixXd score_matrix(const Eigen::MatrixXd& Z,
                             const ClusterModel& clusters) {
  Eigen::MatrixXd psi(Z.rows(), clusters.k);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    psi.row(i) = cluster_scores(Z.row(i).transpose(), clusters).transpose();
  }
  return psi;
}

}  // namespace cidml
