#include <algorithm>
#include <cmath>

#include "cidml/errors.hpp"
#include "cidml/hetero.hpp"

namespace cidml {

Eigen::MatrixXd PcaBasis::transform(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd Z = X.rowwise() - means.transpose();
  if (scales.size() > 0) {
    Z = Z.array().rowwise() / scales.transpose().array();
  }
  return Z * components;
}

PcaBasis fit_pca(const Eigen::MatrixXd& X, const PcaTarget& target,
                 bool standardize) {
  const Eigen::Index N = X.rows();
  const Eigen::Index M = X.cols();
  if (N < 2) throw ArgumentError("fit_pca: need at least 2 rows");
  if (target.variance) {
    if (!(*target.variance > 0.0 && *target.variance <= 1.0)) {
      throw ArgumentError("fit_pca: target variance must lie in (0, 1]");
    }
  } else if (target.components) {
    if (*target.components < 1 ||
        *target.components > static_cast<int>(std::min(N, M))) {
      throw ArgumentError("fit_pca: component count out of range");
    }
  } else {
    throw ArgumentError("fit_pca: target must set a fraction or a count");
  }

  PcaBasis basis;
  basis.means = X.colwise().mean();
  Eigen::MatrixXd Z = X.rowwise() - basis.means.transpose();
  if (standardize) {
    basis.scales.resize(M);
    const double n = static_cast<double>(N);
    for (Eigen::Index j = 0; j < M; ++j) {
      const double sd = std::sqrt(Z.col(j).squaredNorm() / n);
      basis.scales(j) = (sd > 0.0) ? sd : 1.0;
    }
    Z = Z.array().rowwise() / basis.scales.transpose().array();
  }

  // Population covariance; eigenvalues are per-component variances.
  const Eigen::MatrixXd cov =
      (Z.transpose() * Z) / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("fit_pca: eigendecomposition failed");
  }

  // Eigen returns ascending order; flip to descending and clamp round-off.
  Eigen::VectorXd vals = eig.eigenvalues().reverse();
  Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < vals.size(); ++j) {
    if (vals(j) < 0.0) vals(j) = 0.0;
  }
  const double total = vals.sum();
  if (!(total > 0.0)) {
    throw EstimationError("fit_pca: features have zero variance");
  }

  // Deterministic sign: largest-magnitude loading is positive.
  for (Eigen::Index j = 0; j < vecs.cols(); ++j) {
    Eigen::Index arg = 0;
    vecs.col(j).cwiseAbs().maxCoeff(&arg);
    if (vecs(arg, j) < 0.0) vecs.col(j) = -vecs.col(j);
  }

  basis.spectrum = vals / total;

  int r = 0;
  if (target.components) {
    r = *target.components;
  } else {
    double cum = 0.0;
    for (Eigen::Index j = 0; j < vals.size(); ++j) {
      cum += basis.spectrum(j);
      ++r;
      if (cum >= *target.variance - 1e-12) break;
    }
  }
  r = std::min<int>(r, static_cast<int>(vals.size()));

  basis.components = vecs.leftCols(r);
  basis.explained_variance_ratio = basis.spectrum.head(r);
  basis.component_sd = vals.head(r).cwiseSqrt();
  return basis;
}

}  // namespace cidml
