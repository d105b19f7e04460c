#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace cidml {

// Maps file columns onto the data model. An empty `features` list means
// "every column not otherwise claimed, in file order".
struct Schema {
  std::string id_column = "customer_id";
  std::string treatment_column = "treatment";
  std::string outcome_column = "outcome";
  std::vector<std::string> feature_columns;
};

// Immutable after construction; safe to share read-only across workers.
struct Dataset {
  std::vector<std::string> customer_ids;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd features;    // N x M
  std::vector<int> treatment;  // each 0 or 1
  Eigen::VectorXd outcome;

  std::size_t n() const { return customer_ids.size(); }
  std::size_t m() const { return static_cast<std::size_t>(features.cols()); }

  // Enforces the structural invariants: matching lengths, unique ids,
  // binary treatment, finite values. Throws ValidationError.
  void validate() const;

  // True when both treatment arms are present (required before any
  // estimation, but not for loading).
  bool has_both_arms() const;
};

// Loads CSV (default) or JSON-lines (".jsonl"/".ndjson" extension).
Dataset load_dataset(const std::string& path, const Schema& schema);

Dataset load_csv(const std::string& path, const Schema& schema);
Dataset load_jsonl(const std::string& path, const Schema& schema);

// Writes the canonical CSV form: header `id,treatment,outcome,features...`
// with shortest round-trip float formatting, so save/load is bit-exact.
void save_csv(const Dataset& ds, const std::string& path,
              const Schema& schema = Schema{});

// K-fold assignment for cross-fitting.
struct FoldPlan {
  std::vector<int> fold_of;  // per-row fold index in [0, n_folds)
  int n_folds = 0;

  std::vector<std::size_t> fold_sizes() const;
};

// Seeded shuffle followed by round-robin assignment: balanced folds
// (sizes differ by at most one) and a pure function of (n, n_folds, seed).
FoldPlan assign_folds(std::size_t n, int n_folds, std::uint64_t seed);

}  // namespace cidml
