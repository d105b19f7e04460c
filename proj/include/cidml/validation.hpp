#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "cidml/final_stage.hpp"
#include "cidml/synthgen.hpp"

namespace cidml {

// Shared estimator configuration for the validation studies. Studies default
// to fixed unit penalties so that replication loops stay fast; pass an unset
// penalty to re-enable the grid search.
struct EstimatorSettings {
  int n_folds = 3;
  NuisanceConfig outcome{.penalty = 1.0};
  NuisanceConfig propensity{.penalty = 1.0};
  EstimandSpec estimand{};
  double level = 0.95;
  bool include_intercept = false;
  int po_bins = 5;
  int po_bootstrap = 200;
  double po_lambda = 1.0;
};

struct DmlOutcome {
  AttEstimate att;
  Eigen::VectorXd e_hat;  // out-of-fold propensities, reusable by estimate_po
};

// One-shot DML ATT/ATE estimate: folds -> cross-fit -> weights -> final stage.
DmlOutcome run_dml(const Dataset& ds, const EstimatorSettings& s,
                   std::uint64_t fold_seed);

enum class StudyKind { placebo, ci_width, coverage };

struct StudyReport {
  StudyKind kind = StudyKind::placebo;
  nlohmann::json records = nlohmann::json::array();
  nlohmann::json aggregates;
  nlohmann::json config_echo;

  // Aggregates are a pure function of the records; this recomputes them and
  // throws ValidationError if the stored copy differs.
  void verify_consistency() const;
  nlohmann::json to_json() const;  // verifies, then serializes
};

struct PlaceboStudyOptions {
  int reps = 20;
  std::uint64_t seed = 0;
  bool include_dml = true;
  bool include_po = true;
  EstimatorSettings est{};
};

// Per replication: generate, build the placebo twin, run each estimator on
// both the real and placebo datasets; aggregate mean |placebo error| (raw and
// scaled by the true-event estimate), DML coverage of zero, and a paired sign
// test on |placebo_dml| vs |placebo_po|.
StudyReport run_placebo_study(const DgpSpec& spec,
                              const PlaceboStudyOptions& opts);

struct CiWidthStudyOptions {
  int reps = 20;
  std::uint64_t seed = 0;
  EstimatorSettings est{};
};

// DML HC CI width vs PO bootstrap CI width, both scaled by the PO point
// estimate; mean width ratio and mean runtimes aggregated.
StudyReport run_ci_width_study(const DgpSpec& spec,
                               const CiWidthStudyOptions& opts);

struct CoverageStudyOptions {
  int reps = 200;
  double level = 0.95;
  std::uint64_t seed = 0;
  EstimatorSettings est{};
};

// Fraction of replications whose HC CI contains the DGP's true ATT, plus the
// bias and RMSE of beta.
StudyReport run_coverage_study(const DgpSpec& spec,
                               const CoverageStudyOptions& opts);

}  // namespace cidml
