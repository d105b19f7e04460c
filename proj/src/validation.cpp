#include "cidml/validation.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include "cidml/config_json.hpp"
#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"
#include "cidml/po_baseline.hpp"
#include "cidml/rng.hpp"

namespace cidml {

namespace {

constexpr std::uint64_t kStreamFolds = 0x666f6c6473ULL;
constexpr std::uint64_t kStreamPoBoot = 0x706f626f6f74ULL;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

// Mean of records[.][section][field] over the records where it is a number;
// null when none qualify (null rather than NaN keeps aggregate JSON
// comparable, since NaN != NaN would poison the consistency check).
nlohmann::json json_mean(const nlohmann::json& records, const char* section,
                         const char* field) {
  std::vector<double> vals;
  for (const auto& r : records) {
    if (section != nullptr) {
      if (!r.contains(section) || !r[section].is_object() ||
          !r[section].contains(field) || !r[section][field].is_number()) {
        continue;
      }
      vals.push_back(r[section][field].get<double>());
    } else if (r.contains(field) && r[field].is_number()) {
      vals.push_back(r[field].get<double>());
    }
  }
  if (vals.empty()) return nullptr;
  return mean(vals);
}

std::size_t count_failures(const nlohmann::json& records, const char* section) {
  std::size_t k = 0;
  for (const auto& r : records) {
    if (!r.contains(section) || !r[section].is_object() ||
        r[section].contains("error")) {
      ++k;
    }
  }
  return k;
}

nlohmann::json sign_test_p(std::size_t wins, std::size_t n) {
  if (n == 0) return nullptr;
  const std::size_t m = std::min(wins, n - wins);
  return std::min(1.0, 2.0 * binomial_half_cdf(m, n));
}

nlohmann::json aggregate_placebo(const nlohmann::json& records) {
  nlohmann::json agg;
  agg["n_reps"] = records.size();
  for (const char* est : {"dml", "po"}) {
    bool present = false;
    for (const auto& r : records) {
      if (r.contains(est)) present = true;
    }
    if (!present) continue;
    nlohmann::json e;
    e["failures"] = count_failures(records, est);
    e["mean_abs_placebo_error"] = json_mean(records, est, "abs_placebo_error");
    e["mean_scaled_placebo_error"] =
        json_mean(records, est, "scaled_placebo_error");
    e["mean_beta_true"] = json_mean(records, est, "beta_true");
    if (std::string(est) == "dml") {
      std::size_t covered = 0, total = 0;
      for (const auto& r : records) {
        if (r.contains(est) && r[est].contains("ci_covers_zero")) {
          ++total;
          covered += r[est]["ci_covers_zero"].get<bool>() ? 1 : 0;
        }
      }
      e["coverage_of_zero"] =
          total ? nlohmann::json(static_cast<double>(covered) /
                                 static_cast<double>(total))
                : nlohmann::json(nullptr);
    }
    agg[est] = e;
  }

  // Paired comparison over replications where both estimators succeeded.
  std::size_t wins = 0, ties = 0, pairs = 0;
  std::vector<double> diffs;
  for (const auto& r : records) {
    if (!r.contains("dml") || !r.contains("po")) continue;
    if (r["dml"].contains("error") || r["po"].contains("error")) continue;
    const double a = r["dml"]["abs_placebo_error"].get<double>();
    const double b = r["po"]["abs_placebo_error"].get<double>();
    ++pairs;
    diffs.push_back(a - b);
    if (a == b) {
      ++ties;
    } else if (a < b) {
      ++wins;
    }
  }
  if (pairs > 0) {
    nlohmann::json paired;
    paired["n_pairs"] = pairs;
    paired["mean_diff_abs_error"] = mean(diffs);  // dml minus po
    paired["dml_wins"] = wins;
    paired["ties"] = ties;
    paired["sign_test_p"] = sign_test_p(wins, pairs - ties);
    agg["paired"] = paired;
  }

  nlohmann::json timings;
  timings["mean_dml_ms"] = json_mean(records, "timings", "dml_ms");
  timings["mean_po_ms"] = json_mean(records, "timings", "po_ms");
  agg["timings"] = timings;
  return agg;
}

nlohmann::json aggregate_ci_width(const nlohmann::json& records) {
  nlohmann::json agg;
  agg["n_reps"] = records.size();
  agg["failures"] = count_failures(records, "widths");
  agg["mean_dml_width"] = json_mean(records, "widths", "dml_hc");
  agg["mean_po_width"] = json_mean(records, "widths", "po_bootstrap");
  agg["mean_dml_width_scaled"] = json_mean(records, "widths", "dml_hc_scaled");
  agg["mean_po_width_scaled"] =
      json_mean(records, "widths", "po_bootstrap_scaled");
  agg["mean_width_ratio_dml_over_po"] = json_mean(records, "widths", "ratio");
  nlohmann::json timings;
  timings["mean_dml_ms"] = json_mean(records, "timings", "dml_ms");
  timings["mean_po_ms"] = json_mean(records, "timings", "po_ms");
  if (timings["mean_dml_ms"].is_number() && timings["mean_po_ms"].is_number() &&
      timings["mean_dml_ms"].get<double>() > 0.0) {
    timings["po_over_dml_runtime"] = timings["mean_po_ms"].get<double>() /
                                     timings["mean_dml_ms"].get<double>();
  } else {
    timings["po_over_dml_runtime"] = nullptr;
  }
  agg["timings"] = timings;
  return agg;
}

nlohmann::json aggregate_coverage(const nlohmann::json& records) {
  nlohmann::json agg;
  agg["n_reps"] = records.size();
  agg["failures"] = count_failures(records, "estimate");

  std::size_t covered = 0, total = 0;
  std::vector<double> biases, sq;
  for (const auto& r : records) {
    if (!r.contains("estimate") || r["estimate"].contains("error")) continue;
    ++total;
    covered += r["estimate"]["ci_covers_truth"].get<bool>() ? 1 : 0;
    const double b = r["estimate"]["bias"].get<double>();
    biases.push_back(b);
    sq.push_back(b * b);
  }
  if (total > 0) {
    const double cov =
        static_cast<double>(covered) / static_cast<double>(total);
    agg["coverage"] = cov;
    agg["mcse_coverage"] =
        std::sqrt(cov * (1.0 - cov) / static_cast<double>(total));
    agg["mean_bias"] = mean(biases);
    agg["rmse"] = std::sqrt(mean(sq));
  } else {
    agg["coverage"] = nullptr;
    agg["mcse_coverage"] = nullptr;
    agg["mean_bias"] = nullptr;
    agg["rmse"] = nullptr;
  }
  agg["mean_width"] = json_mean(records, "estimate", "width");
  nlohmann::json timings;
  timings["mean_dml_ms"] = json_mean(records, "timings", "dml_ms");
  agg["timings"] = timings;
  return agg;
}

nlohmann::json settings_echo(const EstimatorSettings& s) {
  nlohmann::json j;
  j["n_folds"] = s.n_folds;
  j["outcome_penalty"] = s.outcome.penalty
                             ? nlohmann::json(*s.outcome.penalty)
                             : nlohmann::json(nullptr);
  j["propensity_penalty"] = s.propensity.penalty
                                ? nlohmann::json(*s.propensity.penalty)
                                : nlohmann::json(nullptr);
  j["estimand"] = s.estimand.kind == EstimandKind::ATT ? "ATT" : "ATE";
  j["alpha"] = s.estimand.alpha;
  j["rescale"] = s.estimand.rescale;
  j["common_support"] = s.estimand.common_support;
  j["level"] = s.level;
  j["po_bins"] = s.po_bins;
  j["po_bootstrap"] = s.po_bootstrap;
  j["po_lambda"] = s.po_lambda;
  return j;
}

nlohmann::json att_record(const AttEstimate& att) {
  return nlohmann::json{
      {"beta", att.beta},
      {"ci_hc", {att.ci_hc.first, att.ci_hc.second}},
      {"width", att.ci_hc.second - att.ci_hc.first},
  };
}

}  // namespace

DmlOutcome run_dml(const Dataset& ds, const EstimatorSettings& s,
                   std::uint64_t fold_seed) {
  const FoldPlan plan = assign_folds(ds.n(), s.n_folds, fold_seed);
  const CrossFitResult cf = cross_fit(ds, plan, s.outcome, s.propensity);
  const WeightedSample ws = apply_support_and_trim(cf, ds.treatment, s.estimand);
  DmlOutcome out;
  out.att = estimate_att(cf, ws, s.level, s.include_intercept);
  out.e_hat = cf.e_hat;
  return out;
}

void StudyReport::verify_consistency() const {
  nlohmann::json recomputed;
  switch (kind) {
    case StudyKind::placebo:
      recomputed = aggregate_placebo(records);
      break;
    case StudyKind::ci_width:
      recomputed = aggregate_ci_width(records);
      break;
    case StudyKind::coverage:
      recomputed = aggregate_coverage(records);
      break;
  }
  if (recomputed != aggregates) {
    throw ValidationError(
        "StudyReport: stored aggregates do not match the per-replication "
        "records");
  }
}

nlohmann::json StudyReport::to_json() const {
  verify_consistency();
  const char* name = kind == StudyKind::placebo   ? "placebo"
                     : kind == StudyKind::ci_width ? "ci_width"
                                                   : "coverage";
  return nlohmann::json{{"kind", name},
                        {"config", config_echo},
                        {"records", records},
                        {"aggregates", aggregates}};
}

StudyReport run_placebo_study(const DgpSpec& spec,
                              const PlaceboStudyOptions& opts) {
  if (opts.reps < 2) {
    throw ArgumentError("run_placebo_study: reps must be >= 2");
  }
  if (!opts.include_dml && !opts.include_po) {
    throw ArgumentError("run_placebo_study: no estimator selected");
  }
  spec.validate();

  StudyReport report;
  report.kind = StudyKind::placebo;
  report.config_echo = {{"dgp", dgp_to_json(spec)},
                        {"reps", opts.reps},
                        {"seed", opts.seed},
                        {"estimators",
                         nlohmann::json::array()},
                        {"settings", settings_echo(opts.est)}};
  if (opts.include_dml) report.config_echo["estimators"].push_back("dml");
  if (opts.include_po) report.config_echo["estimators"].push_back("po");

  for (int rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(opts.seed, static_cast<std::uint64_t>(rep));
    DgpSpec rep_spec = spec;
    rep_spec.seed = rep_seed;

    nlohmann::json record;
    record["rep"] = rep;
    record["seed"] = rep_seed;
    nlohmann::json timings;

    const auto [ds, truth] = generate(rep_spec);
    const Dataset placebo = make_placebo(ds, truth, rep_spec);

    // Both estimators share the cross-fitted propensities, so the DML pass
    // runs regardless; its results are only recorded when requested.
    const auto t_dml = Clock::now();
    std::optional<DmlOutcome> real_dml, plac_dml;
    std::string dml_error;
    try {
      real_dml = run_dml(ds, opts.est, derive_seed(rep_seed, kStreamFolds));
      plac_dml =
          run_dml(placebo, opts.est, derive_seed(rep_seed, kStreamFolds + 1));
    } catch (const Error& e) {
      dml_error = e.what();
    }
    timings["dml_ms"] = ms_since(t_dml);

    if (opts.include_dml) {
      if (!dml_error.empty()) {
        record["dml"] = {{"error", dml_error}};
      } else {
        const double beta_true = real_dml->att.beta;
        const double beta_placebo = plac_dml->att.beta;
        nlohmann::json d;
        d["beta_true"] = beta_true;
        d["beta_placebo"] = beta_placebo;
        d["abs_placebo_error"] = std::abs(beta_placebo);
        if (std::abs(beta_true) > 1e-12) {
          d["scaled_placebo_error"] = std::abs(beta_placebo / beta_true);
        } else {
          d["scaled_placebo_error"] = nullptr;
        }
        d["ci_placebo"] = {plac_dml->att.ci_hc.first,
                           plac_dml->att.ci_hc.second};
        d["ci_covers_zero"] = plac_dml->att.ci_hc.first <= 0.0 &&
                              0.0 <= plac_dml->att.ci_hc.second;
        record["dml"] = d;
      }
    }

    if (opts.include_po) {
      const auto t_po = Clock::now();
      try {
        if (!real_dml || !plac_dml) {
          throw EstimationError(
              "estimate_po: no propensity scores (cross-fit failed: " +
              dml_error + ")");
        }
        const PoEstimate real_po =
            estimate_po(ds, real_dml->e_hat, opts.est.po_bins, 0,
                        derive_seed(rep_seed, kStreamPoBoot),
                        opts.est.po_lambda, opts.est.level);
        const PoEstimate plac_po =
            estimate_po(placebo, plac_dml->e_hat, opts.est.po_bins, 0,
                        derive_seed(rep_seed, kStreamPoBoot + 1),
                        opts.est.po_lambda, opts.est.level);
        nlohmann::json p;
        p["beta_true"] = real_po.att;
        p["beta_placebo"] = plac_po.att;
        p["abs_placebo_error"] = std::abs(plac_po.att);
        if (std::abs(real_po.att) > 1e-12) {
          p["scaled_placebo_error"] = std::abs(plac_po.att / real_po.att);
        } else {
          p["scaled_placebo_error"] = nullptr;
        }
        record["po"] = p;
      } catch (const Error& e) {
        record["po"] = {{"error", e.what()}};
      }
      timings["po_ms"] = ms_since(t_po);
    }

    record["timings"] = timings;
    report.records.push_back(std::move(record));
  }

  report.aggregates = aggregate_placebo(report.records);
  return report;
}

StudyReport run_ci_width_study(const DgpSpec& spec,
                               const CiWidthStudyOptions& opts) {
  if (opts.reps < 2) {
    throw ArgumentError("run_ci_width_study: reps must be >= 2");
  }
  if (opts.est.po_bootstrap < 1) {
    throw ArgumentError(
        "run_ci_width_study: the width comparison requires po_bootstrap >= 1");
  }
  spec.validate();

  StudyReport report;
  report.kind = StudyKind::ci_width;
  report.config_echo = {{"dgp", dgp_to_json(spec)},
                        {"reps", opts.reps},
                        {"seed", opts.seed},
                        {"settings", settings_echo(opts.est)}};

  for (int rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(opts.seed, static_cast<std::uint64_t>(rep));
    DgpSpec rep_spec = spec;
    rep_spec.seed = rep_seed;

    nlohmann::json record;
    record["rep"] = rep;
    record["seed"] = rep_seed;
    nlohmann::json timings;

    const auto [ds, truth] = generate(rep_spec);
    (void)truth;
    try {
      const auto t_dml = Clock::now();
      const DmlOutcome dml =
          run_dml(ds, opts.est, derive_seed(rep_seed, kStreamFolds));
      timings["dml_ms"] = ms_since(t_dml);

      const auto t_po = Clock::now();
      const PoEstimate po = estimate_po(
          ds, dml.e_hat, opts.est.po_bins, opts.est.po_bootstrap,
          derive_seed(rep_seed, kStreamPoBoot), opts.est.po_lambda,
          opts.est.level);
      timings["po_ms"] = ms_since(t_po);

      const double dml_width = dml.att.ci_hc.second - dml.att.ci_hc.first;
      const double po_width =
          po.ci_bootstrap->second - po.ci_bootstrap->first;
      nlohmann::json widths;
      widths["dml_hc"] = dml_width;
      widths["po_bootstrap"] = po_width;
      if (std::abs(po.att) > 1e-12) {
        widths["dml_hc_scaled"] = dml_width / std::abs(po.att);
        widths["po_bootstrap_scaled"] = po_width / std::abs(po.att);
      } else {
        widths["dml_hc_scaled"] = nullptr;
        widths["po_bootstrap_scaled"] = nullptr;
      }
      widths["ratio"] = dml_width / po_width;
      record["widths"] = widths;
      record["beta_dml"] = dml.att.beta;
      record["att_po"] = po.att;
    } catch (const Error& e) {
      record["widths"] = {{"error", e.what()}};
    }

    record["timings"] = timings;
    report.records.push_back(std::move(record));
  }

  report.aggregates = aggregate_ci_width(report.records);
  return report;
}

StudyReport run_coverage_study(const DgpSpec& spec,
                               const CoverageStudyOptions& opts) {
  if (opts.reps < 50) {
    throw ArgumentError("run_coverage_study: reps must be >= 50");
  }
  if (!(opts.level > 0.0 && opts.level < 1.0)) {
    throw ArgumentError("run_coverage_study: level must lie in (0, 1)");
  }
  spec.validate();
  EstimatorSettings est = opts.est;
  est.level = opts.level;

  StudyReport report;
  report.kind = StudyKind::coverage;
  report.config_echo = {{"dgp", dgp_to_json(spec)},
                        {"reps", opts.reps},
                        {"seed", opts.seed},
                        {"level", opts.level},
                        {"settings", settings_echo(est)}};

  for (int rep = 0; rep < opts.reps; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(opts.seed, static_cast<std::uint64_t>(rep));
    DgpSpec rep_spec = spec;
    rep_spec.seed = rep_seed;

    nlohmann::json record;
    record["rep"] = rep;
    record["seed"] = rep_seed;
    nlohmann::json timings;

    const auto [ds, truth] = generate(rep_spec);
    try {
      const auto t_dml = Clock::now();
      const DmlOutcome dml =
          run_dml(ds, est, derive_seed(rep_seed, kStreamFolds));
      timings["dml_ms"] = ms_since(t_dml);
      nlohmann::json e = att_record(dml.att);
      e["true_att"] = truth.true_att;
      e["bias"] = dml.att.beta - truth.true_att;
      e["ci_covers_truth"] = dml.att.ci_hc.first <= truth.true_att &&
                             truth.true_att <= dml.att.ci_hc.second;
      record["estimate"] = e;
    } catch (const Error& e) {
      record["estimate"] = {{"error", e.what()}};
    }

    record["timings"] = timings;
    report.records.push_back(std::move(record));
  }

  report.aggregates = aggregate_coverage(report.records);
  return report;
}

}  // namespace cidml
