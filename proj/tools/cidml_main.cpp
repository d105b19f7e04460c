#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cidml/config_json.hpp"
#include "cidml/errors.hpp"
#include "cidml/pipeline.hpp"
#include "cidml/rng.hpp"
#include "cidml/svg.hpp"
#include "cidml/validation.hpp"
#include "cidml/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitEstimation = 4;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw cidml::DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw cidml::DataError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw cidml::DataError("failed writing '" + path + "'");
}

cidml::DgpSpec load_dgp_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw cidml::ConfigError(std::string("spec is not valid JSON: ") +
                             e.what());
  }
  return cidml::dgp_from_json(j, "$");
}

// --seed rolls every stochastic stage off one master value.
void apply_seed_override(cidml::PipelineConfig& cfg, std::uint64_t seed) {
  cfg.folds.seed = seed;
  cfg.hetero.seed = cidml::derive_seed(seed, 1);
  cfg.baseline.seed = cidml::derive_seed(seed, 2);
  if (cfg.data.synthetic) {
    cfg.data.synthetic->seed = cidml::derive_seed(seed, 3);
  }
}

struct StudyCommon {
  std::string spec_path;
  std::string out_path;
  int reps = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  int n_folds = 3;
  bool search_penalty = false;
  std::string svg_path;
};

void add_study_flags(CLI::App* cmd, StudyCommon& c, int default_reps) {
  cmd->add_option("--spec", c.spec_path, "DGP spec JSON file")->required();
  cmd->add_option("--reps", c.reps, "replications")
      ->default_val(default_reps);
  cmd->add_option("--seed", c.seed, "master seed")->default_val(0);
  cmd->add_option("--out", c.out_path, "study report JSON path");
  cmd->add_option("--level", c.level, "confidence level")->default_val(0.95);
  cmd->add_option("--folds", c.n_folds, "cross-fit folds")->default_val(3);
  cmd->add_flag("--search-penalty", c.search_penalty,
                "grid-search nuisance penalties instead of the fixed 1.0");
  cmd->add_option("--svg", c.svg_path, "also write a chart to this SVG path");
}

cidml::EstimatorSettings settings_from(const StudyCommon& c) {
  cidml::EstimatorSettings est;
  est.n_folds = c.n_folds;
  est.level = c.level;
  if (c.search_penalty) {
    est.outcome.penalty.reset();
    est.propensity.penalty.reset();
  }
  return est;
}

void emit_study(const cidml::StudyReport& report, const std::string& out_path) {
  const std::string text = report.to_json().dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
    std::cout << "study report written to " << out_path << "\n";
  }
}

int dispatch(int argc, char** argv) {
  CLI::App app{"causal impact estimation via double machine learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cidml::kLibraryVersion));

  // run
  auto* run = app.add_subcommand("run", "execute a pipeline config");
  std::string run_config, run_out, run_effects;
  std::optional<std::uint64_t> run_seed;
  bool run_plots = false;
  run->add_option("--config", run_config, "pipeline config JSON")->required();
  run->add_option("--out", run_out, "override outputs.report_path");
  run->add_option("--effects", run_effects, "override outputs.effects_path");
  run->add_option("--seed", run_seed, "override all config seeds");
  run->add_flag("--plots", run_plots, "force outputs.plots on");

  // validate-config
  auto* vc = app.add_subcommand("validate-config",
                                "parse and validate a config, then exit");
  std::string vc_config;
  bool vc_print = false;
  vc->add_option("--config", vc_config, "pipeline config JSON")->required();
  vc->add_flag("--print-resolved", vc_print,
               "print the fully resolved config to stdout");

  // generate
  auto* gen = app.add_subcommand("generate",
                                 "write a synthetic dataset as CSV");
  std::string gen_spec, gen_out, gen_truth;
  bool gen_placebo = false;
  gen->add_option("--spec", gen_spec, "DGP spec JSON file")->required();
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--truth", gen_truth, "also write ground truth JSON here");
  gen->add_flag("--placebo", gen_placebo,
                "emit the placebo twin instead of the original draw");

  // studies
  StudyCommon pl, cw, cov;
  auto* plc = app.add_subcommand("placebo-study",
                                 "placebo error comparison (DML vs PO)");
  add_study_flags(plc, pl, 20);
  bool pl_skip_po = false;
  plc->add_flag("--skip-po", pl_skip_po, "run the DML estimator only");

  auto* cwc = app.add_subcommand("ci-width-study",
                                 "CI width comparison (DML HC vs PO bootstrap)");
  add_study_flags(cwc, cw, 20);
  int cw_bootstrap = 200, cw_bins = 5;
  cwc->add_option("--bootstrap", cw_bootstrap, "PO bootstrap replicates")
      ->default_val(200);
  cwc->add_option("--bins", cw_bins, "PO propensity bins")->default_val(5);

  auto* covc = app.add_subcommand("coverage-study",
                                  "CI coverage, bias, and RMSE of beta");
  add_study_flags(covc, cov, 200);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help / --version
      return app.exit(e);
    }
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  if (run->parsed()) {
    cidml::PipelineConfig cfg = cidml::parse_config(read_file(run_config));
    if (!run_out.empty()) {
      cfg.outputs.report_path = run_out;
    }
    if (!run_effects.empty()) cfg.outputs.effects_path = run_effects;
    if (run_plots) cfg.outputs.plots = true;
    if (run_seed) apply_seed_override(cfg, *run_seed);
    const cidml::RunReport result = cidml::run_pipeline(cfg);
    std::cout << "report written to " << cfg.outputs.report_path
              << " (beta = " << result.att.beta << ", digest "
              << result.report["digest"].get<std::string>() << ")\n";
    return kExitOk;
  }

  if (vc->parsed()) {
    const cidml::PipelineConfig cfg = cidml::parse_config(read_file(vc_config));
    if (vc_print) {
      std::cout << cfg.resolved().dump(2) << "\n";
    } else {
      std::cout << "config ok\n";
    }
    return kExitOk;
  }

  if (gen->parsed()) {
    const cidml::DgpSpec spec = load_dgp_spec(gen_spec);
    auto [ds, truth] = cidml::generate(spec);
    if (gen_placebo) {
      ds = cidml::make_placebo(ds, truth, spec);
    }
    cidml::save_csv(ds, gen_out);
    std::cout << "dataset written to " << gen_out << " (" << ds.n()
              << " rows)\n";
    if (!gen_truth.empty()) {
      nlohmann::json t = {
          {"true_att", gen_placebo ? 0.0 : truth.true_att},
          {"true_ate", gen_placebo ? 0.0 : truth.true_ate},
          {"placebo", gen_placebo},
          {"spec", cidml::dgp_to_json(spec)},
      };
      write_file(gen_truth, t.dump(2) + "\n");
    }
    return kExitOk;
  }

  if (plc->parsed()) {
    cidml::PlaceboStudyOptions opts;
    opts.reps = pl.reps;
    opts.seed = pl.seed;
    opts.include_po = !pl_skip_po;
    opts.est = settings_from(pl);
    const cidml::StudyReport report =
        cidml::run_placebo_study(load_dgp_spec(pl.spec_path), opts);
    emit_study(report, pl.out_path);
    if (!pl.svg_path.empty()) {
      std::vector<std::string> labels;
      std::vector<double> values;
      for (const char* est : {"dml", "po"}) {
        if (report.aggregates.contains(est) &&
            report.aggregates[est]["mean_abs_placebo_error"].is_number()) {
          labels.push_back(est);
          values.push_back(
              report.aggregates[est]["mean_abs_placebo_error"].get<double>());
        }
      }
      cidml::write_bar_chart_svg(pl.svg_path, "Mean |placebo error|", labels,
                                 values);
    }
    return kExitOk;
  }

  if (cwc->parsed()) {
    cidml::CiWidthStudyOptions opts;
    opts.reps = cw.reps;
    opts.seed = cw.seed;
    opts.est = settings_from(cw);
    opts.est.po_bootstrap = cw_bootstrap;
    opts.est.po_bins = cw_bins;
    const cidml::StudyReport report =
        cidml::run_ci_width_study(load_dgp_spec(cw.spec_path), opts);
    emit_study(report, cw.out_path);
    if (!cw.svg_path.empty()) {
      std::vector<std::string> labels{"dml_hc", "po_bootstrap"};
      std::vector<double> values{
          report.aggregates["mean_dml_width"].get<double>(),
          report.aggregates["mean_po_width"].get<double>()};
      cidml::write_bar_chart_svg(cw.svg_path, "Mean CI width", labels, values);
    }
    return kExitOk;
  }

  if (covc->parsed()) {
    cidml::CoverageStudyOptions opts;
    opts.reps = cov.reps;
    opts.seed = cov.seed;
    opts.level = cov.level;
    opts.est = settings_from(cov);
    const cidml::StudyReport report =
        cidml::run_coverage_study(load_dgp_spec(cov.spec_path), opts);
    emit_study(report, cov.out_path);
    if (!cov.svg_path.empty()) {
      std::vector<double> betas;
      for (const auto& rec : report.records) {
        if (rec.contains("estimate") && rec["estimate"]["beta"].is_number()) {
          betas.push_back(rec["estimate"]["beta"].get<double>());
        }
      }
      if (betas.empty()) {
        std::cerr << "no successful replications; skipping " << cov.svg_path
                  << "\n";
        return kExitOk;
      }
      const auto [lo_it, hi_it] = std::minmax_element(betas.begin(), betas.end());
      double lo = *lo_it, hi = *hi_it;
      if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
      }
      constexpr int kBins = 15;
      std::vector<double> edges(kBins + 1);
      for (int b = 0; b <= kBins; ++b) {
        edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / kBins;
      }
      std::vector<std::size_t> counts(kBins, 0);
      for (double v : betas) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * kBins);
        if (b >= counts.size()) b = counts.size() - 1;
        ++counts[b];
      }
      cidml::write_histogram_svg(cov.svg_path, "Replication estimates", edges,
                                 counts);
    }
    return kExitOk;
  }

  std::cerr << "no subcommand\n";
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const cidml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cidml::SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const cidml::ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const cidml::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const cidml::NumericalError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const cidml::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const cidml::ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEstimation;
  }
}
