#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cidml/dataset.hpp"
#include "cidml/final_stage.hpp"
#include "cidml/hetero.hpp"
#include "cidml/nuisance.hpp"
#include "cidml/po_baseline.hpp"
#include "cidml/synthgen.hpp"
#include "cidml/weighting.hpp"

namespace cidml {

struct DataConfig {
  std::string path;     // empty when synthetic
  std::string format;   // "csv" | "jsonl"; resolved from the extension
  Schema schema;
  std::optional<DgpSpec> synthetic;
};

struct FoldsConfig {
  int n_folds = 3;
  std::uint64_t seed = 0;
};

struct ModelConfig {
  std::string name;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

struct FinalStageConfig {
  bool include_intercept = false;
};

struct BaselineConfig {
  bool enabled = false;
  int n_bins = 5;
  int n_bootstrap = 200;
  double ridge_lambda = 1.0;
  std::uint64_t seed = 0;
};

struct OutputsConfig {
  std::string report_path = "report.json";
  std::string effects_path = "effects.csv";  // "" disables the CSV
  bool plots = false;
  std::string plots_dir;  // resolved to the report's directory when empty
};

struct PipelineConfig {
  DataConfig data;
  FoldsConfig folds;
  ModelConfig outcome_model{.name = "ridge"};
  ModelConfig propensity_model{.name = "logistic"};
  EstimandSpec weighting;
  FinalStageConfig final_stage;
  HeteroConfig hetero;
  BaselineConfig baseline;
  OutputsConfig outputs;
  double confidence_level = 0.95;

  // Fully materialized config: every field present with its resolved value.
  // parse_config(resolved().dump()) resolves back to the same document.
  nlohmann::json resolved() const;
};

// Registry of nuisance learners keyed by config name. Each entry carries a
// factory building a fitter from (already normalized) hyperparameters and a
// normalizer that validates raw hyperparameters and returns their canonical
// form (the extension point: register a name, then use it in configs).
class ModelRegistry {
 public:
  using ParamNormalizer =
      std::function<nlohmann::json(const nlohmann::json&, const std::string&)>;
  using OutcomeFactory = std::function<OutcomeFitter(const nlohmann::json&)>;
  using PropensityFactory =
      std::function<PropensityFitter(const nlohmann::json&)>;

  void register_outcome(const std::string& name, OutcomeFactory make,
                        ParamNormalizer normalize = nullptr);
  void register_propensity(const std::string& name, PropensityFactory make,
                           ParamNormalizer normalize = nullptr);

  bool has_outcome(const std::string& name) const;
  bool has_propensity(const std::string& name) const;
  std::vector<std::string> outcome_names() const;
  std::vector<std::string> propensity_names() const;

  nlohmann::json normalize_outcome_params(const ModelConfig& cfg,
                                          const std::string& path) const;
  nlohmann::json normalize_propensity_params(const ModelConfig& cfg,
                                             const std::string& path) const;
  OutcomeFitter make_outcome(const ModelConfig& cfg) const;
  PropensityFitter make_propensity(const ModelConfig& cfg) const;

  // "ridge" outcome + "logistic" propensity.
  static const ModelRegistry& builtins();

 private:
  struct OutcomeEntry {
    OutcomeFactory make;
    ParamNormalizer normalize;
  };
  struct PropensityEntry {
    PropensityFactory make;
    ParamNormalizer normalize;
  };
  std::map<std::string, OutcomeEntry> outcome_;
  std::map<std::string, PropensityEntry> propensity_;
};

PipelineConfig parse_config(const std::string& text,
                            const ModelRegistry& registry =
                                ModelRegistry::builtins());
PipelineConfig parse_config_json(const nlohmann::json& j,
                                 const ModelRegistry& registry =
                                     ModelRegistry::builtins());

struct RunReport {
  nlohmann::json report;  // the full JSON document, digest included
  AttEstimate att;
  std::optional<HeteroResult> hetero;
  std::optional<PoEstimate> baseline;
};

// Executes load -> folds -> cross-fit -> weighting -> final stage ->
// (hetero) -> (baseline), assembles the report, and writes report/effects/
// plots unless write_outputs is false.
RunReport run_pipeline(const PipelineConfig& cfg,
                       const ModelRegistry& registry = ModelRegistry::builtins(),
                       bool write_outputs = true);

// FNV-1a 64 over the canonical serialization with "timings", "digest", and
// "config" keys removed at every level, so the digest covers computed
// numbers but not wall clocks or environment-dependent paths; the
// reproducibility digest.
std::string numeric_digest(const nlohmann::json& report);

void write_effects_csv(const std::string& path,
                       const std::vector<CustomerEffect>& effects,
                       double level);

}  // namespace cidml
