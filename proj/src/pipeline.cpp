#include "cidml/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cidml/config_json.hpp"
#include "cidml/errors.hpp"
#include "cidml/math_util.hpp"
#include "cidml/svg.hpp"
#include "cidml/version.hpp"

namespace cidml {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

// Rethrows the in-flight exception with stage context, preserving its type so
// the CLI exit-code mapping still sees the original category.
[[noreturn]] void rethrow_with_stage(const char* stage,
                                     const nlohmann::json& timings) {
  const std::string ctx = std::string("stage '") + stage +
                          "' failed (completed timings: " + timings.dump() +
                          "): ";
  try {
    throw;
  } catch (const SchemaError& e) {
    throw SchemaError(ctx + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + e.what());
  } catch (const EstimationError& e) {
    throw EstimationError(ctx + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(ctx + e.what());
  } catch (const Error& e) {
    throw Error(ctx + e.what());
  }
}

std::string double_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) {
      throw DataError("cannot create directory '" +
                      p.parent_path().string() + "': " + ec.message());
    }
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path + "'");
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json strip_volatile(const nlohmann::json& j) {
  if (j.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      // The echoed config carries output paths, which vary across
      // environments without changing any computed number.
      if (it.key() == "timings" || it.key() == "digest" ||
          it.key() == "config") {
        continue;
      }
      out[it.key()] = strip_volatile(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : j) out.push_back(strip_volatile(v));
    return out;
  }
  return j;
}

// --- built-in model plumbing ------------------------------------------------

NuisanceConfig nuisance_from_params(const nlohmann::json& params) {
  NuisanceConfig cfg;
  if (params.contains("penalty") && params["penalty"].is_number()) {
    cfg.penalty = params["penalty"].get<double>();
  } else {
    cfg.penalty.reset();
  }
  cfg.standardize = params.value("standardize", true);
  cfg.max_iter = params.value("max_iter", 100);
  cfg.tol = params.value("tol", 1e-8);
  return cfg;
}

nlohmann::json normalize_ridge_params(const nlohmann::json& params,
                                      const std::string& path) {
  JsonCursor c(params, path);
  nlohmann::json out;
  const auto penalty = c.optional_number("penalty");
  if (penalty && !(*penalty >= 0.0)) c.fail_key("penalty", "must be >= 0");
  out["penalty"] = penalty ? nlohmann::json(*penalty) : nlohmann::json(nullptr);
  out["standardize"] = c.boolean("standardize", true);
  c.finish();
  return out;
}

nlohmann::json normalize_logistic_params(const nlohmann::json& params,
                                         const std::string& path) {
  JsonCursor c(params, path);
  nlohmann::json out;
  const auto penalty = c.optional_number("penalty");
  if (penalty && !(*penalty >= 0.0)) c.fail_key("penalty", "must be >= 0");
  out["penalty"] = penalty ? nlohmann::json(*penalty) : nlohmann::json(nullptr);
  out["standardize"] = c.boolean("standardize", true);
  const long long max_iter = c.integer("max_iter", 100);
  if (max_iter < 1) c.fail_key("max_iter", "must be >= 1");
  out["max_iter"] = max_iter;
  const double tol = c.number("tol", 1e-8);
  if (!(tol > 0.0)) c.fail_key("tol", "must be > 0");
  out["tol"] = tol;
  c.finish();
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

// --- registry ----------------------------------------------------------------

void ModelRegistry::register_outcome(const std::string& name,
                                     OutcomeFactory make,
                                     ParamNormalizer normalize) {
  outcome_[name] = {std::move(make), std::move(normalize)};
}

void ModelRegistry::register_propensity(const std::string& name,
                                        PropensityFactory make,
                                        ParamNormalizer normalize) {
  propensity_[name] = {std::move(make), std::move(normalize)};
}

bool ModelRegistry::has_outcome(const std::string& name) const {
  return outcome_.count(name) > 0;
}

bool ModelRegistry::has_propensity(const std::string& name) const {
  return propensity_.count(name) > 0;
}

std::vector<std::string> ModelRegistry::outcome_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : outcome_) names.push_back(k);
  return names;
}

std::vector<std::string> ModelRegistry::propensity_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : propensity_) names.push_back(k);
  return names;
}

nlohmann::json ModelRegistry::normalize_outcome_params(
    const ModelConfig& cfg, const std::string& path) const {
  const auto it = outcome_.find(cfg.name);
  if (it == outcome_.end()) {
    throw ConfigError(path + ".name: unknown outcome model '" + cfg.name +
                      "'; registered: " + join_names(outcome_names()));
  }
  if (it->second.normalize) {
    return it->second.normalize(cfg.hyperparameters,
                                path + ".hyperparameters");
  }
  return cfg.hyperparameters;
}

nlohmann::json ModelRegistry::normalize_propensity_params(
    const ModelConfig& cfg, const std::string& path) const {
  const auto it = propensity_.find(cfg.name);
  if (it == propensity_.end()) {
    throw ConfigError(path + ".name: unknown propensity model '" + cfg.name +
                      "'; registered: " + join_names(propensity_names()));
  }
  if (it->second.normalize) {
    return it->second.normalize(cfg.hyperparameters,
                                path + ".hyperparameters");
  }
  return cfg.hyperparameters;
}

OutcomeFitter ModelRegistry::make_outcome(const ModelConfig& cfg) const {
  const auto it = outcome_.find(cfg.name);
  if (it == outcome_.end()) {
    throw ConfigError("unknown outcome model '" + cfg.name + "'");
  }
  return it->second.make(cfg.hyperparameters);
}

PropensityFitter ModelRegistry::make_propensity(const ModelConfig& cfg) const {
  const auto it = propensity_.find(cfg.name);
  if (it == propensity_.end()) {
    throw ConfigError("unknown propensity model '" + cfg.name + "'");
  }
  return it->second.make(cfg.hyperparameters);
}

const ModelRegistry& ModelRegistry::builtins() {
  static const ModelRegistry registry = [] {
    ModelRegistry r;
    r.register_outcome(
        "ridge",
        [](const nlohmann::json& params) {
          return make_ridge_fitter(nuisance_from_params(params));
        },
        normalize_ridge_params);
    r.register_propensity(
        "logistic",
        [](const nlohmann::json& params) {
          return make_logistic_fitter(nuisance_from_params(params));
        },
        normalize_logistic_params);
    return r;
  }();
  return registry;
}

// --- config ------------------------------------------------------------------

namespace {

ModelConfig parse_model(JsonCursor& root, const char* key,
                        const std::string& fallback_name) {
  ModelConfig cfg;
  cfg.name = fallback_name;
  if (!root.has(key)) return cfg;
  const nlohmann::json& node = root.raw(key);
  if (node.is_string()) {
    cfg.name = node.get<std::string>();
    return cfg;
  }
  if (!node.is_object()) {
    root.fail_key(key, "expected a model name or object, got " +
                           std::string(node.type_name()));
  }
  JsonCursor c(node, root.path() + "." + key);
  cfg.name = c.require_str("name");
  if (c.has("hyperparameters")) {
    const nlohmann::json& hp = c.raw("hyperparameters");
    if (!hp.is_object()) {
      c.fail_key("hyperparameters", "expected an object, got " +
                                        std::string(hp.type_name()));
    }
    cfg.hyperparameters = hp;
  }
  c.finish();
  return cfg;
}

std::string format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos && path.substr(dot) == ".jsonl") return "jsonl";
  return "csv";
}

std::string default_plots_dir(const std::string& report_path) {
  const std::filesystem::path p(report_path);
  if (p.has_parent_path()) return p.parent_path().string();
  return ".";
}

}  // namespace

PipelineConfig parse_config_json(const nlohmann::json& j,
                                 const ModelRegistry& registry) {
  JsonCursor root(j, "$");
  PipelineConfig cfg;

  {
    JsonCursor d = root.child("data");
    const bool has_path = d.has("path");
    const bool has_synth = d.has("synthetic");
    if (has_path == has_synth) {
      d.fail("exactly one of 'path' or 'synthetic' is required");
    }
    if (has_path) {
      cfg.data.path = d.require_str("path");
      if (cfg.data.path.empty()) d.fail_key("path", "must be nonempty");
      cfg.data.format = d.str("format", format_from_path(cfg.data.path));
      if (cfg.data.format != "csv" && cfg.data.format != "jsonl") {
        d.fail_key("format", "must be 'csv' or 'jsonl'");
      }
      JsonCursor s = d.child("schema");
      cfg.data.schema.id_column = s.str("id_column", "customer_id");
      cfg.data.schema.treatment_column =
          s.str("treatment_column", "treatment");
      cfg.data.schema.outcome_column = s.str("outcome_column", "outcome");
      if (s.has("feature_columns")) {
        const nlohmann::json& fc = s.raw("feature_columns");
        if (!fc.is_array()) {
          s.fail_key("feature_columns", "expected an array of strings");
        }
        for (const auto& v : fc) {
          if (!v.is_string()) {
            s.fail_key("feature_columns", "expected an array of strings");
          }
          cfg.data.schema.feature_columns.push_back(v.get<std::string>());
        }
      }
      s.finish();
    } else {
      cfg.data.synthetic =
          dgp_from_json(d.raw("synthetic"), "$.data.synthetic");
    }
    d.finish();
  }

  {
    JsonCursor f = root.child("folds");
    const long long n_folds = f.integer("n_folds", 3);
    if (n_folds < 2) f.fail_key("n_folds", "cross-fitting needs >= 2 folds");
    cfg.folds.n_folds = static_cast<int>(n_folds);
    cfg.folds.seed = f.seed("seed", 0);
    f.finish();
  }

  cfg.outcome_model = parse_model(root, "outcome_model", "ridge");
  cfg.outcome_model.hyperparameters = registry.normalize_outcome_params(
      cfg.outcome_model, "$.outcome_model");
  cfg.propensity_model = parse_model(root, "propensity_model", "logistic");
  cfg.propensity_model.hyperparameters = registry.normalize_propensity_params(
      cfg.propensity_model, "$.propensity_model");

  {
    JsonCursor w = root.child("weighting");
    const std::string estimand = w.str("estimand", "ATT");
    if (estimand == "ATT") {
      cfg.weighting.kind = EstimandKind::ATT;
    } else if (estimand == "ATE") {
      cfg.weighting.kind = EstimandKind::ATE;
    } else {
      w.fail_key("estimand", "must be 'ATT' or 'ATE'");
    }
    cfg.weighting.alpha = w.number("alpha", 0.001);
    if (!(cfg.weighting.alpha >= 0.0 && cfg.weighting.alpha < 0.5)) {
      w.fail_key("alpha", "must lie in [0, 0.5)");
    }
    cfg.weighting.rescale = w.boolean("rescale", true);
    cfg.weighting.common_support = w.boolean("common_support", true);
    w.finish();
  }

  {
    JsonCursor fs = root.child("final_stage");
    cfg.final_stage.include_intercept = fs.boolean("include_intercept", false);
    fs.finish();
  }

  {
    JsonCursor h = root.child("hetero");
    cfg.hetero.enabled = h.boolean("enabled", true);
    const auto r = h.optional_integer("n_components");
    if (r) {
      if (*r < 1) h.fail_key("n_components", "must be >= 1");
      cfg.hetero.n_components = static_cast<int>(*r);
    }
    cfg.hetero.target_variance = h.number("target_variance", 0.80);
    if (!(cfg.hetero.target_variance > 0.0 &&
          cfg.hetero.target_variance <= 1.0)) {
      h.fail_key("target_variance", "must lie in (0, 1]");
    }
    const long long k = h.integer("k", 20);
    if (k < 2) h.fail_key("k", "needs >= 2 clusters");
    cfg.hetero.k = static_cast<int>(k);
    const long long n_init = h.integer("n_init", 10);
    if (n_init < 1) h.fail_key("n_init", "must be >= 1");
    cfg.hetero.n_init = static_cast<int>(n_init);
    const long long max_iter = h.integer("max_iter", 300);
    if (max_iter < 1) h.fail_key("max_iter", "must be >= 1");
    cfg.hetero.max_iter = static_cast<int>(max_iter);
    cfg.hetero.standardize_features = h.boolean("standardize_features", true);
    cfg.hetero.standardize_pcs = h.boolean("standardize_pcs", true);
    cfg.hetero.seed = h.seed("seed", 0);
    h.finish();
  }

  {
    JsonCursor b = root.child("baseline");
    cfg.baseline.enabled = b.boolean("enabled", false);
    const long long bins = b.integer("n_bins", 5);
    if (bins < 1) b.fail_key("n_bins", "must be >= 1");
    cfg.baseline.n_bins = static_cast<int>(bins);
    const long long boot = b.integer("n_bootstrap", 200);
    if (boot < 0) b.fail_key("n_bootstrap", "must be >= 0");
    cfg.baseline.n_bootstrap = static_cast<int>(boot);
    cfg.baseline.ridge_lambda = b.number("ridge_lambda", 1.0);
    if (!(cfg.baseline.ridge_lambda >= 0.0)) {
      b.fail_key("ridge_lambda", "must be >= 0");
    }
    cfg.baseline.seed = b.seed("seed", 0);
    b.finish();
  }

  {
    JsonCursor o = root.child("outputs");
    cfg.outputs.report_path = o.str("report_path", "report.json");
    if (cfg.outputs.report_path.empty()) {
      o.fail_key("report_path", "must be nonempty");
    }
    cfg.outputs.effects_path = o.str("effects_path", "effects.csv");
    cfg.outputs.plots = o.boolean("plots", false);
    cfg.outputs.plots_dir =
        o.str("plots_dir", default_plots_dir(cfg.outputs.report_path));
    o.finish();
  }

  cfg.confidence_level = root.number("confidence_level", 0.95);
  if (!(cfg.confidence_level > 0.0 && cfg.confidence_level < 1.0)) {
    root.fail_key("confidence_level", "must lie in (0, 1)");
  }

  root.finish();
  return cfg;
}

PipelineConfig parse_config(const std::string& text,
                            const ModelRegistry& registry) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config_json(j, registry);
}

nlohmann::json PipelineConfig::resolved() const {
  nlohmann::json j;
  if (data.synthetic) {
    j["data"] = {{"synthetic", dgp_to_json(*data.synthetic)}};
  } else {
    nlohmann::json schema = {
        {"id_column", data.schema.id_column},
        {"treatment_column", data.schema.treatment_column},
        {"outcome_column", data.schema.outcome_column},
        {"feature_columns", data.schema.feature_columns},
    };
    j["data"] = {{"path", data.path},
                 {"format", data.format},
                 {"schema", schema}};
  }
  j["folds"] = {{"n_folds", folds.n_folds}, {"seed", folds.seed}};
  j["outcome_model"] = {{"name", outcome_model.name},
                        {"hyperparameters", outcome_model.hyperparameters}};
  j["propensity_model"] = {
      {"name", propensity_model.name},
      {"hyperparameters", propensity_model.hyperparameters}};
  j["weighting"] = {
      {"estimand", weighting.kind == EstimandKind::ATT ? "ATT" : "ATE"},
      {"alpha", weighting.alpha},
      {"rescale", weighting.rescale},
      {"common_support", weighting.common_support}};
  j["final_stage"] = {{"include_intercept", final_stage.include_intercept}};
  nlohmann::json h = {
      {"enabled", hetero.enabled},
      {"target_variance", hetero.target_variance},
      {"k", hetero.k},
      {"n_init", hetero.n_init},
      {"max_iter", hetero.max_iter},
      {"standardize_features", hetero.standardize_features},
      {"standardize_pcs", hetero.standardize_pcs},
      {"seed", hetero.seed}};
  h["n_components"] =
      hetero.n_components ? nlohmann::json(*hetero.n_components) : nlohmann::json(nullptr);
  j["hetero"] = h;
  j["baseline"] = {{"enabled", baseline.enabled},
                   {"n_bins", baseline.n_bins},
                   {"n_bootstrap", baseline.n_bootstrap},
                   {"ridge_lambda", baseline.ridge_lambda},
                   {"seed", baseline.seed}};
  j["outputs"] = {{"report_path", outputs.report_path},
                  {"effects_path", outputs.effects_path},
                  {"plots", outputs.plots},
                  {"plots_dir", outputs.plots_dir}};
  j["confidence_level"] = confidence_level;
  return j;
}

// --- report assembly ----------------------------------------------------------

namespace {

nlohmann::json att_to_json(const AttEstimate& att) {
  return nlohmann::json{
      {"beta", att.beta},
      {"var_homoscedastic", att.var_homoscedastic},
      {"var_hc", att.var_hc},
      {"se_homoscedastic", std::sqrt(att.var_homoscedastic)},
      {"se_hc", std::sqrt(att.var_hc)},
      {"ci_homoscedastic",
       {att.ci_homoscedastic.first, att.ci_homoscedastic.second}},
      {"ci_hc", {att.ci_hc.first, att.ci_hc.second}},
      {"level", att.level},
      {"n_used", att.n_used},
  };
}

nlohmann::json summary_to_json(const EffectSummary& s) {
  return nlohmann::json{{"mean_h", s.mean_h},
                        {"pct_ci_crossing_zero", s.pct_ci_crossing_zero},
                        {"histogram",
                         {{"edges", s.bin_edges}, {"counts", s.bin_counts}}}};
}

nlohmann::json fold_metrics_to_json(const std::vector<FoldMetrics>& ms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : ms) {
    arr.push_back({{"fold", m.fold},
                   {"outcome_r2", m.outcome_r2},
                   {"propensity_auc", m.propensity_auc},
                   {"outcome", m.outcome_info},
                   {"propensity", m.propensity_info}});
  }
  return arr;
}

nlohmann::json drop_log_to_json(const DropLog& d) {
  return nlohmann::json{{"treated_common_support", d.treated_common_support},
                        {"control_common_support", d.control_common_support},
                        {"treated_trimming", d.treated_trimming},
                        {"control_trimming", d.control_trimming},
                        {"total", d.total()}};
}

nlohmann::json po_to_json(const PoEstimate& po) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : po.bin_estimates) {
    bins.push_back({{"n_treated", b.n_treated},
                    {"n_control", b.n_control},
                    {"actual_mean", b.actual_mean},
                    {"counterfactual_mean", b.counterfactual_mean},
                    {"delta", b.delta}});
  }
  nlohmann::json j{{"att", po.att},
                   {"n_bootstrap", po.n_bootstrap},
                   {"bootstrap_failures", po.bootstrap_failures},
                   {"merged_bins", po.merged_bins},
                   {"bins", bins}};
  j["ci_bootstrap"] = po.ci_bootstrap
                          ? nlohmann::json::array({po.ci_bootstrap->first,
                                                   po.ci_bootstrap->second})
                          : nlohmann::json(nullptr);
  return j;
}

}  // namespace

std::string numeric_digest(const nlohmann::json& report) {
  const std::string canon = strip_volatile(report).dump();
  char buf[17];
  const std::uint64_t h = fnv1a64(canon);
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

void write_effects_csv(const std::string& path,
                       const std::vector<CustomerEffect>& effects,
                       double level) {
  std::string out = "customer_id,h,se,ci_lo,ci_hi\n";
  (void)level;
  for (const auto& e : effects) {
    out += csv_field(e.customer_id);
    out += ',';
    out += double_str(e.h);
    out += ',';
    out += double_str(std::sqrt(e.var_h));
    out += ',';
    out += double_str(e.ci.first);
    out += ',';
    out += double_str(e.ci.second);
    out += '\n';
  }
  write_text_file(path, out);
}

RunReport run_pipeline(const PipelineConfig& cfg, const ModelRegistry& registry,
                       bool write_outputs) {
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json report;
  report["schema_version"] = kReportSchemaVersion;
  report["library_version"] = kLibraryVersion;
  report["config"] = cfg.resolved();

  // load
  Dataset ds;
  std::optional<DgpTruth> truth;
  {
    const auto t = Clock::now();
    try {
      if (cfg.data.synthetic) {
        auto [d, tr] = generate(*cfg.data.synthetic);
        ds = std::move(d);
        truth = std::move(tr);
      } else if (cfg.data.format == "jsonl") {
        ds = load_jsonl(cfg.data.path, cfg.data.schema);
      } else {
        ds = load_csv(cfg.data.path, cfg.data.schema);
      }
    } catch (...) {
      rethrow_with_stage("load", timings);
    }
    timings["load_ms"] = ms_since(t);
  }

  std::size_t n_treated = 0;
  for (int v : ds.treatment) n_treated += static_cast<std::size_t>(v);
  report["data"] = {{"n", ds.n()},
                    {"m", ds.m()},
                    {"n_treated", n_treated},
                    {"source", cfg.data.synthetic ? "synthetic" : cfg.data.path}};
  if (truth) {
    report["synthetic_truth"] = {{"true_att", truth->true_att},
                                 {"true_ate", truth->true_ate}};
  }

  // folds + cross-fit
  CrossFitResult cf;
  {
    const auto t = Clock::now();
    try {
      const FoldPlan plan =
          assign_folds(ds.n(), cfg.folds.n_folds, cfg.folds.seed);
      cf = cross_fit(ds, plan, registry.make_outcome(cfg.outcome_model),
                     registry.make_propensity(cfg.propensity_model));
    } catch (...) {
      rethrow_with_stage("cross_fit", timings);
    }
    timings["cross_fit_ms"] = ms_since(t);
  }
  report["nuisance"] = {{"fold_metrics", fold_metrics_to_json(cf.fit_metrics)}};

  // weighting
  WeightedSample ws;
  {
    const auto t = Clock::now();
    try {
      ws = apply_support_and_trim(cf, ds.treatment, cfg.weighting);
    } catch (...) {
      rethrow_with_stage("weighting", timings);
    }
    timings["weighting_ms"] = ms_since(t);
  }
  report["weighting"] = {{"n_total", ds.n()},
                         {"n_kept", ws.kept_indices.size()},
                         {"drop_log", drop_log_to_json(ws.drop_log)}};

  // final stage
  RunReport result;
  {
    const auto t = Clock::now();
    try {
      result.att = estimate_att(cf, ws, cfg.confidence_level,
                                cfg.final_stage.include_intercept);
    } catch (...) {
      rethrow_with_stage("final_stage", timings);
    }
    timings["final_stage_ms"] = ms_since(t);
  }
  nlohmann::json att_json = att_to_json(result.att);
  att_json["estimand"] =
      cfg.weighting.kind == EstimandKind::ATT ? "ATT" : "ATE";
  report["att"] = att_json;

  // hetero
  if (cfg.hetero.enabled) {
    const auto t = Clock::now();
    try {
      result.hetero =
          estimate_hetero(ds, cf, ws, cfg.hetero, cfg.confidence_level);
    } catch (...) {
      rethrow_with_stage("hetero", timings);
    }
    timings["hetero_ms"] = ms_since(t);

    const HeteroResult& hr = *result.hetero;
    nlohmann::json h;
    h["k"] = hr.model.clusters.k;
    h["n_components"] = hr.model.basis.r();
    h["explained_variance_ratio"] = std::vector<double>(
        hr.model.basis.explained_variance_ratio.data(),
        hr.model.basis.explained_variance_ratio.data() +
            hr.model.basis.explained_variance_ratio.size());
    h["cumulative_explained_variance"] =
        hr.model.basis.explained_variance_ratio.sum();
    h["kmeans_inertia"] = hr.model.clusters.inertia;
    h["effective_rank"] = hr.model.effective_rank;
    h["beta"] = std::vector<double>(
        hr.model.beta.data(), hr.model.beta.data() + hr.model.beta.size());
    h["n_effects"] = hr.effects.size();
    h["summary_all"] = summary_to_json(hr.summary_all);
    h["summary_treated"] = summary_to_json(hr.summary_treated);
    report["hetero"] = h;
  }

  // baseline
  if (cfg.baseline.enabled) {
    const auto t = Clock::now();
    try {
      result.baseline = estimate_po(ds, cf.e_hat, cfg.baseline.n_bins,
                                    cfg.baseline.n_bootstrap,
                                    cfg.baseline.seed,
                                    cfg.baseline.ridge_lambda,
                                    cfg.confidence_level);
    } catch (...) {
      rethrow_with_stage("baseline", timings);
    }
    timings["baseline_ms"] = ms_since(t);
    report["baseline"] = po_to_json(*result.baseline);
  }

  nlohmann::json seeds = {{"folds", cfg.folds.seed},
                          {"hetero", cfg.hetero.seed},
                          {"baseline", cfg.baseline.seed}};
  if (cfg.data.synthetic) seeds["synthetic"] = cfg.data.synthetic->seed;
  report["seeds"] = seeds;

  report["digest"] = numeric_digest(report);
  report["timings"] = timings;  // excluded from the digest by construction
  result.report = report;

  if (write_outputs) {
    try {
      write_text_file(cfg.outputs.report_path, report.dump(2) + "\n");
      if (result.hetero && !cfg.outputs.effects_path.empty()) {
        write_effects_csv(cfg.outputs.effects_path, result.hetero->effects,
                          cfg.confidence_level);
      }
      if (cfg.outputs.plots) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.outputs.plots_dir, ec);
        if (result.hetero) {
          const auto& spectrum = result.hetero->model.basis.spectrum;
          std::vector<double> xs, ys;
          double cum = 0.0;
          for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
            cum += spectrum(i);
            xs.push_back(static_cast<double>(i + 1));
            ys.push_back(cum);
          }
          if (xs.size() >= 2) {
            write_line_chart_svg(
                cfg.outputs.plots_dir + "/explained_variance.svg",
                "Cumulative explained variance by component", xs, ys);
          }
          write_histogram_svg(cfg.outputs.plots_dir + "/effects_hist.svg",
                              "Customer-level effect distribution",
                              result.hetero->summary_all.bin_edges,
                              result.hetero->summary_all.bin_counts);
        }
      }
    } catch (...) {
      rethrow_with_stage("outputs", timings);
    }
  }
  return result;
}

}  // namespace cidml
