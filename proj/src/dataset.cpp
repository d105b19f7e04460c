#include "cidml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cidml/errors.hpp"
#include "cidml/rng.hpp"

namespace cidml {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits one CSV record. Supports RFC-style quoting with doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_cell(const std::string& raw, std::size_t row,
                         const std::string& column) {
  const std::string s = trim(raw);
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end || s.empty()) {
    throw ValidationError("row " + std::to_string(row) + ", column '" + column +
                          "': cannot parse '" + raw + "' as a number");
  }
  if (!std::isfinite(value)) {
    throw ValidationError("row " + std::to_string(row) + ", column '" + column +
                          "': non-finite value '" + raw + "'");
  }
  return value;
}

int parse_treatment_cell(const std::string& raw, std::size_t row,
                         const std::string& column) {
  const std::string s = trim(raw);
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw ValidationError("row " + std::to_string(row) + ", column '" + column +
                        "': treatment must be the integer 0 or 1, got '" + raw +
                        "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n") != std::string::npos;
}

std::string csv_escape(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

struct ColumnLayout {
  std::size_t id = 0;
  std::size_t treatment = 0;
  std::size_t outcome = 0;
  std::vector<std::size_t> features;
  std::vector<std::string> feature_names;
};

ColumnLayout resolve_columns(const std::vector<std::string>& header,
                             const Schema& schema, const std::string& path) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (index.count(header[i])) {
      throw SchemaError(path + ": duplicate column '" + header[i] + "'");
    }
    index[header[i]] = i;
  }
  auto require = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw SchemaError(path + ": missing " + std::string(role) + " column '" +
                        name + "'");
    }
    return it->second;
  };
  ColumnLayout layout;
  layout.id = require(schema.id_column, "id");
  layout.treatment = require(schema.treatment_column, "treatment");
  layout.outcome = require(schema.outcome_column, "outcome");
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == layout.id || i == layout.treatment || i == layout.outcome) continue;
      layout.features.push_back(i);
      layout.feature_names.push_back(header[i]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      layout.features.push_back(require(name, "feature"));
      layout.feature_names.push_back(name);
    }
  }
  if (layout.features.empty()) {
    throw SchemaError(path + ": no feature columns");
  }
  return layout;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t N = customer_ids.size();
  if (N == 0) throw ValidationError("dataset is empty");
  if (static_cast<std::size_t>(features.rows()) != N ||
      treatment.size() != N ||
      static_cast<std::size_t>(outcome.size()) != N) {
    throw ValidationError("dataset containers disagree on row count");
  }
  if (features.cols() < 1) throw ValidationError("dataset has no features");
  if (feature_names.size() != static_cast<std::size_t>(features.cols())) {
    throw ValidationError("feature name count does not match feature columns");
  }
  std::unordered_set<std::string> seen;
  seen.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (!seen.insert(customer_ids[i]).second) {
      throw ValidationError("duplicate customer id '" + customer_ids[i] + "'");
    }
    if (treatment[i] != 0 && treatment[i] != 1) {
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": treatment not in {0,1}");
    }
    if (!std::isfinite(outcome(static_cast<Eigen::Index>(i)))) {
      throw ValidationError("row " + std::to_string(i + 1) +
                            ": non-finite outcome");
    }
  }
  if (!features.allFinite()) {
    throw ValidationError("feature matrix contains non-finite entries");
  }
}

bool Dataset::has_both_arms() const {
  bool any0 = false, any1 = false;
  for (int d : treatment) {
    (d == 0 ? any0 : any1) = true;
    if (any0 && any1) return true;
  }
  return false;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  const ColumnLayout layout = resolve_columns(split_csv_line(line), schema, path);

  Dataset ds;
  ds.feature_names = layout.feature_names;
  std::vector<std::vector<double>> feat_rows;
  std::vector<double> outcomes;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    const std::size_t needed =
        1 + std::max({layout.id, layout.treatment, layout.outcome,
                      *std::max_element(layout.features.begin(),
                                        layout.features.end())});
    if (fields.size() < needed) {
      throw ValidationError(path + ": row " + std::to_string(row) +
                            " has too few fields");
    }
    ds.customer_ids.push_back(fields[layout.id]);
    ds.treatment.push_back(parse_treatment_cell(fields[layout.treatment], row,
                                                schema.treatment_column));
    outcomes.push_back(
        parse_double_cell(fields[layout.outcome], row, schema.outcome_column));
    std::vector<double> feats(layout.features.size());
    for (std::size_t j = 0; j < layout.features.size(); ++j) {
      feats[j] = parse_double_cell(fields[layout.features[j]], row,
                                   layout.feature_names[j]);
    }
    feat_rows.push_back(std::move(feats));
  }
  if (row == 0) throw ValidationError(path + ": no data rows");

  const std::size_t N = feat_rows.size();
  const std::size_t M = layout.features.size();
  ds.features.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(M));
  ds.outcome.resize(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    ds.outcome(static_cast<Eigen::Index>(i)) = outcomes[i];
    for (std::size_t j = 0; j < M; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          feat_rows[i][j];
    }
  }
  ds.validate();
  return ds;
}

Dataset load_jsonl(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path + ": line " + std::to_string(lineno) + ": " +
                            e.what());
    }
    if (!obj.is_object()) {
      throw ValidationError(path + ": line " + std::to_string(lineno) +
                            ": expected a JSON object");
    }
    rows.push_back(std::move(obj));
  }
  if (rows.empty()) throw ValidationError(path + ": no data rows");

  // Resolve the feature set from the first row when the schema leaves it open.
  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (auto it = rows[0].begin(); it != rows[0].end(); ++it) {
      const std::string& key = it.key();
      if (key == schema.id_column || key == schema.treatment_column ||
          key == schema.outcome_column) {
        continue;
      }
      feature_names.push_back(key);
    }
    std::sort(feature_names.begin(), feature_names.end());
  }
  if (feature_names.empty()) throw SchemaError(path + ": no feature columns");

  Dataset ds;
  ds.feature_names = feature_names;
  const std::size_t N = rows.size();
  const std::size_t M = feature_names.size();
  ds.features.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(M));
  ds.outcome.resize(static_cast<Eigen::Index>(N));

  auto require_key = [&](const nlohmann::json& obj, const std::string& key,
                         std::size_t row) -> const nlohmann::json& {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      throw SchemaError(path + ": row " + std::to_string(row) +
                        ": missing key '" + key + "'");
    }
    return *it;
  };

  for (std::size_t i = 0; i < N; ++i) {
    const auto& obj = rows[i];
    const std::size_t row = i + 1;
    const auto& idv = require_key(obj, schema.id_column, row);
    if (!idv.is_string()) {
      throw ValidationError(path + ": row " + std::to_string(row) +
                            ": id must be a string");
    }
    ds.customer_ids.push_back(idv.get<std::string>());

    const auto& dv = require_key(obj, schema.treatment_column, row);
    if (!dv.is_number_integer() ||
        (dv.get<long long>() != 0 && dv.get<long long>() != 1)) {
      throw ValidationError(path + ": row " + std::to_string(row) +
                            ", column '" + schema.treatment_column +
                            "': treatment must be the integer 0 or 1");
    }
    ds.treatment.push_back(static_cast<int>(dv.get<long long>()));

    const auto& yv = require_key(obj, schema.outcome_column, row);
    if (!yv.is_number()) {
      throw ValidationError(path + ": row " + std::to_string(row) +
                            ", column '" + schema.outcome_column +
                            "': outcome must be a number");
    }
    const double y = yv.get<double>();
    if (!std::isfinite(y)) {
      throw ValidationError(path + ": row " + std::to_string(row) +
                            ", column '" + schema.outcome_column +
                            "': non-finite outcome");
    }
    ds.outcome(static_cast<Eigen::Index>(i)) = y;

    for (std::size_t j = 0; j < M; ++j) {
      const auto& fv = require_key(obj, feature_names[j], row);
      if (!fv.is_number()) {
        throw ValidationError(path + ": row " + std::to_string(row) +
                              ", column '" + feature_names[j] +
                              "': feature must be a number");
      }
      const double x = fv.get<double>();
      if (!std::isfinite(x)) {
        throw ValidationError(path + ": row " + std::to_string(row) +
                              ", column '" + feature_names[j] +
                              "': non-finite value");
      }
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
    }
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  const auto dot = path.find_last_of('.');
  const std::string ext = (dot == std::string::npos) ? "" : path.substr(dot);
  if (ext == ".jsonl" || ext == ".ndjson") return load_jsonl(path, schema);
  return load_csv(path, schema);
}

void save_csv(const Dataset& ds, const std::string& path, const Schema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << csv_escape(schema.id_column) << ',' << csv_escape(schema.treatment_column)
      << ',' << csv_escape(schema.outcome_column);
  for (const auto& name : ds.feature_names) out << ',' << csv_escape(name);
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out << csv_escape(ds.customer_ids[i]) << ',' << ds.treatment[i] << ','
        << format_double(ds.outcome(row));
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      out << ',' << format_double(ds.features(row, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_folds), 0);
  for (int f : fold_of) sizes[static_cast<std::size_t>(f)]++;
  return sizes;
}

FoldPlan assign_folds(std::size_t n, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ArgumentError("assign_folds: n_folds must be >= 2");
  if (n < static_cast<std::size_t>(n_folds)) {
    throw ArgumentError("assign_folds: n < n_folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.fold_of.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    plan.fold_of[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(n_folds));
  }
  return plan;
}

}  // namespace cidml
