// Copyright 2026 The mi2das Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mi2das/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mi2das/errors.h"
#include "mi2das/hash.h"
#include "mi2das/rng.h"

namespace mi2das {
namespace {

using nlohmann::json;

std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // Hexadecimal integer fields (flags) appear as 0x... in some exports.
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      unsigned long long u = 0;
      auto [p2, e2] = std::from_chars(s.data() + 2, s.data() + s.size(), u, 16);
      if (e2 == std::errc() && p2 == s.data() + s.size()) {
        return static_cast<double>(u);
      }
    }
    return std::nullopt;
  }
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

// Splits RFC 4180 CSV text into rows of fields. Quoted fields may contain
// commas, doubled quotes and newlines.
class CsvReader {
 public:
  explicit CsvReader(std::string text) : text_(std::move(text)) {}

  // Returns false at end of input. `line` receives the 1-based line on which
  // the record started.
  bool next(std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    if (pos_ >= text_.size()) return false;
    line = line_;
    std::string field;
    bool quoted = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field += '"';
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field += c;
        }
        continue;
      }
      if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        ++line_;
        break;
      } else if (c != '\r') {
        field += c;
      }
    }
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  // UTF-8 byte-order mark.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    text.erase(0, 3);
  }
  return text;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

double population_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaler / Dataset

void Scaler::apply(std::span<double> x) const {
  if (x.size() != mean.size()) {
    throw InvalidArgument("scaler width " + std::to_string(mean.size()) +
                          " does not match record width " +
                          std::to_string(x.size()));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = stddev[j] > 0.0 ? (x[j] - mean[j]) / stddev[j] : 0.0;
  }
}

std::size_t Dataset::dim() const {
  if (!feature_names.empty()) return feature_names.size();
  return records.empty() ? 0 : records.front().features.size();
}

void Dataset::validate() const {
  const std::size_t d = dim();
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(records.size());
  for (const auto& r : records) {
    if (r.features.size() != d) {
      throw DataError("record " + std::to_string(r.id) + " has " +
                      std::to_string(r.features.size()) + " features, expected " +
                      std::to_string(d));
    }
    for (double v : r.features) {
      if (!std::isfinite(v)) {
        throw DataError("record " + std::to_string(r.id) +
                        " has a non-finite feature");
      }
    }
    if (!ids.insert(r.id).second) {
      throw DataError("duplicate record id " + std::to_string(r.id));
    }
  }
  if (!official_partition.empty() && official_partition.size() != records.size()) {
    throw DataError("official partition tags do not cover every record");
  }
}

Matrix Dataset::features() const {
  Matrix m(records.size(), dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::copy(records[i].features.begin(), records[i].features.end(),
              m.row(i).begin());
  }
  return m;
}

std::vector<ClassLabel> Dataset::labels() const {
  std::vector<ClassLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label) {
      throw DataError("record " + std::to_string(r.id) + " is unlabeled");
    }
    out.push_back(*r.label);
  }
  return out;
}

std::map<ClassLabel, std::size_t> Dataset::class_counts() const {
  std::map<ClassLabel, std::size_t> out;
  for (const auto& r : records) {
    if (r.label) ++out[*r.label];
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.scaler = scaler;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(records.at(i));
  if (!official_partition.empty()) {
    for (std::size_t i : indices) out.official_partition.push_back(official_partition[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

ColumnSchema load_schema(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("schema " + path.string() + ": " + e.what());
  }
  ColumnSchema s;
  s.label_column = j.value("label_column", s.label_column);
  s.drop = j.value("drop", std::vector<std::string>{});
  s.categorical = j.value("categorical", std::vector<std::string>{});
  s.ordinal = j.value("ordinal", std::vector<std::string>{});
  if (j.contains("expected_dim") && !j["expected_dim"].is_null()) {
    s.expected_dim = j["expected_dim"].get<std::size_t>();
  }
  s.train_file = j.value("train_file", s.train_file);
  s.test_file = j.value("test_file", s.test_file);
  return s;
}

RawTable load_edge_iiotset(const std::filesystem::path& path,
                           const ColumnSchema& schema, std::uint64_t first_id) {
  if (!std::filesystem::exists(path)) {
    throw DataError("file not found: " + path.string());
  }
  CsvReader reader(read_file(path));
  std::vector<std::string> header;
  std::size_t line = 0;
  if (!reader.next(header, line)) throw DataError(path.string() + ": zero records");

  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.label_column) label_col = i;
  }
  if (label_col == header.size()) {
    throw DataError(path.string() + ": label column '" + schema.label_column +
                    "' absent");
  }

  RawTable table;
  std::vector<bool> numeric(header.size(), false);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == label_col) continue;
    table.columns.push_back(header[i]);
    numeric[i] = !contains(schema.drop, header[i]) &&
                 !contains(schema.categorical, header[i]) &&
                 !contains(schema.ordinal, header[i]);
  }

  std::vector<std::string> fields;
  std::uint64_t next_id = first_id;
  while (reader.next(fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != header.size()) {
      table.rejections.push_back(
          {line, "expected " + std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size())});
      continue;
    }
    auto label = parse_ground_truth(fields[label_col]);
    if (!label) {
      table.rejections.push_back({line, "unparseable label '" + fields[label_col] + "'"});
      continue;
    }
    std::string missing;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (numeric[i] && fields[i].find_first_not_of(" \t\r") == std::string::npos) {
        missing = header[i];
        break;
      }
    }
    if (!missing.empty()) {
      table.rejections.push_back({line, "missing numeric value in '" + missing + "'"});
      continue;
    }
    std::vector<std::string> row;
    row.reserve(header.size() - 1);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i != label_col) row.push_back(std::move(fields[i]));
    }
    table.cells.push_back(std::move(row));
    table.labels.push_back(*label);
    table.ids.push_back(next_id++);
  }
  if (table.cells.empty()) {
    throw DataError(path.string() + ": zero records after filtering");
  }
  return table;
}

RawTable load_official_split(const std::filesystem::path& dir,
                             const ColumnSchema& schema) {
  const auto train_path = dir / schema.train_file;
  const auto test_path = dir / schema.test_file;
  if (!std::filesystem::exists(train_path) || !std::filesystem::exists(test_path)) {
    throw DataError("official split files absent: expected " + train_path.string() +
                    " and " + test_path.string());
  }
  RawTable train = load_edge_iiotset(train_path, schema, 0);
  RawTable test = load_edge_iiotset(test_path, schema, train.ids.back() + 1);
  if (train.columns != test.columns) {
    throw DataError("official train and test files have different headers");
  }
  train.partition.assign(train.size(), OfficialPartition::kTrain);
  for (std::size_t i = 0; i < test.size(); ++i) {
    train.cells.push_back(std::move(test.cells[i]));
    train.labels.push_back(test.labels[i]);
    train.ids.push_back(test.ids[i]);
    train.partition.push_back(OfficialPartition::kTest);
  }
  for (auto& r : test.rejections) {
    r.reason = schema.test_file + ": " + r.reason;
    train.rejections.push_back(std::move(r));
  }
  return train;
}

Dataset preprocess(const RawTable& raw, const ColumnSchema& schema,
                   const RawTable* fit_on) {
  const RawTable& fit = fit_on ? *fit_on : raw;
  if (fit.columns != raw.columns) {
    throw InvalidArgument("fitting table and input table have different columns");
  }
  for (const auto* list : {&schema.drop, &schema.categorical, &schema.ordinal}) {
    for (const auto& name : *list) {
      if (!contains(raw.columns, name)) {
        throw InvalidArgument("unknown column name '" + name + "'");
      }
    }
  }

  enum class Role { kDrop, kNumeric, kOneHot, kOrdinal };
  struct Column {
    std::size_t source;
    Role role;
    std::vector<std::string> categories;  // sorted
  };
  std::vector<Column> plan;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    const auto& name = raw.columns[c];
    Column col{c, Role::kNumeric, {}};
    if (contains(schema.drop, name)) {
      continue;
    } else if (contains(schema.categorical, name) || contains(schema.ordinal, name)) {
      col.role = contains(schema.categorical, name) ? Role::kOneHot : Role::kOrdinal;
      std::set<std::string> cats;
      for (const auto& row : fit.cells) cats.insert(row[c]);
      col.categories.assign(cats.begin(), cats.end());
      if (col.role == Role::kOneHot) {
        for (const auto& cat : col.categories) names.push_back(name + "=" + cat);
      } else {
        names.push_back(name);
      }
    } else {
      for (const auto* table : {&raw, &fit}) {
        for (std::size_t r = 0; r < table->size(); ++r) {
          if (!parse_number(table->cells[r][c])) {
            throw DataError("non-numeric column '" + name +
                            "' not declared categorical (value '" +
                            table->cells[r][c] + "')");
          }
        }
      }
      names.push_back(name);
    }
    plan.push_back(std::move(col));
  }

  auto encode = [&](const RawTable& table) {
    Dataset ds;
    ds.feature_names = names;
    ds.records.reserve(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) {
      FlowRecord rec;
      rec.id = table.ids[r];
      rec.label = table.labels[r];
      rec.features.reserve(names.size());
      for (const auto& col : plan) {
        const auto& cell = table.cells[r][col.source];
        switch (col.role) {
          case Role::kNumeric:
            rec.features.push_back(*parse_number(cell));
            break;
          case Role::kOneHot:
            for (const auto& cat : col.categories) {
              rec.features.push_back(cat == cell ? 1.0 : 0.0);
            }
            break;
          case Role::kOrdinal: {
            auto it = std::lower_bound(col.categories.begin(), col.categories.end(), cell);
            // Unseen categories share the code one past the last known one.
            const bool seen = it != col.categories.end() && *it == cell;
            rec.features.push_back(static_cast<double>(
                seen ? it - col.categories.begin() : col.categories.size()));
            break;
          }
          case Role::kDrop:
            break;
        }
      }
      ds.records.push_back(std::move(rec));
    }
    ds.official_partition = table.partition;
    return ds;
  };

  Dataset encoded = encode(raw);
  if (schema.expected_dim && encoded.dim() != *schema.expected_dim) {
    throw DataError("encoded dimensionality " + std::to_string(encoded.dim()) +
                    " does not match expected " +
                    std::to_string(*schema.expected_dim));
  }
  const Scaler scaler = fit_scaler(fit_on ? encode(*fit_on) : encoded);
  return standardize(encoded, scaler);
}

Scaler fit_scaler(const Dataset& ds) {
  if (ds.empty()) throw InvalidArgument("cannot fit a scaler on an empty dataset");
  const std::size_t d = ds.dim();
  Scaler s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  std::vector<double> column(ds.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < ds.size(); ++i) column[i] = ds.records[i].features[j];
    const double mu = population_mean(column);
    double ss = 0.0;
    bool constant = true;
    for (double v : column) {
      ss += (v - mu) * (v - mu);
      constant = constant && v == column.front();
    }
    s.mean[j] = mu;
    s.stddev[j] = constant ? 0.0 : std::sqrt(ss / static_cast<double>(column.size()));
  }
  return s;
}

Dataset standardize(const Dataset& ds, const Scaler& scaler) {
  Dataset out = ds;
  for (auto& r : out.records) scaler.apply(r.features);
  out.scaler = scaler;
  return out;
}

// ---------------------------------------------------------------------------
// Splits

namespace {

// Record indices grouped by label, each group ordered by record id.
std::map<ClassLabel, std::vector<std::size_t>> indices_by_label(const Dataset& ds) {
  std::map<ClassLabel, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.records[i].label) {
      throw DataError("record " + std::to_string(ds.records[i].id) + " is unlabeled");
    }
    groups[*ds.records[i].label].push_back(i);
  }
  for (auto& [label, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ds.records[a].id < ds.records[b].id;
    });
  }
  return groups;
}

Dataset subset_sorted_by_id(const Dataset& ds, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ds.records[a].id < ds.records[b].id;
  });
  return ds.subset(idx);
}

}  // namespace

TrainTest make_split(const Dataset& ds, const SplitSpec& spec) {
  TrainTest out;
  if (spec.mode == SplitMode::kOfficial) {
    if (ds.official_partition.size() != ds.size() || ds.empty()) {
      throw DataError("official split files absent: dataset carries no official partition");
    }
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      (ds.official_partition[i] == OfficialPartition::kTrain ? train : test).push_back(i);
    }
    out.train = ds.subset(train);
    out.test = ds.subset(test);
  } else {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
      throw InvalidArgument("train_fraction must lie in (0, 1)");
    }
    Rng rng(spec.seed);
    std::vector<std::size_t> train, test;
    for (auto& [label, idx] : indices_by_label(ds)) {
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_train = static_cast<std::size_t>(
          std::llround(spec.train_fraction * static_cast<double>(idx.size())));
      train.insert(train.end(), idx.begin(), idx.begin() + n_train);
      test.insert(test.end(), idx.begin() + n_train, idx.end());
    }
    out.train = subset_sorted_by_id(ds, std::move(train));
    out.test = subset_sorted_by_id(ds, std::move(test));
  }
  out.train.official_partition.clear();
  out.test.official_partition.clear();
  return out;
}

Dataset sample_balanced_testset(const Dataset& ds, std::size_t n_per_side,
                                std::uint64_t seed) {
  if (n_per_side == 0) throw InvalidArgument("n_per_side must be positive");
  std::vector<std::size_t> normal, attack;
  for (const auto& [label, idx] : indices_by_label(ds)) {
    auto& side = label == ClassLabel::kNormal ? normal : attack;
    side.insert(side.end(), idx.begin(), idx.end());
  }
  if (normal.size() < n_per_side || attack.size() < n_per_side) {
    throw DataError("insufficient samples for a balanced test set of " +
                    std::to_string(n_per_side) + " per side (normal " +
                    std::to_string(normal.size()) + ", attack " +
                    std::to_string(attack.size()) + ")");
  }
  auto by_id = [&](std::size_t a, std::size_t b) {
    return ds.records[a].id < ds.records[b].id;
  };
  std::sort(normal.begin(), normal.end(), by_id);
  std::sort(attack.begin(), attack.end(), by_id);
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t k : sample_without_replacement(normal.size(), n_per_side, rng)) {
    chosen.push_back(normal[k]);
  }
  for (std::size_t k : sample_without_replacement(attack.size(), n_per_side, rng)) {
    chosen.push_back(attack[k]);
  }
  return subset_sorted_by_id(ds, std::move(chosen));
}

const std::array<ClassSplitCounts, kNumGroundTruthClasses>& table1_counts() {
  static const std::array<ClassSplitCounts, kNumGroundTruthClasses> kCounts = {{
      {ClassLabel::kNormal, 24301, 19281, 4820},
      {ClassLabel::kBackdoor, 10195, 7892, 1973},
      {ClassLabel::kDdosHttp, 10561, 8396, 2099},
      {ClassLabel::kDdosIcmp, 14090, 10477, 2619},
      {ClassLabel::kDdosTcp, 10247, 8198, 2049},
      {ClassLabel::kDdosUdp, 14498, 11598, 2900},
      {ClassLabel::kFingerprinting, 1001, 682, 171},
      {ClassLabel::kMitm, 1214, 286, 72},
      {ClassLabel::kPassword, 9989, 7978, 1994},
      {ClassLabel::kPortScanning, 10071, 7137, 1784},
      {ClassLabel::kRansomware, 10925, 7751, 1938},
      {ClassLabel::kSqlInjection, 10311, 8225, 2057},
      {ClassLabel::kUploading, 10269, 8171, 2043},
      {ClassLabel::kVulnerabilityScan, 10076, 8050, 2012},
      {ClassLabel::kXss, 10052, 7634, 1909},
  }};
  return kCounts;
}

std::vector<std::string> check_official_counts(const Dataset& train,
                                               const Dataset& test) {
  std::vector<std::string> problems;
  const auto tr = train.class_counts();
  const auto te = test.class_counts();
  auto count = [](const std::map<ClassLabel, std::size_t>& m, ClassLabel l) {
    auto it = m.find(l);
    return it == m.end() ? std::size_t{0} : it->second;
  };
  for (const auto& row : table1_counts()) {
    const std::size_t a = count(tr, row.label);
    const std::size_t b = count(te, row.label);
    if (a != row.train || b != row.test) {
      problems.push_back(std::string(to_string(row.label)) + ": got (" +
                         std::to_string(a) + ", " + std::to_string(b) +
                         "), expected (" + std::to_string(row.train) + ", " +
                         std::to_string(row.test) + ")");
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Synthetic traffic

void SyntheticConfig::validate() const {
  if (n_classes < 1 || n_classes > kNumGroundTruthClasses) {
    throw InvalidArgument("n_classes must lie in [1, 15]");
  }
  if (dim < 1) throw InvalidArgument("dim must be positive");
  if (samples_per_class < 1) throw InvalidArgument("samples_per_class must be positive");
  if (!(class_separation > 0.0)) throw InvalidArgument("class_separation must be > 0");
  if (normal_modes < 1) throw InvalidArgument("normal_modes must be positive");
}

std::vector<std::vector<double>> synthetic_means(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n_means =
      static_cast<std::size_t>(cfg.normal_modes + cfg.n_classes - 1);
  Rng rng(derive_seed(cfg.seed, 0x6d65616e73ULL));
  // Rejection sampling in a cube that grows until every candidate keeps the
  // required distance from the means already placed.
  double half_width = cfg.class_separation *
                      std::max(1.0, std::pow(static_cast<double>(n_means),
                                             1.0 / static_cast<double>(cfg.dim)));
  const double min_sq = cfg.class_separation * cfg.class_separation;
  std::vector<std::vector<double>> means;
  int failures = 0;
  while (means.size() < n_means) {
    std::uniform_real_distribution<double> coord(-half_width, half_width);
    std::vector<double> candidate(static_cast<std::size_t>(cfg.dim));
    for (auto& v : candidate) v = coord(rng);
    const bool ok = std::all_of(means.begin(), means.end(), [&](const auto& m) {
      return squared_distance(m, candidate) >= min_sq;
    });
    if (ok) {
      means.push_back(std::move(candidate));
      failures = 0;
    } else if (++failures == 200) {
      half_width *= 1.1;
      failures = 0;
    }
  }
  return means;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  const auto means = synthetic_means(cfg);
  Rng rng(derive_seed(cfg.seed, 0x73616d706c65ULL));
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  for (int j = 0; j < cfg.dim; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  std::uint64_t id = 0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int s = 0; s < cfg.samples_per_class; ++s) {
      // Normal samples cycle through the modes so every mode is populated.
      const std::size_t m = c == 0 ? static_cast<std::size_t>(s % cfg.normal_modes)
                                   : static_cast<std::size_t>(cfg.normal_modes + c - 1);
      FlowRecord r;
      r.id = id++;
      r.label = label_from_index(c);
      r.features.resize(static_cast<std::size_t>(cfg.dim));
      for (int j = 0; j < cfg.dim; ++j) {
        r.features[j] = means[m][j] + noise(rng);
      }
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

SyntheticConfig desk_profile(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_classes = 15;
  cfg.dim = 10;
  cfg.samples_per_class = 200;
  cfg.class_separation = 8.0;
  cfg.normal_modes = 3;
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// Dumps

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  json header = {{"format", "mi2das.dataset"}, {"version", 1},
                 {"feature_names", ds.feature_names}};
  if (ds.scaler) {
    header["scaler"] = {{"mean", ds.scaler->mean}, {"stddev", ds.scaler->stddev}};
  }
  out << header.dump() << '\n';
  for (const auto& r : ds.records) {
    json row = {{"id", r.id},
                {"label", r.label ? json(std::string(to_string(*r.label))) : json(nullptr)},
                {"features", r.features}};
    out << row.dump() << '\n';
  }
}

Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  Dataset ds;
  bool first = true;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (first) {
        first = false;
        if (j.value("format", "") != "mi2das.dataset") {
          throw DataError(path.string() + ": not a dataset dump");
        }
        ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        if (j.contains("scaler")) {
          ds.scaler = Scaler{j["scaler"].at("mean").get<std::vector<double>>(),
                             j["scaler"].at("stddev").get<std::vector<double>>()};
        }
        continue;
      }
      FlowRecord r;
      r.id = j.at("id").get<std::uint64_t>();
      if (!j.at("label").is_null()) {
        r.label = parse_ground_truth(j["label"].get<std::string>());
        if (!r.label) throw DataError("bad label on line " + std::to_string(lineno));
      }
      r.features = j.at("features").get<std::vector<double>>();
      ds.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (first) throw DataError(path.string() + ": empty dump");
  ds.validate();
  return ds;
}

std::string dataset_fingerprint(const Dataset& ds) {
  Sha256 h;
  h.update_u64(ds.size()).update_u64(ds.dim());
  for (const auto& r : ds.records) {
    h.update_u64(r.id);
    h.update_u64(r.label ? static_cast<unsigned>(*r.label) : 255U);
    h.update(std::span<const double>(r.features));
  }
  return h.hex_digest();
}

}  // namespace mi2das
