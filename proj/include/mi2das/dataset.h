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

#ifndef MI2DAS_DATASET_H_
#define MI2DAS_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mi2das/labels.h"
#include "mi2das/matrix.h"

namespace mi2das {

// One preprocessed traffic sample.
struct FlowRecord {
  std::uint64_t id = 0;
  std::vector<double> features;
  std::optional<ClassLabel> label;
};

// Per-feature z-score parameters. A zero stddev marks a constant column,
// which standardizes to 0.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  void apply(std::span<double> x) const;
};

enum class OfficialPartition : std::uint8_t { kTrain, kTest };

struct Dataset {
  std::vector<FlowRecord> records;
  std::vector<std::string> feature_names;
  std::optional<Scaler> scaler;
  // Origin of each record when loaded from the official train/test files;
  // empty otherwise.
  std::vector<OfficialPartition> official_partition;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::size_t dim() const;

  // Throws DataError on ragged rows, non-finite values, or duplicate ids.
  void validate() const;

  Matrix features() const;
  // Labels of every record; throws DataError if any record is unlabeled.
  std::vector<ClassLabel> labels() const;
  std::map<ClassLabel, std::size_t> class_counts() const;

  // Same metadata, records at `indices` (in the given order).
  Dataset subset(std::span<const std::size_t> indices) const;

  template <typename Pred>
  Dataset filter(Pred&& keep) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (keep(records[i])) idx.push_back(i);
    }
    return subset(idx);
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion

// Column roles for a raw CSV. Columns not listed in `drop`, `categorical` or
// `ordinal` are numeric.
struct ColumnSchema {
  std::string label_column = "Attack_type";
  std::vector<std::string> drop;
  // One-hot encoded.
  std::vector<std::string> categorical;
  // Encoded as a single column holding the category's rank among the
  // sorted categories of the fitting set.
  std::vector<std::string> ordinal;
  std::optional<std::size_t> expected_dim;
  std::string train_file = "train.csv";
  std::string test_file = "test.csv";
};

ColumnSchema load_schema(const std::filesystem::path& path);

struct RowRejection {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

// Parsed CSV before encoding. `columns` excludes the label column.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;
  std::vector<ClassLabel> labels;
  std::vector<std::uint64_t> ids;
  std::vector<OfficialPartition> partition;
  std::vector<RowRejection> rejections;

  std::size_t size() const { return cells.size(); }
};

// Reads one CSV. Rows with an unparseable label or an empty numeric cell
// are rejected and reported, never silently dropped. Ids are assigned in
// file order starting at `first_id`.
RawTable load_edge_iiotset(const std::filesystem::path& path,
                           const ColumnSchema& schema,
                           std::uint64_t first_id = 0);

// Reads schema.train_file and schema.test_file from `dir` into one table
// tagged with the official partition.
RawTable load_official_split(const std::filesystem::path& dir,
                             const ColumnSchema& schema);

// Drops schema.drop, encodes categorical/ordinal columns and z-scores every
// output column. Encoders and the scaler are fitted on `fit_on` (or on
// `raw` itself when null).
Dataset preprocess(const RawTable& raw, const ColumnSchema& schema,
                   const RawTable* fit_on = nullptr);

Scaler fit_scaler(const Dataset& ds);
Dataset standardize(const Dataset& ds, const Scaler& scaler);

// ---------------------------------------------------------------------------
// Splits and sampling

enum class SplitMode { kOfficial, kRandomStratified };

struct SplitSpec {
  SplitMode mode = SplitMode::kRandomStratified;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct TrainTest {
  Dataset train;
  Dataset test;
};

TrainTest make_split(const Dataset& ds, const SplitSpec& spec);

// n_per_side Normal records plus n_per_side records drawn uniformly without
// replacement from the pooled attack classes.
Dataset sample_balanced_testset(const Dataset& ds, std::size_t n_per_side,
                                std::uint64_t seed);

struct ClassSplitCounts {
  ClassLabel label;
  std::size_t total;
  std::size_t train;
  std::size_t test;
};

// Published per-class counts of the official Edge-IIoTset ML split.
const std::array<ClassSplitCounts, kNumGroundTruthClasses>& table1_counts();

// Human-readable mismatches against table1_counts(); empty when exact.
std::vector<std::string> check_official_counts(const Dataset& train,
                                               const Dataset& test);

// ---------------------------------------------------------------------------
// Synthetic traffic

struct SyntheticConfig {
  int n_classes = 15;
  int dim = 10;
  int samples_per_class = 200;
  // Minimum distance between any two component means, in units of the
  // within-class standard deviation (which is 1).
  double class_separation = 8.0;
  int normal_modes = 3;
  std::uint64_t seed = 7;

  void validate() const;
};

// Class c uses ClassLabel index c; class 0 (Normal) is a mixture of
// normal_modes isotropic Gaussians, every other class a single one.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// Component means generate_synthetic uses for `cfg` (normal modes first).
std::vector<std::vector<double>> synthetic_means(const SyntheticConfig& cfg);

SyntheticConfig desk_profile(std::uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Dumps

void write_jsonl(const Dataset& ds, const std::filesystem::path& path);
Dataset read_jsonl(const std::filesystem::path& path);

std::string dataset_fingerprint(const Dataset& ds);

}  // namespace mi2das

#endif  // MI2DAS_DATASET_H_
