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

#ifndef MI2DAS_LABELS_H_
#define MI2DAS_LABELS_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mi2das {

// Ground-truth taxonomy: Normal plus fourteen attack classes. kUnknown is a
// prediction/pool marker and never a ground-truth label.
enum class ClassLabel : std::uint8_t {
  kNormal = 0,
  kBackdoor,
  kDdosHttp,
  kDdosIcmp,
  kDdosTcp,
  kDdosUdp,
  kFingerprinting,
  kMitm,
  kPassword,
  kPortScanning,
  kRansomware,
  kSqlInjection,
  kUploading,
  kVulnerabilityScan,
  kXss,
  kUnknown,
};

inline constexpr int kNumGroundTruthClasses = 15;
inline constexpr int kNumAttackClasses = 14;

constexpr int label_index(ClassLabel label) {
  return static_cast<int>(label);
}

constexpr bool is_attack(ClassLabel label) {
  return label != ClassLabel::kNormal && label != ClassLabel::kUnknown;
}

// Label with the given ordinal; index must be in [0, 15].
ClassLabel label_from_index(int index);

// Canonical name, e.g. "DDoS_HTTP".
std::string_view to_string(ClassLabel label);

// Parses canonical names and the spellings used in the Edge-IIoTset CSVs
// ("SQL_injection", "Vulnerability_scanner", ...). Case-insensitive.
std::optional<ClassLabel> parse_label(std::string_view text);

// Parses a ground-truth label; rejects "Unknown".
std::optional<ClassLabel> parse_ground_truth(std::string_view text);

// The fourteen attack classes in taxonomy order.
const std::array<ClassLabel, kNumAttackClasses>& attack_classes();

std::vector<std::string> label_names(const std::vector<ClassLabel>& labels);

}  // namespace mi2das

#endif  // MI2DAS_LABELS_H_
