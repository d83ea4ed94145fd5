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

#include "mi2das/labels.h"

#include <algorithm>
#include <cctype>

#include "mi2das/errors.h"

namespace mi2das {
namespace {

constexpr std::array<std::string_view, 16> kNames = {
    "Normal",        "Backdoor",       "DDoS_HTTP",    "DDoS_ICMP",
    "DDoS_TCP",      "DDoS_UDP",       "Fingerprinting", "MITM",
    "Password",      "Port_Scanning",  "Ransomware",   "SQL_Injection",
    "Uploading",     "Vulnerability_Scan", "XSS",      "Unknown",
};

struct Alias {
  std::string_view text;
  ClassLabel label;
};

// Spellings found in the Edge-IIoTset CSV files and in the literature.
constexpr std::array<Alias, 7> kAliases = {{
    {"vulnerability_scanner", ClassLabel::kVulnerabilityScan},
    {"vulnerability scan", ClassLabel::kVulnerabilityScan},
    {"port scanning", ClassLabel::kPortScanning},
    {"sql injection", ClassLabel::kSqlInjection},
    {"xss attack", ClassLabel::kXss},
    {"benign", ClassLabel::kNormal},
    {"mitm (arp spoofing + dns)", ClassLabel::kMitm},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

ClassLabel label_from_index(int index) {
  if (index < 0 || index > label_index(ClassLabel::kUnknown)) {
    throw InvalidArgument("class index out of range: " + std::to_string(index));
  }
  return static_cast<ClassLabel>(index);
}

std::string_view to_string(ClassLabel label) {
  return kNames[static_cast<std::size_t>(label)];
}

std::optional<ClassLabel> parse_label(std::string_view text) {
  const std::string key = lower(trim(text));
  if (key.empty()) return std::nullopt;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (lower(kNames[i]) == key) return static_cast<ClassLabel>(i);
  }
  for (const auto& alias : kAliases) {
    if (alias.text == key) return alias.label;
  }
  return std::nullopt;
}

std::optional<ClassLabel> parse_ground_truth(std::string_view text) {
  auto label = parse_label(text);
  if (label == ClassLabel::kUnknown) return std::nullopt;
  return label;
}

const std::array<ClassLabel, kNumAttackClasses>& attack_classes() {
  static const auto kAttacks = [] {
    std::array<ClassLabel, kNumAttackClasses> out{};
    for (int i = 0; i < kNumAttackClasses; ++i) {
      out[i] = static_cast<ClassLabel>(i + 1);
    }
    return out;
  }();
  return kAttacks;
}

std::vector<std::string> label_names(const std::vector<ClassLabel>& labels) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (auto l : labels) out.emplace_back(to_string(l));
  return out;
}

}  // namespace mi2das
