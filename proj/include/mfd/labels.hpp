#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace mfd {

/// The twelve flow classes, in the fixed order used by every confusion
/// matrix and report.
enum class ClassLabel : int {
  Benign = 0,
  Bot,
  Exploit,
  Trojan,
  Malspam,
  Cryptomix,
  Locky,
  CrypMic,
  Telslacrypt,
  CryptXXX,
  Cryptowall,
  Cerber,
};

inline constexpr std::size_t kNumClasses = 12;
inline constexpr std::size_t kNumBehaviors = 5;   // node2 outputs
inline constexpr std::size_t kNumFamilies = 7;    // node3 outputs

inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels = {
    ClassLabel::Benign,    ClassLabel::Bot,         ClassLabel::Exploit,  ClassLabel::Trojan,
    ClassLabel::Malspam,   ClassLabel::Cryptomix,   ClassLabel::Locky,    ClassLabel::CrypMic,
    ClassLabel::Telslacrypt, ClassLabel::CryptXXX,  ClassLabel::Cryptowall, ClassLabel::Cerber,
};

constexpr int index_of(ClassLabel l) { return static_cast<int>(l); }

std::string_view label_name(ClassLabel l);
std::optional<ClassLabel> parse_label(std::string_view name);
ClassLabel label_from_index(int i);  // throws LabelOutOfRange

// Super-label helpers for the three-stage tree.
//   node1: 0 Benign, 1 Malicious
//   node2: 0 Bot, 1 Exploit, 2 Trojan, 3 Malspam, 4 Ransomware
//   node3: 0 Cryptomix ... 6 Cerber
inline constexpr int kMalicious = 1;
inline constexpr int kRansomware = 4;

constexpr bool is_malicious(ClassLabel l) { return l != ClassLabel::Benign; }
constexpr bool is_ransomware(ClassLabel l) { return index_of(l) >= index_of(ClassLabel::Cryptomix); }

constexpr int node1_class(ClassLabel l) { return is_malicious(l) ? kMalicious : 0; }
/// Only meaningful for malicious labels.
constexpr int node2_class(ClassLabel l) {
  return is_ransomware(l) ? kRansomware : index_of(l) - index_of(ClassLabel::Bot);
}
/// Only meaningful for ransomware labels.
constexpr int node3_class(ClassLabel l) { return index_of(l) - index_of(ClassLabel::Cryptomix); }

std::string_view node1_class_name(int c);
std::string_view node2_class_name(int c);

}  // namespace mfd
