#include "mfd/labels.hpp"

#include "mfd/error.hpp"

namespace mfd {

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames = {
    "Benign",    "Bot",   "Exploit", "Trojan",      "Malspam",    "Cryptomix",
    "Locky",     "CrypMic", "Telslacrypt", "CryptXXX", "Cryptowall", "Cerber",
};

}  // namespace

std::string_view label_name(ClassLabel l) { return kNames.at(static_cast<std::size_t>(l)); }

std::optional<ClassLabel> parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

ClassLabel label_from_index(int i) {
  if (i < 0 || i >= static_cast<int>(kNumClasses)) {
    throw Error(Errc::LabelOutOfRange, "class index " + std::to_string(i));
  }
  return static_cast<ClassLabel>(i);
}

std::string_view node1_class_name(int c) { return c == 0 ? "Benign" : "Malicious"; }

std::string_view node2_class_name(int c) {
  static constexpr std::array<std::string_view, kNumBehaviors> names = {
      "Bot", "Exploit", "Trojan", "Malspam", "Ransomware"};
  return names.at(static_cast<std::size_t>(c));
}

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedHeader: return "TruncatedHeader";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::MalformedFrame: return "MalformedFrame";
    case Errc::InvalidFraction: return "InvalidFraction";
    case Errc::UnlabeledFlow: return "UnlabeledFlow";
    case Errc::Io: return "IO";
    case Errc::BadFormat: return "BadFormat";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonPositiveCoefficient: return "NonPositiveCoefficient";
    case Errc::UnknownClass: return "UnknownClass";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::BadSpec: return "BadSpec";
    case Errc::ScaleTooSmall: return "ScaleTooSmall";
    case Errc::TargetTooLarge: return "TargetTooLarge";
    case Errc::ClassTooSmall: return "ClassTooSmall";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::HoldoutUnknown: return "HoldoutUnknown";
    case Errc::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

bool is_data_error(Errc code) noexcept {
  switch (code) {
    case Errc::BadMagic:
    case Errc::TruncatedHeader:
    case Errc::TruncatedRecord:
    case Errc::MalformedFrame:
    case Errc::UnlabeledFlow:
    case Errc::Io:
    case Errc::BadFormat:
    case Errc::EmptyClass:
    case Errc::ClassTooSmall:
      return true;
    default:
      return false;
  }
}

}  // namespace mfd
