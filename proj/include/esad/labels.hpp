#pragma once

#include <cstdint>
#include <string_view>

namespace esad {

/// Ground truth of a sample, used only for evaluation and scenario building.
enum class GroundTruth : std::uint8_t { Normal = 0, Anomalous = 1 };

/// Training-time tag. Labeled samples carry y = +1 (normal) or y = -1
/// (anomalous); unlabeled samples carry no y.
enum class SemiLabel : std::uint8_t { Unlabeled = 0, LabeledNormal = 1, LabeledAnomalous = 2 };

constexpr bool is_labeled(SemiLabel l) { return l != SemiLabel::Unlabeled; }

/// y in {-1, +1}; 0 for unlabeled samples.
constexpr int label_sign(SemiLabel l) {
  switch (l) {
    case SemiLabel::LabeledNormal: return 1;
    case SemiLabel::LabeledAnomalous: return -1;
    default: return 0;
  }
}

constexpr std::string_view to_string(SemiLabel l) {
  switch (l) {
    case SemiLabel::LabeledNormal: return "labeled_normal";
    case SemiLabel::LabeledAnomalous: return "labeled_anomalous";
    default: return "unlabeled";
  }
}

}  // namespace esad
