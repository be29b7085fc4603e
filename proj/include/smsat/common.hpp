#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smsat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Domain failures (bad input data, infeasible parameters). The CLI maps these
// to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/sequence shapes. Messages carry both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

enum class ClassLabel : std::uint8_t { SpiritualMeditation = 0, Music = 1, NormalSilence = 2 };

inline constexpr std::array<ClassLabel, 3> kAllLabels = {
    ClassLabel::SpiritualMeditation, ClassLabel::Music, ClassLabel::NormalSilence};

inline constexpr int kNumClasses = 3;

inline constexpr int label_index(ClassLabel l) { return static_cast<int>(l); }
inline ClassLabel label_from_index(int i) {
  if (i < 0 || i >= kNumClasses) throw Error("class index out of range: " + std::to_string(i));
  return static_cast<ClassLabel>(i);
}

// Stable serialized names.
inline constexpr std::string_view label_name(ClassLabel l) {
  switch (l) {
    case ClassLabel::SpiritualMeditation: return "SpiritualMeditation";
    case ClassLabel::Music: return "Music";
    case ClassLabel::NormalSilence: return "NormalSilence";
  }
  return "?";
}

// Short codes used in report tables.
inline constexpr std::string_view label_code(ClassLabel l) {
  switch (l) {
    case ClassLabel::SpiritualMeditation: return "SM";
    case ClassLabel::Music: return "M";
    case ClassLabel::NormalSilence: return "NS";
  }
  return "?";
}

inline std::optional<ClassLabel> parse_label(std::string_view s) {
  for (auto l : kAllLabels)
    if (s == label_name(l) || s == label_code(l)) return l;
  return std::nullopt;
}

}  // namespace smsat
