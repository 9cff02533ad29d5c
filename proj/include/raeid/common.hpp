#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace raeid {

// Error categories map one-to-one onto CLI exit codes (2, 3, 4).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Movement labels. The first three form the policy vocabulary; Surrender only
/// ever appears as a rejected alternative scored by the reward model.
enum class Label : int { Rise = 0, Fall = 1, Neutral = 2, Surrender = 3 };

inline constexpr int kNumPolicyLabels = 3;
inline constexpr int kNumRewardLabels = 4;

inline constexpr std::array<Label, 3> kPolicyLabels = {Label::Rise, Label::Fall,
                                                       Label::Neutral};
inline constexpr std::array<Label, 4> kRewardLabels = {
    Label::Rise, Label::Fall, Label::Neutral, Label::Surrender};

constexpr int label_index(Label l) { return static_cast<int>(l); }

inline Label label_from_index(int i) {
  if (i < 0 || i >= kNumRewardLabels) {
    throw std::out_of_range("label index out of range: " + std::to_string(i));
  }
  return static_cast<Label>(i);
}

constexpr bool is_policy_label(Label l) { return label_index(l) < kNumPolicyLabels; }

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view name);

}  // namespace raeid
