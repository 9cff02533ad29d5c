#include "raeid/rng.hpp"

#include <cmath>
#include <numbers>

#include "raeid/common.hpp"

namespace raeid {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(root ^ mix64(index + 1));
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = rng.max() - (rng.max() % n);
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

double standard_normal(Rng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string_view label_name(Label l) {
  switch (l) {
    case Label::Rise: return "Rise";
    case Label::Fall: return "Fall";
    case Label::Neutral: return "Neutral";
    case Label::Surrender: return "Surrender";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view name) {
  for (Label l : kRewardLabels) {
    if (label_name(l) == name) return l;
  }
  return std::nullopt;
}

}  // namespace raeid
