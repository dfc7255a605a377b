#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "attrsel/dataset.hpp"
#include "attrsel/feasible.hpp"
#include "attrsel/rng.hpp"
#include "attrsel/vlm.hpp"

namespace attrsel {

enum class LossMode : std::uint8_t {
  kCeIgnoring,
  kCeNegatifying,
  kAslIgnoring,
  kAslNegatifying,
  kSelective,
};

inline constexpr LossMode kAllLossModes[] = {LossMode::kCeIgnoring, LossMode::kCeNegatifying,
                                             LossMode::kAslIgnoring, LossMode::kAslNegatifying,
                                             LossMode::kSelective};

/// "ce_ignoring", "ce_negatifying", "asl_ignoring", "asl_negatifying", "selective".
std::string_view to_string(LossMode m);
std::optional<LossMode> parse_loss_mode(std::string_view s);

/// num_ignore value meaning "the whole sampling pool".
inline constexpr std::size_t kIgnoreAll = std::numeric_limits<std::size_t>::max();

enum class IgnoreCadence : std::uint8_t {
  kPerStep,  // redrawn every time the instance is visited
  kFixed,    // drawn once per instance for the whole run
};

std::string_view to_string(IgnoreCadence c);
std::optional<IgnoreCadence> parse_ignore_cadence(std::string_view s);

struct LossConfig {
  LossMode mode = LossMode::kSelective;
  double gamma_pos = 1.0;
  double gamma_neg = 2.0;
  double gamma_feasible = 4.0;
  double gamma_infeasible = 7.0;
  std::size_t num_ignore = 30;
  bool sample_with_replacement = false;
  IgnoreCadence cadence = IgnoreCadence::kPerStep;

  /// Focusing parameters actually applied: all zero for the CE modes.
  LossConfig effective() const;
  /// Gammas must be finite and >= 0; selective mode additionally requires
  /// gamma_feasible < gamma_infeasible. Throws ConfigError.
  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline constexpr double kClampEps = 1e-7;

inline double clamp_probability(double p) {
  return p < kClampEps ? kClampEps : (p > 1.0 - kClampEps ? 1.0 - kClampEps : p);
}

/// -(1-p)^gamma * ln(p), p clamped.
double positive_term(double p, double gamma);
/// -p^gamma * ln(1-p), p clamped.
double negative_term(double p, double gamma);
/// Derivatives with respect to p, evaluated at the clamped probability.
double positive_term_grad(double p, double gamma);
double negative_term_grad(double p, double gamma);

/// Attributes whose unannotated loss is switched off for one instance.
struct IgnoreMask {
  std::vector<AttrIndex> ignored;  // sorted, distinct

  bool contains(AttrIndex a) const;
  std::size_t size() const { return ignored.size(); }
};

/// Draws min(num_ignore, |pool|) distinct attributes from pool = unannotated
/// ∩ dist.attributes, each draw proportional to the remaining presence mass.
/// With `with_replacement`, num_ignore categorical draws are made and the
/// distinct ones kept. `unannotated` must be sorted.
IgnoreMask sample_ignore_set(const PresenceDistribution& dist,
                             std::span<const AttrIndex> unannotated, std::size_t num_ignore,
                             Rng& rng, bool with_replacement = false);

/// Selective-mode loss of one unannotated attribute.
double unannotated_term(double p, AttrIndex a, ObjectIndex o, const FeasibleSets& fs,
                        const IgnoreMask& mask, const LossConfig& cfg);

/// Summed loss of one instance over all A attributes. Throws NumericError on
/// non-finite probabilities.
double instance_loss(std::span<const double> p, const Instance& instance,
                     const FeasibleSets& fs, const IgnoreMask& mask, const LossConfig& cfg);

/// dL/dp_a for every attribute.
std::vector<double> instance_loss_grad(std::span<const double> p, const Instance& instance,
                                       const FeasibleSets& fs, const IgnoreMask& mask,
                                       const LossConfig& cfg);

/// Loss and gradient in one pass; `grad` must have size A.
double instance_loss_and_grad(std::span<const double> p, const Instance& instance,
                              const FeasibleSets& fs, const IgnoreMask& mask,
                              const LossConfig& cfg, std::span<double> grad);

}  // namespace attrsel
