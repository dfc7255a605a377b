#include "attrsel/loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "attrsel/error.hpp"

namespace attrsel {

namespace {

constexpr std::array<std::string_view, 5> kModeNames = {
    "ce_ignoring", "ce_negatifying", "asl_ignoring", "asl_negatifying", "selective"};

bool is_ce(LossMode m) { return m == LossMode::kCeIgnoring || m == LossMode::kCeNegatifying; }
bool is_ignoring(LossMode m) {
  return m == LossMode::kCeIgnoring || m == LossMode::kAslIgnoring;
}

// p^g with the convention 0^0 = 1 and no pow() call for the common integer
// exponents used by the default configuration.
double power(double base, double g) {
  if (g == 0.0) return 1.0;
  if (g == 1.0) return base;
  if (g == 2.0) return base * base;
  return std::pow(base, g);
}

}  // namespace

std::string_view to_string(LossMode m) { return kModeNames[static_cast<std::size_t>(m)]; }

std::optional<LossMode> parse_loss_mode(std::string_view s) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == s) return static_cast<LossMode>(i);
  }
  return std::nullopt;
}

std::string_view to_string(IgnoreCadence c) {
  return c == IgnoreCadence::kPerStep ? "per_step" : "fixed";
}

std::optional<IgnoreCadence> parse_ignore_cadence(std::string_view s) {
  if (s == "per_step") return IgnoreCadence::kPerStep;
  if (s == "fixed") return IgnoreCadence::kFixed;
  return std::nullopt;
}

LossConfig LossConfig::effective() const {
  LossConfig e = *this;
  if (is_ce(mode)) {
    e.gamma_pos = e.gamma_neg = e.gamma_feasible = e.gamma_infeasible = 0.0;
  }
  return e;
}

void LossConfig::validate() const {
  for (double g : {gamma_pos, gamma_neg, gamma_feasible, gamma_infeasible}) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw ConfigError("focusing parameters must be finite and >= 0");
    }
  }
  if (mode == LossMode::kSelective && !(gamma_feasible < gamma_infeasible)) {
    throw ConfigError("selective mode requires gamma_feasible < gamma_infeasible (got " +
                      std::to_string(gamma_feasible) + " and " +
                      std::to_string(gamma_infeasible) + ")");
  }
}

double positive_term(double p, double gamma) {
  p = clamp_probability(p);
  return -power(1.0 - p, gamma) * std::log(p);
}

double negative_term(double p, double gamma) {
  p = clamp_probability(p);
  return -power(p, gamma) * std::log1p(-p);
}

double positive_term_grad(double p, double gamma) {
  p = clamp_probability(p);
  const double q = 1.0 - p;
  double g = -power(q, gamma) / p;
  if (gamma != 0.0) g += gamma * power(q, gamma - 1.0) * std::log(p);
  return g;
}

double negative_term_grad(double p, double gamma) {
  p = clamp_probability(p);
  double g = power(p, gamma) / (1.0 - p);
  if (gamma != 0.0) g -= gamma * power(p, gamma - 1.0) * std::log1p(-p);
  return g;
}

bool IgnoreMask::contains(AttrIndex a) const {
  return std::binary_search(ignored.begin(), ignored.end(), a);
}

IgnoreMask sample_ignore_set(const PresenceDistribution& dist,
                             std::span<const AttrIndex> unannotated, std::size_t num_ignore,
                             Rng& rng, bool with_replacement) {
  IgnoreMask mask;
  std::vector<AttrIndex> pool;
  std::vector<double> weight;
  std::set_intersection(unannotated.begin(), unannotated.end(), dist.attributes.begin(),
                        dist.attributes.end(), std::back_inserter(pool));
  if (pool.empty() || num_ignore == 0) return mask;
  if (num_ignore >= pool.size() && (!with_replacement || num_ignore == kIgnoreAll)) {
    mask.ignored = std::move(pool);
    return mask;
  }
  weight.reserve(pool.size());
  for (AttrIndex a : pool) weight.push_back(dist.prob(a));

  // One categorical draw over the live entries of `weight`, renormalized.
  auto draw = [&]() -> std::size_t {
    double total = 0.0;
    std::size_t live = 0;
    for (double w : weight) {
      if (w >= 0.0) {
        total += w;
        ++live;
      }
    }
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      std::size_t last = 0;
      for (std::size_t k = 0; k < weight.size(); ++k) {
        if (weight[k] < 0.0) continue;
        last = k;
        if (u < weight[k]) return k;
        u -= weight[k];
      }
      return last;
    }
    // All remaining mass underflowed: uniform over what is left.
    auto target = uniform_index(rng, live);
    for (std::size_t k = 0; k < weight.size(); ++k) {
      if (weight[k] < 0.0) continue;
      if (target-- == 0) return k;
    }
    return weight.size() - 1;
  };

  if (with_replacement) {
    for (std::size_t i = 0; i < num_ignore; ++i) mask.ignored.push_back(pool[draw()]);
    normalize_index_set(mask.ignored);
    return mask;
  }
  const std::size_t n = std::min(num_ignore, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = draw();
    mask.ignored.push_back(pool[k]);
    weight[k] = -1.0;  // removed
  }
  normalize_index_set(mask.ignored);
  return mask;
}

double unannotated_term(double p, AttrIndex a, ObjectIndex o, const FeasibleSets& fs,
                        const IgnoreMask& mask, const LossConfig& cfg) {
  const LossConfig e = cfg.effective();
  if (is_feasible(fs, o, a)) {
    return mask.contains(a) ? 0.0 : negative_term(p, e.gamma_feasible);
  }
  return negative_term(p, e.gamma_infeasible);
}

double instance_loss_and_grad(std::span<const double> p, const Instance& instance,
                              const FeasibleSets& fs, const IgnoreMask& mask,
                              const LossConfig& cfg, std::span<double> grad) {
  const LossConfig e = cfg.effective();
  const std::size_t n = p.size();
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != n) throw DataError("gradient buffer has the wrong size");

  std::size_t ip = 0, in = 0;
  double loss = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double pa = p[a];
    if (!std::isfinite(pa)) {
      throw NumericError("non-finite probability for attribute " + std::to_string(a) +
                         " of instance '" + instance.id + "'");
    }
    const auto attr = static_cast<AttrIndex>(a);
    double value = 0.0;
    double slope = 0.0;
    if (ip < instance.positives.size() && instance.positives[ip] == attr) {
      ++ip;
      value = positive_term(pa, e.gamma_pos);
      if (want_grad) slope = positive_term_grad(pa, e.gamma_pos);
    } else if (in < instance.negatives.size() && instance.negatives[in] == attr) {
      ++in;
      value = negative_term(pa, e.gamma_neg);
      if (want_grad) slope = negative_term_grad(pa, e.gamma_neg);
    } else if (is_ignoring(e.mode)) {
      // unannotated terms dropped
    } else if (e.mode != LossMode::kSelective) {
      value = negative_term(pa, e.gamma_neg);
      if (want_grad) slope = negative_term_grad(pa, e.gamma_neg);
    } else if (is_feasible(fs, instance.object, attr)) {
      if (!mask.contains(attr)) {
        value = negative_term(pa, e.gamma_feasible);
        if (want_grad) slope = negative_term_grad(pa, e.gamma_feasible);
      }
    } else {
      value = negative_term(pa, e.gamma_infeasible);
      if (want_grad) slope = negative_term_grad(pa, e.gamma_infeasible);
    }
    loss += value;
    if (want_grad) grad[a] = slope;
  }
  if (ip != instance.positives.size() || in != instance.negatives.size()) {
    throw DataError("instance '" + instance.id + "' has labels beyond the probability vector");
  }
  return loss;
}

double instance_loss(std::span<const double> p, const Instance& instance,
                     const FeasibleSets& fs, const IgnoreMask& mask, const LossConfig& cfg) {
  return instance_loss_and_grad(p, instance, fs, mask, cfg, {});
}

std::vector<double> instance_loss_grad(std::span<const double> p, const Instance& instance,
                                       const FeasibleSets& fs, const IgnoreMask& mask,
                                       const LossConfig& cfg) {
  std::vector<double> grad(p.size(), 0.0);
  instance_loss_and_grad(p, instance, fs, mask, cfg, grad);
  return grad;
}

}  // namespace attrsel
