#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attrsel/dataset.hpp"
#include "attrsel/trainer.hpp"

namespace attrsel {

/// Average precision over one attribute's annotated instances. Labels equal
/// to kUnannotated are skipped. Ties in score keep input order. Returns
/// nullopt when there is no positive. With `interpolated`, each precision is
/// replaced by the best precision at any deeper rank.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const Label> labels,
                                        bool interpolated = false);

enum class Bucket : std::uint8_t { kHead, kMedium, kTail };
std::string_view to_string(Bucket b);

struct ImbalanceThresholds {
  std::size_t head_min = 100;
  std::size_t tail_max = 20;
  friend bool operator==(const ImbalanceThresholds&, const ImbalanceThresholds&) = default;
};

/// Buckets attributes by their number of positive training annotations.
/// Throws ConfigError unless head_min > tail_max.
std::vector<Bucket> partition_head_medium_tail(const Dataset& train,
                                               const ImbalanceThresholds& thresholds);
std::vector<Bucket> partition_by_counts(std::span<const std::size_t> positive_counts,
                                        const ImbalanceThresholds& thresholds);

struct AnnotationCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct EvalReport {
  double overall_map = 0.0;
  std::array<std::optional<double>, 3> imbalance;                  // head, medium, tail
  std::array<std::optional<double>, kNumAttributeTypes> by_type;  // AttributeType order
  std::vector<std::optional<double>> per_attribute_ap;
  std::vector<AnnotationCounts> counts;
  std::vector<Bucket> buckets;
  /// Attributes without an annotated positive in the test split.
  std::vector<AttrIndex> excluded;
};

struct EvalOptions {
  bool interpolated = false;
  friend bool operator==(const EvalOptions&, const EvalOptions&) = default;
};

/// Annotated-only mAP with head/medium/tail and attribute-type breakdowns.
/// `buckets` has one entry per attribute. Throws DataError on an empty test
/// set, shape mismatch, or when no attribute has an annotated positive.
EvalReport mean_ap(const ScoreMatrix& predictions, const Dataset& test,
                   std::span<const Bucket> buckets, const EvalOptions& opts = {});

/// Structured record of the report (one JSON document).
void write_report_json(std::ostream& out, const EvalReport& report, const Dataset& schema);
/// Aligned text table: Overall | Head Medium Tail | eight attribute types.
std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace attrsel
