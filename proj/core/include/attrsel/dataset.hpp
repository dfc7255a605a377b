#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attrsel {

using AttrIndex = std::uint32_t;
using ObjectIndex = std::uint32_t;

enum class AttributeType : std::uint8_t {
  kColor,
  kMaterial,
  kShape,
  kSize,
  kTexture,
  kAction,
  kState,
  kOther,
};

inline constexpr std::size_t kNumAttributeTypes = 8;

std::string_view to_string(AttributeType t);
std::optional<AttributeType> parse_attribute_type(std::string_view s);

/// Ordered attribute names with one type-group tag each.
class AttributeVocabulary {
 public:
  AttributeVocabulary() = default;
  /// Throws DataError on duplicate names, an empty list, or a size mismatch.
  AttributeVocabulary(std::vector<std::string> names,
                      std::vector<AttributeType> types);

  std::size_t size() const { return names_.size(); }
  const std::string& name(AttrIndex a) const { return names_.at(a); }
  AttributeType type_of(AttrIndex a) const { return types_.at(a); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<AttributeType>& types() const { return types_; }
  std::optional<AttrIndex> find(std::string_view name) const;

  friend bool operator==(const AttributeVocabulary& x,
                         const AttributeVocabulary& y) {
    return x.names_ == y.names_ && x.types_ == y.types_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<AttributeType> types_;
  std::unordered_map<std::string, AttrIndex> index_;
};

/// Label values for one attribute of one instance.
enum class Label : std::int8_t { kNegative = -1, kUnannotated = 0, kPositive = 1 };

/// One visual example. Positive and negative sets are kept sorted and unique.
struct Instance {
  std::string id;
  ObjectIndex object = 0;
  std::vector<AttrIndex> positives;
  std::vector<AttrIndex> negatives;
  std::vector<float> feature;

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Attribute index sets of one instance; together a partition of [0, A).
struct PartialSets {
  std::vector<AttrIndex> positives;
  std::vector<AttrIndex> negatives;
  std::vector<AttrIndex> unannotated;
};

/// Label of attribute `a`. Throws std::out_of_range when a >= A.
Label label_of(const Instance& instance, AttrIndex a, std::size_t num_attributes);
PartialSets partial_sets(const Instance& instance, std::size_t num_attributes);

struct Dataset {
  AttributeVocabulary vocab;
  std::vector<std::string> objects;
  std::vector<Instance> instances;
  std::size_t feature_dim = 0;

  std::size_t num_attributes() const { return vocab.size(); }
  std::optional<ObjectIndex> find_object(std::string_view name) const;

  /// Checks every dataset invariant; throws DataError naming the offending
  /// instance id.
  void validate() const;

  friend bool operator==(const Dataset& x, const Dataset& y) {
    return x.vocab == y.vocab && x.objects == y.objects &&
           x.instances == y.instances && x.feature_dim == y.feature_dim;
  }
};

/// Sorts and deduplicates an index set in place.
void normalize_index_set(std::vector<AttrIndex>& s);

// Line-delimited record format. The first line is a header
//   {"format":"attrsel-dataset","version":1,"feature_dim":d,
//    "attributes":[{"name":..,"type":..},...],"objects":[..]}
// followed by one record per instance
//   {"id":..,"object":..,"positives":[names],"negatives":[names],"feature":[..]}
void write_dataset(std::ostream& out, const Dataset& d);
void write_dataset(const std::filesystem::path& path, const Dataset& d);
/// Throws DataError with the 1-based line number on parse failures.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

/// Drops each annotation independently with probability 1 - keep_rate.
/// Throws ConfigError unless keep_rate is in (0, 1].
Dataset mask_labels(const Dataset& full, double keep_rate, std::uint64_t seed);

struct SyntheticSpec {
  std::uint32_t n_objects = 12;
  std::uint32_t n_attributes = 60;
  std::uint32_t n_instances = 3000;
  std::uint32_t feature_dim = 24;
  double annotation_rate = 0.1;
  double tail_skew = 1.0;
  double oracle_noise = 0.5;
  /// Standard deviation of the isotropic noise added to feature vectors.
  double feature_noise = 0.6;
  std::uint64_t seed = 0;
  /// Fraction of instances held out as the fully labeled test split.
  double test_fraction = 0.25;
  /// How much more likely a present attribute is to be annotated than an
  /// absent one. 1 gives uniform masking; the expected number of annotated
  /// attributes per instance stays annotation_rate * n_attributes either way.
  double positive_salience = 1.0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Full label matrix of the training split before masking, one row per
/// training instance in dataset order (+1 / -1 only).
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;

  std::int8_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Raw vision-language style similarities of one training instance, for every
/// attribute of the vocabulary.
struct SimilarityRow {
  std::string instance_id;
  ObjectIndex object = 0;
  std::vector<double> sims;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  LabelMatrix truth;
  std::vector<SimilarityRow> oracle_scores;
  /// Expected positive prevalence of every attribute under the generator.
  std::vector<double> prevalence;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace attrsel
