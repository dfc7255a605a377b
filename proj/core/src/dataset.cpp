#include "attrsel/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "attrsel/error.hpp"
#include "attrsel/rng.hpp"

namespace attrsel {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, kNumAttributeTypes> kTypeNames = {
    "color", "material", "shape", "size", "texture", "action", "state", "other"};

bool contains_sorted(const std::vector<AttrIndex>& s, AttrIndex a) {
  return std::binary_search(s.begin(), s.end(), a);
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view to_string(AttributeType t) {
  return kTypeNames[static_cast<std::size_t>(t)];
}

std::optional<AttributeType> parse_attribute_type(std::string_view s) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == s) return static_cast<AttributeType>(i);
  }
  if (s == "others") return AttributeType::kOther;
  return std::nullopt;
}

AttributeVocabulary::AttributeVocabulary(std::vector<std::string> names,
                                         std::vector<AttributeType> types)
    : names_(std::move(names)), types_(std::move(types)) {
  if (names_.empty()) throw DataError("attribute vocabulary is empty");
  if (names_.size() != types_.size()) {
    throw DataError("attribute vocabulary: " + std::to_string(names_.size()) +
                    " names but " + std::to_string(types_.size()) + " type tags");
  }
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<AttrIndex>(i)).second) {
      throw DataError("duplicate attribute name '" + names_[i] + "'");
    }
  }
}

std::optional<AttrIndex> AttributeVocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Label label_of(const Instance& instance, AttrIndex a, std::size_t num_attributes) {
  if (a >= num_attributes) {
    throw std::out_of_range("attribute index " + std::to_string(a) +
                            " out of range for A=" + std::to_string(num_attributes));
  }
  if (contains_sorted(instance.positives, a)) return Label::kPositive;
  if (contains_sorted(instance.negatives, a)) return Label::kNegative;
  return Label::kUnannotated;
}

PartialSets partial_sets(const Instance& instance, std::size_t num_attributes) {
  PartialSets out;
  out.positives = instance.positives;
  out.negatives = instance.negatives;
  out.unannotated.reserve(num_attributes - std::min(num_attributes,
                                                    instance.positives.size() +
                                                        instance.negatives.size()));
  for (AttrIndex a = 0; a < num_attributes; ++a) {
    if (!contains_sorted(instance.positives, a) && !contains_sorted(instance.negatives, a)) {
      out.unannotated.push_back(a);
    }
  }
  return out;
}

void normalize_index_set(std::vector<AttrIndex>& s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
}

std::optional<ObjectIndex> Dataset::find_object(std::string_view name) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i] == name) return static_cast<ObjectIndex>(i);
  }
  return std::nullopt;
}

void Dataset::validate() const {
  const std::size_t num_attrs = vocab.size();
  if (num_attrs == 0) throw DataError("dataset has an empty attribute vocabulary");
  if (feature_dim == 0) throw DataError("dataset feature_dim must be positive");
  {
    std::unordered_set<std::string> seen;
    for (const auto& o : objects) {
      if (!seen.insert(o).second) throw DataError("duplicate object '" + o + "'");
    }
  }
  std::unordered_set<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto where = "instance '" + inst.id + "': ";
    if (!ids.insert(inst.id).second) throw DataError(where + "duplicate id");
    if (inst.object >= objects.size()) throw DataError(where + "unknown object index");
    if (inst.feature.size() != feature_dim) {
      throw DataError(where + "feature has dimension " + std::to_string(inst.feature.size()) +
                      ", expected " + std::to_string(feature_dim));
    }
    for (float f : inst.feature) {
      if (!std::isfinite(f)) throw DataError(where + "non-finite feature value");
    }
    for (const auto* set : {&inst.positives, &inst.negatives}) {
      if (!std::is_sorted(set->begin(), set->end()) ||
          std::adjacent_find(set->begin(), set->end()) != set->end()) {
        throw DataError(where + "label sets must be sorted and unique");
      }
      if (!set->empty() && set->back() >= num_attrs) {
        throw DataError(where + "attribute index " + std::to_string(set->back()) +
                        " >= A=" + std::to_string(num_attrs));
      }
    }
    for (AttrIndex a : inst.positives) {
      if (contains_sorted(inst.negatives, a)) {
        throw DataError(where + "attribute '" + vocab.name(a) +
                        "' is both positive and negative");
      }
    }
  }
}

void write_dataset(std::ostream& out, const Dataset& d) {
  ojson header;
  header["format"] = "attrsel-dataset";
  header["version"] = 1;
  header["feature_dim"] = d.feature_dim;
  ojson attrs = ojson::array();
  for (std::size_t a = 0; a < d.vocab.size(); ++a) {
    attrs.push_back(ojson{{"name", d.vocab.name(static_cast<AttrIndex>(a))},
                          {"type", to_string(d.vocab.type_of(static_cast<AttrIndex>(a)))}});
  }
  header["attributes"] = std::move(attrs);
  header["objects"] = d.objects;
  out << header.dump() << '\n';

  for (const auto& inst : d.instances) {
    ojson rec;
    rec["id"] = inst.id;
    rec["object"] = d.objects.at(inst.object);
    ojson pos = ojson::array();
    for (AttrIndex a : inst.positives) pos.push_back(d.vocab.name(a));
    ojson neg = ojson::array();
    for (AttrIndex a : inst.negatives) neg.push_back(d.vocab.name(a));
    rec["positives"] = std::move(pos);
    rec["negatives"] = std::move(neg);
    rec["feature"] = inst.feature;
    out << rec.dump() << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_dataset(out, d);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

namespace {

std::vector<AttrIndex> parse_label_list(const ojson& arr, const AttributeVocabulary& vocab,
                                        const std::string& id, const char* field) {
  if (!arr.is_array()) throw DataError("instance '" + id + "': '" + field + "' is not a list");
  std::vector<AttrIndex> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (v.is_string()) {
      auto idx = vocab.find(v.get<std::string>());
      if (!idx) {
        throw DataError("instance '" + id + "': unknown attribute '" + v.get<std::string>() +
                        "' in " + field);
      }
      out.push_back(*idx);
    } else if (v.is_number_unsigned()) {
      const auto idx = v.get<std::uint64_t>();
      if (idx >= vocab.size()) {
        throw DataError("instance '" + id + "': attribute index " + std::to_string(idx) +
                        " >= A=" + std::to_string(vocab.size()) + " in " + field);
      }
      out.push_back(static_cast<AttrIndex>(idx));
    } else {
      throw DataError("instance '" + id + "': malformed entry in " + field);
    }
  }
  normalize_index_set(out);
  return out;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ojson rec;
    try {
      rec = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail_line(line_no, std::string("parse error: ") + e.what());
    }
    if (!rec.is_object()) fail_line(line_no, "record is not an object");
    try {
      if (!have_header) {
        if (rec.value("format", "") != "attrsel-dataset") {
          fail_line(line_no, "missing dataset header record");
        }
        std::vector<std::string> names;
        std::vector<AttributeType> types;
        for (const auto& attr : rec.at("attributes")) {
          names.push_back(attr.at("name").get<std::string>());
          const auto tag = attr.value("type", "other");
          auto t = parse_attribute_type(tag);
          if (!t) fail_line(line_no, "unknown attribute type '" + tag + "'");
          types.push_back(*t);
        }
        d.vocab = AttributeVocabulary(std::move(names), std::move(types));
        d.objects = rec.at("objects").get<std::vector<std::string>>();
        d.feature_dim = rec.at("feature_dim").get<std::size_t>();
        have_header = true;
        continue;
      }
      Instance inst;
      inst.id = rec.at("id").get<std::string>();
      const auto obj = rec.at("object").get<std::string>();
      auto oi = d.find_object(obj);
      if (!oi) throw DataError("instance '" + inst.id + "': unknown object '" + obj + "'");
      inst.object = *oi;
      inst.positives = parse_label_list(rec.at("positives"), d.vocab, inst.id, "positives");
      inst.negatives = parse_label_list(rec.at("negatives"), d.vocab, inst.id, "negatives");
      for (const auto& v : rec.at("feature")) {
        inst.feature.push_back(static_cast<float>(v.get<double>()));
      }
      d.instances.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      fail_line(line_no, std::string("malformed record: ") + e.what());
    } catch (const DataError& e) {
      fail_line(line_no, e.what());
    }
  }
  if (!have_header || d.instances.empty()) throw DataError("empty dataset");
  d.validate();
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

Dataset mask_labels(const Dataset& full, double keep_rate, std::uint64_t seed) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
    throw ConfigError("keep_rate must lie in (0, 1], got " + std::to_string(keep_rate));
  }
  Dataset out = full;
  Rng rng(mix_seed(seed, 0x6D61736BULL));
  for (auto& inst : out.instances) {
    for (auto* set : {&inst.positives, &inst.negatives}) {
      std::vector<AttrIndex> kept;
      kept.reserve(set->size());
      for (AttrIndex a : *set) {
        if (bernoulli(rng, keep_rate)) kept.push_back(a);
      }
      *set = std::move(kept);
    }
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_objects < 1 || n_attributes < 1 || n_instances < 1 || feature_dim < 1) {
    throw ConfigError("synthetic spec sizes must all be >= 1");
  }
  if (!(annotation_rate > 0.0 && annotation_rate <= 1.0)) {
    throw ConfigError("annotation_rate must lie in (0, 1]");
  }
  if (!(tail_skew >= 0.0) || !std::isfinite(tail_skew)) throw ConfigError("tail_skew must be >= 0");
  if (!(oracle_noise >= 0.0) || !std::isfinite(oracle_noise)) {
    throw ConfigError("oracle_noise must be >= 0");
  }
  if (!(feature_noise >= 0.0) || !std::isfinite(feature_noise)) {
    throw ConfigError("feature_noise must be >= 0");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (!(positive_salience > 0.0) || !std::isfinite(positive_salience)) {
    throw ConfigError("positive_salience must be finite and > 0");
  }
}

namespace {

// Generator shape constants. Attribute a has marginal prevalence
// kHeadPrevalence * (a + 1)^-tail_skew, concentrated on a random subset of
// roughly kFeasibleFraction of the objects.
constexpr double kHeadPrevalence = 0.25;
constexpr double kFeasibleFraction = 1.0 / 3.0;
constexpr double kMaxConditionalPrevalence = 0.95;
constexpr double kObjectOffsetScale = 0.5;
constexpr double kLabelDirectionScale = 2.0;
// Oracle similarities live on a cosine-like scale: base + spread * signal.
constexpr double kOracleBase = 0.2;
constexpr double kOracleSpread = 0.05;

// Annotators mention present attributes more readily than absent ones. Each
// (instance, attribute) pair is kept independently with probability
// min(1, c * w) where c is solved per instance so the expected annotated
// count equals annotation_rate * A.
Dataset salience_mask(const Dataset& full, const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t n_attr = full.vocab.size();
  const double target = spec.annotation_rate * static_cast<double>(n_attr);
  Rng rng(seed);
  Dataset out{full.vocab, full.objects, {}, full.feature_dim};
  out.instances.reserve(full.instances.size());
  std::vector<double> w(n_attr);
  for (const Instance& src : full.instances) {
    for (std::size_t a = 0; a < n_attr; ++a) w[a] = 1.0;
    for (AttrIndex a : src.positives) w[a] = spec.positive_salience;
    auto expected = [&](double c) {
      double s = 0.0;
      for (double wa : w) s += std::min(1.0, c * wa);
      return s;
    };
    double c = 1.0;
    if (spec.annotation_rate < 1.0) {
      double lo = 0.0, hi = 1.0;
      while (expected(hi) < target) hi *= 2.0;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expected(mid) < target ? lo : hi) = mid;
      }
      c = 0.5 * (lo + hi);
    } else {
      c = std::numeric_limits<double>::infinity();
    }
    Instance inst;
    inst.id = src.id;
    inst.object = src.object;
    inst.feature = src.feature;
    for (AttrIndex a : src.positives) {
      if (bernoulli(rng, std::min(1.0, c * w[a]))) inst.positives.push_back(a);
    }
    for (AttrIndex a : src.negatives) {
      if (bernoulli(rng, std::min(1.0, c * w[a]))) inst.negatives.push_back(a);
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n_obj = spec.n_objects;
  const std::size_t n_attr = spec.n_attributes;
  const std::size_t dim = spec.feature_dim;

  Rng rng(mix_seed(spec.seed, 0x73796E74ULL));

  std::vector<std::string> names(n_attr);
  std::vector<AttributeType> types(n_attr);
  for (std::size_t a = 0; a < n_attr; ++a) {
    std::ostringstream os;
    os << "attr_" << a;
    names[a] = os.str();
    types[a] = static_cast<AttributeType>(a % kNumAttributeTypes);
  }
  AttributeVocabulary vocab(std::move(names), std::move(types));
  std::vector<std::string> objects(n_obj);
  for (std::size_t o = 0; o < n_obj; ++o) objects[o] = "object_" + std::to_string(o);

  // Object-conditioned prevalence table.
  const std::size_t per_attr_objects = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(kFeasibleFraction * static_cast<double>(n_obj))));
  std::vector<double> cond(n_obj * n_attr, 0.0);
  std::vector<double> prevalence(n_attr);
  std::vector<ObjectIndex> order(n_obj);
  for (std::size_t a = 0; a < n_attr; ++a) {
    const double marginal =
        kHeadPrevalence * std::pow(static_cast<double>(a + 1), -spec.tail_skew);
    const double p = std::min(kMaxConditionalPrevalence,
                              marginal * static_cast<double>(n_obj) /
                                  static_cast<double>(per_attr_objects));
    prevalence[a] = p * static_cast<double>(per_attr_objects) / static_cast<double>(n_obj);
    for (std::size_t o = 0; o < n_obj; ++o) order[o] = static_cast<ObjectIndex>(o);
    shuffle_in_place(order, rng);
    for (std::size_t k = 0; k < per_attr_objects; ++k) cond[order[k] * n_attr + a] = p;
  }

  // Linear label embedding and per-object offsets.
  std::vector<double> mixing(dim * n_attr);
  const double col_scale = kLabelDirectionScale / std::sqrt(static_cast<double>(dim));
  for (auto& m : mixing) m = standard_normal(rng) * col_scale;
  std::vector<double> offsets(n_obj * dim);
  for (auto& v : offsets) v = standard_normal(rng) * kObjectOffsetScale;

  const std::size_t n_test = std::min<std::size_t>(
      spec.n_instances - 1,
      static_cast<std::size_t>(
          std::llround(spec.test_fraction * static_cast<double>(spec.n_instances))));
  const std::size_t n_train = spec.n_instances - n_test;

  Dataset full_train{vocab, objects, {}, dim};
  Dataset test{vocab, objects, {}, dim};
  full_train.instances.reserve(n_train);
  test.instances.reserve(n_test);

  SyntheticData out;
  out.truth.rows = n_train;
  out.truth.cols = n_attr;
  out.truth.values.reserve(n_train * n_attr);
  out.oracle_scores.reserve(n_train);

  std::vector<std::int8_t> y(n_attr);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    Instance inst;
    const bool is_train = i < n_train;
    inst.id = (is_train ? "train_" : "test_") + std::to_string(is_train ? i : i - n_train);
    inst.object = static_cast<ObjectIndex>(uniform_index(rng, n_obj));
    for (std::size_t a = 0; a < n_attr; ++a) {
      const bool present = bernoulli(rng, cond[inst.object * n_attr + a]);
      y[a] = present ? 1 : -1;
      (present ? inst.positives : inst.negatives).push_back(static_cast<AttrIndex>(a));
    }
    for (std::size_t k = 0; k < dim; ++k) {
      double v = offsets[inst.object * dim + k];
      for (std::size_t a = 0; a < n_attr; ++a) {
        if (y[a] > 0) v += mixing[k * n_attr + a];
      }
      x[k] = v + spec.feature_noise * standard_normal(rng);
    }
    inst.feature.assign(x.begin(), x.end());

    if (is_train) {
      SimilarityRow row;
      row.instance_id = inst.id;
      row.object = inst.object;
      row.sims.resize(n_attr);
      for (std::size_t a = 0; a < n_attr; ++a) {
        const double signal = (y[a] > 0 ? 1.0 : 0.0) + spec.oracle_noise * standard_normal(rng);
        // Rounded through f32 so the in-memory table equals its file form.
        row.sims[a] = static_cast<float>(kOracleBase + kOracleSpread * signal);
      }
      out.oracle_scores.push_back(std::move(row));
      out.truth.values.insert(out.truth.values.end(), y.begin(), y.end());
      full_train.instances.push_back(std::move(inst));
    } else {
      test.instances.push_back(std::move(inst));
    }
  }

  out.train = salience_mask(full_train, spec, mix_seed(spec.seed, 0x6D61ULL));
  out.test = std::move(test);
  out.prevalence = std::move(prevalence);
  return out;
}

}  // namespace attrsel
