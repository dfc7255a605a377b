#include <set>
#include <sstream>

#include "attrsel/dataset.hpp"
#include "attrsel/error.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "toy.hpp"

using namespace attrsel;

namespace {

Dataset two_instance_dataset() {
  Dataset d{toy::vocab(4), {"cat", "car"}, {}, 2};
  d.instances.push_back({"x0", 0, {0}, {2}, {0.5f, -1.0f}});
  d.instances.push_back({"x1", 1, {1, 3}, {}, {0.25f, 2.0f}});
  return d;
}

std::string header_line(const Dataset& d) {
  std::ostringstream os;
  write_dataset(os, d);
  return os.str().substr(0, os.str().find('\n') + 1);
}

}  // namespace

TEST_CASE("vocabulary rejects duplicates and empty input") {
  CHECK_THROWS_AS(AttributeVocabulary({"red", "red"}, {AttributeType::kColor, AttributeType::kColor}),
                  DataError);
  CHECK_THROWS_AS(AttributeVocabulary({}, {}), DataError);
  AttributeVocabulary v({"red", "wooden"}, {AttributeType::kColor, AttributeType::kMaterial});
  CHECK(v.size() == 2);
  CHECK(v.type_of(1) == AttributeType::kMaterial);
  CHECK(v.find("wooden") == 1);
  CHECK_FALSE(v.find("blue").has_value());
}

TEST_CASE("attribute type names parse back") {
  for (std::size_t t = 0; t < kNumAttributeTypes; ++t) {
    const auto type = static_cast<AttributeType>(t);
    CHECK(parse_attribute_type(to_string(type)) == type);
  }
  CHECK(parse_attribute_type("others") == AttributeType::kOther);
  CHECK_FALSE(parse_attribute_type("smell").has_value());
}

TEST_CASE("label_of follows the +1 / -1 / 0 encoding") {
  const Instance inst{"x", 0, {0}, {2}, {}};
  CHECK(label_of(inst, 0, 4) == Label::kPositive);
  CHECK(label_of(inst, 2, 4) == Label::kNegative);
  CHECK(label_of(inst, 1, 4) == Label::kUnannotated);
  CHECK_THROWS_AS(label_of(inst, 4, 4), std::out_of_range);
}

TEST_CASE("partial_sets examples") {
  SUBCASE("complement") {
    const auto s = partial_sets(Instance{"x", 0, {0}, {2}, {}}, 4);
    CHECK(s.unannotated == std::vector<AttrIndex>{1, 3});
  }
  SUBCASE("fully unannotated") {
    const auto s = partial_sets(Instance{"x", 0, {}, {}, {}}, 4);
    CHECK(s.unannotated == std::vector<AttrIndex>{0, 1, 2, 3});
  }
  SUBCASE("fully annotated") {
    const auto s = partial_sets(Instance{"x", 0, {0, 1}, {2, 3}, {}}, 4);
    CHECK(s.unannotated.empty());
  }
}

TEST_CASE("partial_sets always partitions the attribute set") {
  const Dataset d = toy::random_dataset(17, 2, 3, 200, 5);
  for (const auto& inst : d.instances) {
    const auto s = partial_sets(inst, d.num_attributes());
    std::multiset<AttrIndex> all;
    all.insert(s.positives.begin(), s.positives.end());
    all.insert(s.negatives.begin(), s.negatives.end());
    all.insert(s.unannotated.begin(), s.unannotated.end());
    REQUIRE(all.size() == d.num_attributes());
    AttrIndex expect = 0;
    for (AttrIndex a : all) CHECK(a == expect++);
  }
}

TEST_CASE("dataset file round trip") {
  const Dataset d = two_instance_dataset();
  std::stringstream ss;
  write_dataset(ss, d);
  const Dataset back = read_dataset(ss);
  CHECK(back.instances.size() == 2);
  CHECK(back == d);

  const Dataset big = toy::random_dataset(9, 4, 3, 50, 11);
  std::stringstream ss2;
  write_dataset(ss2, big);
  CHECK(read_dataset(ss2) == big);
}

TEST_CASE("reader errors") {
  const Dataset d = two_instance_dataset();
  const std::string header = header_line(d);

  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK_THROWS_WITH_AS(read_dataset(in), doctest::Contains("empty dataset"), DataError);
  }
  SUBCASE("index out of range names the instance") {
    std::istringstream in(header +
                          R"({"id":"bad_one","object":"cat","positives":[7],"negatives":[],"feature":[0,0]})"
                          "\n");
    CHECK_THROWS_WITH_AS(read_dataset(in), doctest::Contains("bad_one"), DataError);
  }
  SUBCASE("malformed json reports the line") {
    std::istringstream in(header + "{not json\n");
    CHECK_THROWS_WITH_AS(read_dataset(in), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("overlapping positive and negative") {
    std::istringstream in(header +
                          R"({"id":"clash","object":"cat","positives":["a0"],"negatives":["a0"],"feature":[0,0]})"
                          "\n");
    CHECK_THROWS_WITH_AS(read_dataset(in), doctest::Contains("clash"), DataError);
  }
  SUBCASE("wrong feature length") {
    std::istringstream in(header +
                          R"({"id":"short","object":"cat","positives":[],"negatives":[],"feature":[0]})"
                          "\n");
    CHECK_THROWS_AS(read_dataset(in), DataError);
  }
  SUBCASE("unknown object") {
    std::istringstream in(header +
                          R"({"id":"dog1","object":"dog","positives":[],"negatives":[],"feature":[0,0]})"
                          "\n");
    CHECK_THROWS_AS(read_dataset(in), DataError);
  }
  SUBCASE("duplicate id") {
    Dataset dup = d;
    dup.instances[1].id = "x0";
    CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("x0"), DataError);
  }
}

TEST_CASE("mask_labels") {
  const Dataset full = toy::random_dataset(50, 1, 2, 400, 3, 1.0);
  SUBCASE("keep_rate 1 is the identity") { CHECK(mask_labels(full, 1.0, 9) == full); }
  SUBCASE("tiny keep_rate drops almost everything") {
    const Dataset m = mask_labels(full, 1e-6, 9);
    std::size_t kept = 0;
    for (const auto& inst : m.instances) kept += inst.positives.size() + inst.negatives.size();
    CHECK(kept <= 1);
  }
  SUBCASE("keep_rate 0.5 over 10,000 annotations") {
    Dataset exact{toy::vocab(100), {"o"}, {}, 1};
    for (int i = 0; i < 100; ++i) {
      Instance inst{"i" + std::to_string(i), 0, {}, {}, {0.0f}};
      for (AttrIndex a = 0; a < 100; ++a) (a % 2 ? inst.positives : inst.negatives).push_back(a);
      exact.instances.push_back(inst);
    }
    const Dataset m = mask_labels(exact, 0.5, 1234);
    std::size_t kept = 0;
    for (const auto& inst : m.instances) {
      kept += inst.positives.size() + inst.negatives.size();
      for (AttrIndex a : inst.positives) CHECK(a % 2 == 1);
    }
    CHECK(kept >= 4850);
    CHECK(kept <= 5150);
  }
  SUBCASE("out of range keep_rate") {
    CHECK_THROWS_AS(mask_labels(full, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(mask_labels(full, 1.5, 1), ConfigError);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.n_instances = 400;

  SUBCASE("same seed gives identical output") {
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.truth.values == b.truth.values);
    std::ostringstream sa, sb;
    write_dataset(sa, a.train);
    write_dataset(sb, b.train);
    CHECK(sa.str() == sb.str());
    spec.seed = 1;
    CHECK_FALSE(generate_synthetic(spec).train == a.train);
  }
  SUBCASE("annotation_rate 1 leaves nothing unannotated") {
    spec.annotation_rate = 1.0;
    for (double salience : {1.0, 11.0}) {
      spec.positive_salience = salience;
      const auto data = generate_synthetic(spec);
      for (const auto& inst : data.train.instances) {
        CHECK(inst.positives.size() + inst.negatives.size() == spec.n_attributes);
      }
    }
  }
  SUBCASE("mean annotated count tracks the rate") {
    spec.n_attributes = 100;
    spec.n_instances = 1000;
    spec.test_fraction = 0.0;
    spec.annotation_rate = 0.1;
    for (double salience : {1.0, 11.0}) {
      spec.positive_salience = salience;
      const auto data = generate_synthetic(spec);
      double total = 0.0;
      for (const auto& inst : data.train.instances) {
        total += static_cast<double>(inst.positives.size() + inst.negatives.size());
      }
      const double mean = total / static_cast<double>(data.train.instances.size());
      CHECK(mean == doctest::Approx(10.0).epsilon(0.1));
    }
  }
  SUBCASE("masked labels agree with the truth matrix") {
    const auto data = generate_synthetic(spec);
    REQUIRE(data.truth.rows == data.train.instances.size());
    for (std::size_t r = 0; r < data.truth.rows; ++r) {
      const auto& inst = data.train.instances[r];
      for (AttrIndex a : inst.positives) CHECK(data.truth.at(r, a) == 1);
      for (AttrIndex a : inst.negatives) CHECK(data.truth.at(r, a) == -1);
    }
    for (const auto& inst : data.test.instances) {
      CHECK(inst.positives.size() + inst.negatives.size() == spec.n_attributes);
    }
  }
  SUBCASE("present attributes are favoured when salience > 1") {
    spec.positive_salience = 11.0;
    const auto data = generate_synthetic(spec);
    std::size_t kept_pos = 0, total_pos = 0, kept_neg = 0, total_neg = 0;
    for (std::size_t r = 0; r < data.truth.rows; ++r) {
      const auto& inst = data.train.instances[r];
      kept_pos += inst.positives.size();
      kept_neg += inst.negatives.size();
      for (std::size_t a = 0; a < data.truth.cols; ++a) {
        (data.truth.at(r, a) > 0 ? total_pos : total_neg) += 1;
      }
    }
    const double rate_pos = double(kept_pos) / double(total_pos);
    const double rate_neg = double(kept_neg) / double(total_neg);
    CHECK(rate_pos > 4.0 * rate_neg);
  }
  SUBCASE("prevalence is non-increasing in attribute rank") {
    for (double skew : {0.3, 1.0, 2.0}) {
      spec.tail_skew = skew;
      const auto data = generate_synthetic(spec);
      for (std::size_t a = 1; a < data.prevalence.size(); ++a) {
        CHECK(data.prevalence[a] <= data.prevalence[a - 1]);
      }
    }
  }
  SUBCASE("oracle rows cover every training instance") {
    const auto data = generate_synthetic(spec);
    REQUIRE(data.oracle_scores.size() == data.train.instances.size());
    for (std::size_t i = 0; i < data.oracle_scores.size(); ++i) {
      CHECK(data.oracle_scores[i].instance_id == data.train.instances[i].id);
      CHECK(data.oracle_scores[i].sims.size() == spec.n_attributes);
    }
  }
  SUBCASE("invalid specs are refused") {
    spec.n_instances = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.annotation_rate = 0.0;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.positive_salience = -1.0;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  }
}
