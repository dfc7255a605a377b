#include <algorithm>
#include <sstream>

#include "attrsel/error.hpp"
#include "attrsel/feasible.hpp"
#include "doctest.h"
#include "toy.hpp"

using namespace attrsel;

namespace {

// Attributes: 0 furry, 1 red, 2 small. Objects: 0 cat, 1 car, 2 dog.
Dataset pets() {
  Dataset d{AttributeVocabulary({"furry", "red", "small"},
                                {AttributeType::kTexture, AttributeType::kColor,
                                 AttributeType::kSize}),
            {"cat", "car", "dog"},
            {},
            1};
  return d;
}

}  // namespace

TEST_CASE("feasible sets from positive co-occurrence") {
  Dataset d = pets();
  SUBCASE("direct construction") {
    d.instances = {{"c", 0, {0}, {}, {0}}, {"r", 1, {1}, {}, {0}}};
    const auto fs = build_feasible(d);
    CHECK(fs.of(0) == std::vector<AttrIndex>{0});
    CHECK(fs.of(1) == std::vector<AttrIndex>{1});
  }
  SUBCASE("negatives alone do not make an attribute feasible") {
    d.instances = {{"c", 0, {}, {1}, {0}}};
    const auto fs = build_feasible(d);
    CHECK_FALSE(fs.contains(0, 1));
    FeasibleOptions opts;
    opts.include_negatives = true;
    CHECK(build_feasible(d, opts).contains(0, 1));
  }
  SUBCASE("union over instances of the same object") {
    d.instances = {{"c1", 0, {0}, {}, {0}}, {"c2", 0, {2}, {}, {0}}};
    CHECK(build_feasible(d).of(0) == std::vector<AttrIndex>{0, 2});
  }
}

TEST_CASE("is_feasible membership") {
  Dataset d = pets();
  d.instances = {{"c", 0, {0}, {}, {0}}};
  const auto fs = build_feasible(d);
  CHECK(is_feasible(fs, 0, 0));
  CHECK_FALSE(is_feasible(fs, 0, 1));
  CHECK_FALSE(is_feasible(fs, 2, 0));   // dog never seen
  CHECK_FALSE(is_feasible(fs, 17, 0));  // index beyond the object list
  CHECK(fs.of(17).empty());
}

TEST_CASE("feasible sets are order independent and bounded by global positives") {
  Dataset d = toy::random_dataset(12, 1, 4, 120, 8, 0.3);
  const auto fs = build_feasible(d);
  Dataset shuffled = d;
  std::reverse(shuffled.instances.begin(), shuffled.instances.end());
  std::rotate(shuffled.instances.begin(), shuffled.instances.begin() + 37, shuffled.instances.end());
  CHECK(build_feasible(shuffled) == fs);

  std::vector<bool> seen(12, false);
  for (const auto& inst : d.instances) {
    for (AttrIndex a : inst.positives) seen[a] = true;
  }
  for (ObjectIndex o = 0; o < 4; ++o) {
    std::vector<bool> expect(12, false);
    for (const auto& inst : d.instances) {
      if (inst.object != o) continue;
      for (AttrIndex a : inst.positives) expect[a] = true;
    }
    for (AttrIndex a = 0; a < 12; ++a) {
      CHECK(fs.contains(o, a) == expect[a]);
      if (fs.contains(o, a)) CHECK(seen[a]);
    }
  }
}

TEST_CASE("feasible file round trip and errors") {
  Dataset d = toy::random_dataset(10, 1, 3, 60, 2, 0.4);
  const auto fs = build_feasible(d);
  std::stringstream ss;
  write_feasible(ss, fs, d);
  CHECK(read_feasible(ss, d) == fs);

  std::istringstream bad(R"({"obj0":["no_such_attribute"]})");
  CHECK_THROWS_AS(read_feasible(bad, d), DataError);
  std::istringstream bad_obj(R"({"unicorn":["a0"]})");
  CHECK_THROWS_AS(read_feasible(bad_obj, d), DataError);
}
