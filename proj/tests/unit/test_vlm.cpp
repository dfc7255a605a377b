#include <cmath>
#include <sstream>

#include "attrsel/error.hpp"
#include "attrsel/vlm.hpp"
#include "doctest.h"
#include "toy.hpp"

using namespace attrsel;

namespace {

// Three attributes on one object, all feasible.
struct Scene {
  Dataset d{toy::vocab(3), {"obj"}, {{"x", 0, {0}, {}, {0.0f}}}, 1};
  FeasibleSets fs{3, {{0, 1, 2}}};
};

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("embedding table normalizes and validates") {
  EmbeddingTable t(2);
  const float v[] = {3.0f, 4.0f};
  t.add_visual("x", v);
  const auto* stored = t.visual("x");
  REQUIRE(stored);
  CHECK(std::hypot((*stored)[0], (*stored)[1]) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("norm 2 becomes norm 1") {
    const float w[] = {2.0f, 0.0f};
    t.add_text("a0", "obj", w);
    CHECK((*t.text("a0", "obj"))[0] == doctest::Approx(1.0));
  }
  SUBCASE("dimension mismatch") {
    const float w[] = {1.0f, 0.0f, 0.0f};
    CHECK_THROWS_AS(t.add_visual("y", w), DataError);
  }
  SUBCASE("non-finite component") {
    const float w[] = {NAN, 1.0f};
    CHECK_THROWS_AS(t.add_visual("y", w), DataError);
  }
}

TEST_CASE("embedding file round trip and load errors") {
  EmbeddingTable t(3);
  const float v[] = {1.0f, 2.0f, 2.0f};
  t.add_visual("x", v);
  t.add_text("a0", "obj", v);
  std::stringstream ss;
  write_embeddings(ss, t);
  const auto back = read_embeddings(ss);
  CHECK(back.dim() == 3);
  CHECK(*back.visual("x") == *t.visual("x"));
  CHECK(back.text_entries().size() == 1);

  SUBCASE("mixed dimensions are rejected") {
    // Hand-built file: header says 512, the single record carries 256 values.
    std::ostringstream raw;
    auto u32 = [&](std::uint32_t x) { raw.write(reinterpret_cast<const char*>(&x), 4); };
    raw << "ATSEMB01";
    u32(512);
    u32(1);
    u32(0);
    u32(1);
    raw << "x";
    u32(256);
    for (int i = 0; i < 256; ++i) {
      const float f = 1.0f;
      raw.write(reinterpret_cast<const char*>(&f), 4);
    }
    std::istringstream in(raw.str());
    CHECK_THROWS_AS(read_embeddings(in), DataError);
  }
  SUBCASE("truncated file") {
    std::istringstream in(ss.str().substr(0, 20));
    CHECK_THROWS_AS(read_embeddings(in), DataError);
  }
  SUBCASE("bad magic") {
    std::istringstream in("NOTMAGIC");
    CHECK_THROWS_AS(read_embeddings(in), DataError);
  }
}

TEST_CASE("cosine similarity of unit vectors") {
  const std::vector<double> e0{1.0, 0.0}, e1{0.0, 1.0}, m0{-1.0, 0.0};
  CHECK(similarity(e0, e0) == doctest::Approx(1.0));
  CHECK(similarity(e0, e1) == doctest::Approx(0.0));
  CHECK(similarity(e0, m0) == doctest::Approx(-1.0));
  const std::vector<double> three{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(similarity(e0, three), DataError);
}

TEST_CASE("softmax values") {
  const std::vector<double> two{1.0, 0.0};
  const auto p = softmax(two, 1.0);
  CHECK(p[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.268941).epsilon(1e-6));
  const std::vector<double> eq{0.3, 0.3, 0.3};
  for (double x : softmax(eq, 0.01)) CHECK(x == doctest::Approx(1.0 / 3.0));
  CHECK(softmax(std::vector<double>{}, 1.0).empty());
  const std::vector<double> one{-5.0};
  CHECK(softmax(one, 0.01)[0] == 1.0);
}

TEST_CASE("softmax properties over random rows") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    std::vector<double> s(n);
    for (auto& x : s) x = 2.0 * uniform01(rng) - 1.0;
    const double tau = 0.01 + uniform01(rng);
    const auto p = softmax(s, tau);
    CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
    for (double x : p) CHECK((std::isfinite(x) && x > 0.0));

    auto shifted = s;
    for (auto& x : shifted) x += 3.7;
    const auto q = softmax(shifted, tau);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);

    if (n > 1) {
      auto bumped = s;
      bumped[0] += 0.05;
      CHECK(softmax(bumped, tau)[0] > p[0]);
    }
    const auto flat = softmax(s, 1e6);
    for (double x : flat) CHECK(std::abs(x - 1.0 / double(n)) < 1e-3);
  }
}

TEST_CASE("presence from embeddings") {
  Scene sc;
  EmbeddingTable emb(2);
  const float vis[] = {1.0f, 0.0f};
  emb.add_visual("x", vis);
  const float t0[] = {1.0f, 0.0f}, t1[] = {0.0f, 1.0f}, t2[] = {1.0f, 1.0f};
  emb.add_text("a0", "obj", t0);
  emb.add_text("a1", "obj", t1);
  emb.add_text("a2", "obj", t2);

  SUBCASE("matches a hand softmax over cosine similarities") {
    const auto dist = presence_probabilities(sc.d.instances[0], sc.d, sc.fs, emb, ScoreConfig{1.0});
    const double s2 = 1.0 / std::sqrt(2.0);
    const double z = std::exp(1.0) + std::exp(0.0) + std::exp(s2);
    CHECK(dist.prob(0) == doctest::Approx(std::exp(1.0) / z));
    CHECK(dist.prob(1) == doctest::Approx(1.0 / z));
    CHECK(dist.prob(2) == doctest::Approx(std::exp(s2) / z));
  }
  SUBCASE("empty feasible set") {
    FeasibleSets none{3, {{}}};
    CHECK(presence_probabilities(sc.d.instances[0], sc.d, none, emb, ScoreConfig{}).empty());
  }
  SUBCASE("missing text embedding for a feasible pair") {
    EmbeddingTable partial(2);
    partial.add_visual("x", vis);
    partial.add_text("a0", "obj", t0);
    CHECK_THROWS_AS(presence_probabilities(sc.d.instances[0], sc.d, sc.fs, partial, ScoreConfig{}),
                    DataError);
  }
  SUBCASE("missing visual embedding") {
    EmbeddingTable novis(2);
    novis.add_text("a0", "obj", t0);
    CHECK_THROWS_AS(presence_probabilities(sc.d.instances[0], sc.d, sc.fs, novis, ScoreConfig{}),
                    DataError);
  }
  SUBCASE("dataset scoring agrees with single-instance scoring") {
    const auto table = score_dataset(sc.d, sc.fs, emb, ScoreConfig{0.5});
    const auto* d = table.find("x");
    REQUIRE(d);
    const auto one = presence_probabilities(sc.d.instances[0], sc.d, sc.fs, emb, ScoreConfig{0.5});
    CHECK(d->probs == one.probs);
  }
}

TEST_CASE("score file ingestion") {
  Dataset d{toy::vocab(5), {"obj", "other"}, {}, 1};
  d.instances.push_back({"x", 0, {}, {}, {0.0f}});
  d.instances.push_back({"y", 1, {}, {}, {0.0f}});
  const FeasibleSets fs{5, {{0, 1, 2, 3}, {4}}};

  SUBCASE("equal sims over four feasible attributes give 0.25 each") {
    std::istringstream in(
        R"({"instance_id":"x","object":"obj","sims":{"a0":0.2,"a1":0.2,"a2":0.2,"a3":0.2}})"
        "\n"
        R"({"instance_id":"y","object":"other","sims":{"a4":-0.9}})"
        "\n");
    const auto table = read_scores(in, d, fs, ScoreConfig{});
    for (AttrIndex a = 0; a < 4; ++a) CHECK(table.find("x")->prob(a) == doctest::Approx(0.25));
    CHECK(table.find("y")->prob(4) == 1.0);
  }
  SUBCASE("infeasible attribute is an error") {
    std::istringstream in(
        R"({"instance_id":"y","object":"other","sims":{"a4":0.1,"a0":0.3}})"
        "\n");
    CHECK_THROWS_AS(read_scores(in, d, fs, ScoreConfig{}), DataError);
  }
  SUBCASE("unknown instance is an error") {
    std::istringstream in(R"({"instance_id":"zz","object":"other","sims":{"a4":0.1}})"
                          "\n");
    CHECK_THROWS_AS(read_scores(in, d, fs, ScoreConfig{}), DataError);
  }
  SUBCASE("writer output reads back to the same distributions") {
    std::vector<SimilarityRow> rows = {{"x", 0, {0.1, 0.5, -0.2, 0.3, 0.9}},
                                       {"y", 1, {0.0, 0.0, 0.0, 0.0, 0.4}}};
    std::stringstream ss;
    write_scores(ss, rows, d, fs);
    const auto table = read_scores(ss, d, fs, ScoreConfig{0.05});
    const auto direct = presence_from_rows(rows, fs, ScoreConfig{0.05});
    // Similarities are stored as f32, so agreement is to float precision.
    const auto& got = table.find("x")->probs;
    const auto& want = direct.find("x")->probs;
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-5));
    // Entries outside the feasible set are not written.
    CHECK(ss.str().find("\"a4\"") == ss.str().rfind("\"a4\""));
  }
}

TEST_CASE("presence file round trip") {
  const Dataset d = toy::random_dataset(6, 1, 2, 30, 4, 0.5);
  FeasibleOptions all;
  all.include_negatives = true;
  const FeasibleSets fs = build_feasible(d, all);
  const PresenceTable t = toy::random_presence(d, fs, 9);
  std::stringstream ss;
  write_presence(ss, t, d);
  const PresenceTable back = read_presence(ss, d, fs);
  for (const auto& inst : d.instances) {
    const auto* a = t.find(inst.id);
    const auto* b = back.find(inst.id);
    REQUIRE(b);
    CHECK(a->attributes == b->attributes);
    for (std::size_t i = 0; i < a->probs.size(); ++i) {
      CHECK(b->probs[i] == doctest::Approx(a->probs[i]).epsilon(1e-12));
    }
  }
  CHECK(back.covers(d));
}

TEST_CASE("score config validation") {
  CHECK_THROWS_AS(ScoreConfig{0.0}.validate(), ConfigError);
  CHECK_THROWS_AS(ScoreConfig{-1.0}.validate(), ConfigError);
  CHECK_NOTHROW(ScoreConfig{}.validate());
}
