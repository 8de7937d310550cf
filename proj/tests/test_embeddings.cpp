#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "csmn/embeddings.hpp"
#include "support/testutil.hpp"

using namespace csmn;
using Catch::Matchers::WithinAbs;

static std::vector<FieldSpec> tiny_schema() {
  return {
      {"item_id", FieldGroup::item, 10, 4},
      {"item_cat", FieldGroup::item, 5, 4},
      {"prof_a", FieldGroup::profile, 6, 3},
      {"prof_b", FieldGroup::profile, 6, 3},
      {"scenario_id", FieldGroup::scenario, 4, 3},
      {"ctx", FieldGroup::context, 4, 2},
  };
}

TEST_CASE("embed_group shapes") {
  Rng rng(1);
  Embeddings emb(tiny_schema(), rng);
  Graph g;
  auto bound = emb.bind(g);
  SECTION("item concat dim is the sum of field dims") {
    Var v = bound.embed_group({{{3}, {1}}}, FieldGroup::item);
    REQUIRE(g.value(v).shape == std::vector<std::size_t>{8});
    REQUIRE(emb.group_dim(FieldGroup::item) == 8);
  }
  SECTION("behavior rows, one per past item") {
    Var v = bound.embed_group({{{3, 1, 3}, {0, 2, 4}}}, FieldGroup::behavior);
    REQUIRE(g.value(v).shape == std::vector<std::size_t>{3, 8});
  }
  SECTION("empty behavior list gives 0 x d") {
    Var v = bound.embed_group({{{}, {}}}, FieldGroup::behavior);
    REQUIRE(g.value(v).shape == std::vector<std::size_t>{0, 8});
  }
  SECTION("same id twice in a sequence gives identical rows") {
    Var v = bound.embed_group({{{2, 2}, {1, 1}}}, FieldGroup::behavior);
    const Tensor& t = g.value(v);
    for (std::size_t c = 0; c < t.shape[1]; ++c) REQUIRE(t.at(0, c) == t.at(1, c));
  }
  SECTION("multi-valued profile field is mean-pooled") {
    Var v = bound.embed_group({{{1, 3}, {2}}}, FieldGroup::profile);
    const Tensor& pa = emb.table("prof_a");
    const Tensor& got = g.value(v);
    for (std::size_t c = 0; c < 3; ++c)
      REQUIRE_THAT(got.data[c], WithinAbs(0.5 * (pa.at(1, c) + pa.at(3, c)), 1e-15));
  }
  SECTION("id overflow rejected") {
    REQUIRE_THROWS_AS(bound.embed_group({{{10}, {0}}}, FieldGroup::item), std::out_of_range);
  }
  SECTION("field count mismatch rejected") {
    REQUIRE_THROWS_AS(bound.embed_group({{{1}}}, FieldGroup::item), std::invalid_argument);
  }
}

TEST_CASE("profile rows matrix") {
  Rng rng(2);
  Embeddings emb(tiny_schema(), rng);
  Graph g;
  auto bound = emb.bind(g);
  Var rows = bound.embed_profile_rows({{{1}, {4}}});
  REQUIRE(g.value(rows).shape == std::vector<std::size_t>{2, 3});
  const Tensor& pb = emb.table("prof_b");
  for (std::size_t c = 0; c < 3; ++c) REQUIRE(g.value(rows).at(1, c) == pb.at(4, c));
}

TEST_CASE("behavior and target item share one table object") {
  Rng rng(3);
  Embeddings emb(tiny_schema(), rng);
  ParamStore store;
  emb.register_params(store);
  REQUIRE(store.find("emb.item_id") == &emb.table("item_id"));

  // a loss driven only by a behavior occurrence moves the target-item table
  Graph g;
  auto bound = emb.bind(g);
  Var beh = bound.embed_group({{{7, 7}, {0, 0}}}, FieldGroup::behavior);
  Var loss = g.sum(beh);
  g.backward(loss);
  Tensor& t = emb.table("item_id");
  double row7 = 0.0, elsewhere = 0.0;
  for (std::size_t c = 0; c < 4; ++c) row7 += t.grad[7 * 4 + c];
  for (std::size_t r = 0; r < 10; ++r)
    if (r != 7)
      for (std::size_t c = 0; c < 4; ++c) elsewhere += std::fabs(t.grad[r * 4 + c]);
  REQUIRE(row7 == 8.0);  // two occurrences, grad 1 per coordinate
  REQUIRE(elsewhere == 0.0);
}

TEST_CASE("one batch shares a single tape leaf per table") {
  Rng rng(4);
  Embeddings emb(tiny_schema(), rng);
  Graph g;
  auto bound = emb.bind(g);
  std::size_t before = g.size();
  bound.embed_group({{{1}, {1}}}, FieldGroup::item);
  std::size_t after_first = g.size();
  bound.embed_group({{{2}, {2}}}, FieldGroup::item);
  std::size_t after_second = g.size();
  // second lookup adds gather/reshape/concat nodes but no new param leaves
  REQUIRE(after_second - after_first < after_first - before);
}

TEST_CASE("hash_id") {
  SECTION("vocab of one always maps to zero") {
    REQUIRE(hash_id("anything", 1) == 0);
    REQUIRE(hash_id("42", 1) == 0);
  }
  SECTION("deterministic") {
    REQUIRE(hash_id("user_991", 1000) == hash_id("user_991", 1000));
    REQUIRE(hash_id(std::uint64_t{991}, 1000) == hash_id("991", 1000));
  }
  SECTION("in-range decimal tokens map to themselves") {
    REQUIRE(hash_id("7", 100) == 7);
    REQUIRE(hash_id("99", 100) == 99);
    // out of range falls back to hashing
    REQUIRE(hash_id("100", 100) < 100);
  }
  SECTION("empirical uniformity: 1e5 distinct inputs, 1e3 buckets") {
    std::vector<std::size_t> load(1000, 0);
    for (int i = 0; i < 100000; ++i) ++load[hash_id("token_" + std::to_string(i), 1000)];
    std::size_t max_load = *std::max_element(load.begin(), load.end());
    REQUIRE(max_load < 300);  // < 3x the mean load of 100
  }
}
