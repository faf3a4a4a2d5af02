#include <string>

#include "doctest.h"

#include "bam/model.hpp"

using namespace bam;

namespace {

ModelSpec chain3() {
  // j -> k -> i with cardinalities 4, 2, 3; visible (i, j).
  ModelSpec s;
  s.nodes = {{"j", 4}, {"k", 2}, {"i", 3}};
  s.parents = {{}, {0}, {1}};
  s.visible = {2, 0};
  return s;
}

}  // namespace

TEST_CASE("validate accepts a well-formed chain") {
  CHECK(validate(chain3()).empty());
  CHECK_NOTHROW(validated(chain3()));
}

TEST_CASE("validate reports cycles, bad indices, and empty visible sets") {
  ModelSpec cyc = chain3();
  cyc.parents[0] = {2};  // j -> k -> i -> j
  auto msgs = validate(cyc);
  REQUIRE(!msgs.empty());
  CHECK(msgs[0].find("cycle") != std::string::npos);

  ModelSpec bad = chain3();
  bad.parents[1] = {9};
  CHECK(!validate(bad).empty());

  ModelSpec blind = chain3();
  blind.visible.clear();
  CHECK(!validate(blind).empty());

  ModelSpec zero = chain3();
  zero.nodes[0].card = 0;
  CHECK(!validate(zero).empty());

  CHECK_THROWS_AS(validated(cyc), Error);
}

TEST_CASE("topological order puts parents before children") {
  const ModelSpec spec = chain3();
  const auto topo = topological_order(spec);
  REQUIRE(topo.size() == 3);
  std::vector<int> pos(3);
  for (int t = 0; t < 3; ++t) pos[static_cast<size_t>(topo[static_cast<size_t>(t)])] = t;
  CHECK(pos[0] < pos[1]);  // j before k
  CHECK(pos[1] < pos[2]);  // k before i
}

TEST_CASE("BDeu constants spread mass a over each family") {
  const ModelSpec spec = validated(chain3());
  const PriorSpec prior{2.0, 1.0};
  const AlphaConstants alpha = bdeu_alpha(spec, prior);
  CHECK(alpha.family_cell[0] == doctest::Approx(2.0 / 4));      // family {j}
  CHECK(alpha.family_cell[1] == doctest::Approx(2.0 / 8));      // family {j,k}
  CHECK(alpha.family_cell[2] == doctest::Approx(2.0 / 6));      // family {k,i}
  CHECK(alpha_parent_cell(spec, prior, 1) == doctest::Approx(2.0 / 4));
  CHECK(alpha_parent_cell(spec, prior, 0) == doctest::Approx(2.0));  // root

  const AlphaConstants flat = flat_cell_alpha(spec, prior);
  for (double v : flat.family_cell) CHECK(v == doctest::Approx(2.0 / 24));
}

TEST_CASE("catalog models have the documented shapes") {
  const ModelSpec nmf = build_catalog_model(CatalogKind::klnmf, {3, 2, 4});
  CHECK(nmf.size() == 3);
  CHECK(nmf.nodes[0].name == "j");
  CHECK(nmf.visible.size() == 2);
  CHECK(nmf.nodes[nmf.visible[0]].card == 3);  // i axis first
  CHECK(nmf.nodes[nmf.visible[1]].card == 4);

  const ModelSpec cp = build_catalog_model(CatalogKind::cp, {5, 2, 3, 4});
  CHECK(cp.size() == 4);
  CHECK(cp.parents[1] == std::vector<int>{0});
  CHECK(cp.parents[2] == std::vector<int>{0});
  CHECK(cp.parents[3] == std::vector<int>{0});

  const ModelSpec tucker = build_catalog_model(CatalogKind::tucker, {2, 3, 4, 2, 2, 2});
  CHECK(tucker.size() == 6);
  CHECK(tucker.visible.size() == 3);

  const ModelSpec pk = build_catalog_model(CatalogKind::pachinko, {3, 2, 2, 4});
  CHECK(pk.size() == 4);  // j, k1, k2, i

  const ModelSpec mmb = build_catalog_model(CatalogKind::mmb, {3, 3, 2, 2, 2});
  CHECK(mmb.size() == 5);
  CHECK(mmb.visible.size() == 3);

  const ModelSpec snmf = build_catalog_model(CatalogKind::snmf, {2, 4});
  REQUIRE(snmf.tying.size() == 1);
  CHECK(snmf.tying[0].size() == 2);
  CHECK(snmf.nodes[snmf.tying[0][0].child].card == 4);

  CHECK(catalog_kind("klnmf").has_value());
  CHECK(!catalog_kind("nope").has_value());
  CHECK(catalog_name(CatalogKind::snmf) == "snmf");
}

TEST_CASE("tying validation rejects malformed groups") {
  ModelSpec s = build_catalog_model(CatalogKind::snmf, {2, 4});
  s.tying[0].pop_back();  // a group of one is not tying anything
  CHECK(!validate(s).empty());

  ModelSpec uneven = build_catalog_model(CatalogKind::snmf, {2, 4});
  uneven.nodes[uneven.tying[0][1].child].card = 3;  // shared table shape mismatch
  CHECK(!validate(uneven).empty());
}

TEST_CASE("markov_equivalent_reorder flips chains but rejects new immoralities") {
  const ModelSpec spec = validated(chain3());

  // Reverse the chain: i -> k -> j keeps the skeleton and adds no v-structure.
  const ModelSpec rev = markov_equivalent_reorder(spec, {2, 1, 0});
  CHECK(rev.parents[0] == std::vector<int>{1});  // j <- k
  CHECK(rev.parents[1] == std::vector<int>{2});  // k <- i
  CHECK(rev.parents[2].empty());

  // k as the last node would orient j -> k <- i: an immorality the chain
  // lacks, so it is not Markov equivalent.
  CHECK_THROWS_AS(markov_equivalent_reorder(spec, {0, 2, 1}), Error);
}

TEST_CASE("model JSON round-trips nodes, edges, visibility, prior, and tying") {
  const std::string text = R"({
    "nodes": [{"name": "r", "card": 2}, {"name": "i1", "card": 3}, {"name": "i2", "card": 3}],
    "edges": [["r", "i1"], ["r", "i2"]],
    "visible": ["i1", "i2"],
    "prior": {"a": 0.5, "b": 2.0},
    "tying": [[["i1", "r"], ["i2", "r"]]]
  })";
  const ModelFile file = parse_model_json(text);
  CHECK(file.spec.size() == 3);
  CHECK(file.spec.parents[1] == std::vector<int>{0});
  CHECK(file.spec.visible == std::vector<int>{1, 2});
  REQUIRE(file.prior.has_value());
  CHECK(file.prior->a == doctest::Approx(0.5));
  CHECK(file.prior->b == doctest::Approx(2.0));
  REQUIRE(file.spec.tying.size() == 1);
  CHECK(file.spec.tying[0][0].child == 1);

  CHECK_THROWS_AS(parse_model_json("{not json"), Error);
  CHECK_THROWS_AS(parse_model_json(R"({"nodes":[],"edges":[],"visible":[]})"), Error);
  CHECK_THROWS_AS(
      parse_model_json(
          R"({"nodes":[{"name":"i","card":2}],"edges":[["i","q"]],"visible":["i"]})"),
      Error);
  // Priors must be positive.
  CHECK_THROWS_AS(
      parse_model_json(
          R"({"nodes":[{"name":"i","card":2}],"edges":[],"visible":["i"],"prior":{"a":0}})"),
      Error);
}
