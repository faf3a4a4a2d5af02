#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bam/util.hpp"

namespace bam {

struct Node {
  std::string name;
  int64_t card = 0;
};

// One conditional table bound into a tying group: a child node plus its
// parents listed in the order that aligns the table's axes across bindings.
struct TyingBinding {
  int child = -1;
  std::vector<int> parents;
};

struct PriorSpec {
  double a = 1.0;  // equivalent sample size; also the Gamma shape of λ
  double b = 1.0;  // Gamma rate of λ
};

// A directed acyclic model over N index variables. The visible list is
// ordered: axis t of an observation tensor corresponds to nodes[visible[t]].
struct ModelSpec {
  std::vector<Node> nodes;
  std::vector<std::vector<int>> parents;  // per node, ascending indices
  std::vector<int> visible;
  std::vector<std::vector<TyingBinding>> tying;

  int size() const { return static_cast<int>(nodes.size()); }
  int find(std::string_view name) const;  // -1 when absent
};

// Empty result means the spec is valid; otherwise one message per violation.
std::vector<std::string> validate(const ModelSpec& spec);

// Throwing convenience around validate().
ModelSpec validated(ModelSpec spec);

// Throws on cycles; otherwise parents always precede children.
std::vector<int> topological_order(const ModelSpec& spec);

// BDeu pseudo-counts are constant per family and never materialized:
// α_fa(n) = a / ∏_{m ∈ fa(n)} I_m, so every family carries total mass a and
// the induced parent marginal is a / ∏_{m ∈ pa(n)} I_m (a itself for roots).
double alpha_family_cell(const ModelSpec& spec, const PriorSpec& prior, int n);
double alpha_parent_cell(const ModelSpec& spec, const PriorSpec& prior, int n);

// Per-node family-cell constants; the parent-cell constant is always
// family_cell[n] · I_n. This is the extension point for non-BDeu choices.
struct AlphaConstants {
  std::vector<double> family_cell;
};

AlphaConstants bdeu_alpha(const ModelSpec& spec, const PriorSpec& prior);

// Every family cell gets a / ∏_{all n} I_n regardless of family shape. This
// deliberately breaks likelihood equivalence; kept for prior-consistency
// diagnostics and tests.
AlphaConstants flat_cell_alpha(const ModelSpec& spec, const PriorSpec& prior);

enum class CatalogKind { klnmf, cp, tucker, pachinko, mmb, snmf };

std::optional<CatalogKind> catalog_kind(std::string_view name);
std::string_view catalog_name(CatalogKind kind);

// Standard model graphs. `dims` lists every node cardinality in the kind's
// canonical order:
//   klnmf    [I, K, J]           chain j→k→i, visible (i, j)
//   cp       [R, d1, ..., dN]    star r→i_t, visible (i_1, ..., i_N)
//   tucker   [I1, I2, I3, J4, J5, J6]  visible (i1, i2, i3)
//   pachinko [I, K1, ..., KL, J] chain j→k_1→...→k_L→i, visible (i, j)
//   mmb      [I1, I2, S, K1, K2] i1→k1→s←k2←i2, visible (i1, i2, s)
//   snmf     [R, I]              cp with N = 2 and both children tied
ModelSpec build_catalog_model(CatalogKind kind, const std::vector<int64_t>& dims);

// Re-orients every skeleton edge to point from the earlier to the later node
// of `order` (a permutation of node indices). Throws unless the result keeps
// the skeleton's immoralities, i.e. is Markov equivalent.
ModelSpec markov_equivalent_reorder(const ModelSpec& spec, const std::vector<int>& order);

struct ModelFile {
  ModelSpec spec;
  std::optional<PriorSpec> prior;
};

// JSON model format:
//   {"nodes":[{"name":"j","card":4},...], "edges":[["j","k"],["k","i"]],
//    "visible":["j","i"], "prior":{"a":1.0,"b":1.0},
//    "tying":[[["i","r"],["j","r"]]]}
// Edges are (parent, child); tying groups list (child, parent...) bindings.
ModelFile parse_model_json(const std::string& text, const std::string& origin = "<string>");
ModelFile read_model_json(const std::string& path);

}  // namespace bam
