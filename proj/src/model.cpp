#include "bam/model.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace bam {

int ModelSpec::find(std::string_view name) const {
  for (int n = 0; n < size(); ++n) {
    if (nodes[n].name == name) return n;
  }
  return -1;
}

namespace {

std::string node_label(const ModelSpec& spec, int n) {
  if (n >= 0 && n < spec.size() && !spec.nodes[n].name.empty()) return spec.nodes[n].name;
  return "#" + std::to_string(n);
}

// Kahn's algorithm; returns empty when a cycle blocks completion.
std::vector<int> kahn_order(const ModelSpec& spec) {
  const int N = spec.size();
  std::vector<int> indeg(N, 0);
  std::vector<std::vector<int>> children(N);
  for (int n = 0; n < N; ++n) {
    for (int p : spec.parents[n]) {
      if (p < 0 || p >= N) return {};
      children[p].push_back(n);
      ++indeg[n];
    }
  }
  std::deque<int> ready;
  for (int n = 0; n < N; ++n) {
    if (indeg[n] == 0) ready.push_back(n);
  }
  std::vector<int> order;
  order.reserve(N);
  while (!ready.empty()) {
    int n = ready.front();
    ready.pop_front();
    order.push_back(n);
    for (int c : children[n]) {
      if (--indeg[c] == 0) ready.push_back(c);
    }
  }
  if (static_cast<int>(order.size()) != N) return {};
  return order;
}

}  // namespace

std::vector<std::string> validate(const ModelSpec& spec) {
  std::vector<std::string> errors;
  const int N = spec.size();
  if (N == 0) {
    errors.push_back("bad-index: model has no nodes");
    return errors;
  }
  if (static_cast<int>(spec.parents.size()) != N) {
    errors.push_back("bad-index: parents list has " + std::to_string(spec.parents.size()) +
                     " entries for " + std::to_string(N) + " nodes");
    return errors;
  }

  std::unordered_set<std::string> names;
  for (int n = 0; n < N; ++n) {
    if (spec.nodes[n].card <= 0) {
      errors.push_back("bad-index: node " + node_label(spec, n) + " has non-positive cardinality " +
                       std::to_string(spec.nodes[n].card));
    }
    if (!names.insert(spec.nodes[n].name).second) {
      errors.push_back("bad-index: duplicate node name " + spec.nodes[n].name);
    }
  }

  bool parents_ok = true;
  for (int n = 0; n < N; ++n) {
    std::unordered_set<int> seen;
    for (int p : spec.parents[n]) {
      if (p < 0 || p >= N) {
        errors.push_back("bad-index: node " + node_label(spec, n) + " has parent index " +
                         std::to_string(p) + " outside [0," + std::to_string(N) + ")");
        parents_ok = false;
      } else if (p == n) {
        errors.push_back("cycle-detected: node " + node_label(spec, n) + " is its own parent");
        parents_ok = false;
      } else if (!seen.insert(p).second) {
        errors.push_back("bad-index: node " + node_label(spec, n) + " lists parent " +
                         node_label(spec, p) + " twice");
      }
    }
  }
  if (parents_ok && kahn_order(spec).empty()) {
    errors.push_back("cycle-detected: the parent graph contains a directed cycle");
  }

  if (spec.visible.empty()) {
    errors.push_back("empty-visible-set: at least one node must be visible");
  }
  std::unordered_set<int> vset;
  for (int v : spec.visible) {
    if (v < 0 || v >= N) {
      errors.push_back("bad-index: visible index " + std::to_string(v) + " outside [0," +
                       std::to_string(N) + ")");
    } else if (!vset.insert(v).second) {
      errors.push_back("bad-index: visible node " + node_label(spec, v) + " listed twice");
    }
  }

  // Tying is restricted to the single pattern the tied formulas support: one
  // group, one shared parentless root, and every child of that root bound
  // with equal cardinality.
  if (!spec.tying.empty()) {
    if (spec.tying.size() > 1) {
      errors.push_back("tying-shape-mismatch: only a single tying group is supported");
      return errors;
    }
    const auto& group = spec.tying.front();
    if (group.size() < 2) {
      errors.push_back("tying-shape-mismatch: a tying group needs at least two bindings");
      return errors;
    }
    int root = -1;
    int64_t child_card = -1;
    std::unordered_set<int> bound;
    for (const auto& binding : group) {
      if (binding.child < 0 || binding.child >= N) {
        errors.push_back("bad-index: tying binding child index " + std::to_string(binding.child) +
                         " outside [0," + std::to_string(N) + ")");
        return errors;
      }
      if (binding.parents.size() != 1) {
        errors.push_back("tying-shape-mismatch: node " + node_label(spec, binding.child) +
                         " must be bound with exactly one parent");
        continue;
      }
      int p = binding.parents.front();
      if (p < 0 || p >= N) {
        errors.push_back("bad-index: tying binding parent index " + std::to_string(p) +
                         " outside [0," + std::to_string(N) + ")");
        continue;
      }
      if (spec.parents[binding.child] != std::vector<int>{p}) {
        errors.push_back("tying-shape-mismatch: node " + node_label(spec, binding.child) +
                         " is not a child of " + node_label(spec, p) + " alone");
        continue;
      }
      if (root == -1) root = p;
      if (p != root) {
        errors.push_back("tying-shape-mismatch: bindings mix parents " + node_label(spec, root) +
                         " and " + node_label(spec, p));
        continue;
      }
      if (child_card == -1) child_card = spec.nodes[binding.child].card;
      if (spec.nodes[binding.child].card != child_card) {
        errors.push_back("tying-shape-mismatch: node " + node_label(spec, binding.child) +
                         " has cardinality " + std::to_string(spec.nodes[binding.child].card) +
                         ", expected " + std::to_string(child_card));
      }
      if (!bound.insert(binding.child).second) {
        errors.push_back("tying-shape-mismatch: node " + node_label(spec, binding.child) +
                         " bound twice");
      }
    }
    if (root != -1) {
      if (!spec.parents[root].empty()) {
        errors.push_back("tying-shape-mismatch: shared parent " + node_label(spec, root) +
                         " must be a root node");
      }
      for (int n = 0; n < N; ++n) {
        bool child_of_root =
            std::find(spec.parents[n].begin(), spec.parents[n].end(), root) != spec.parents[n].end();
        if (child_of_root && !bound.count(n)) {
          errors.push_back("tying-shape-mismatch: child " + node_label(spec, n) + " of " +
                           node_label(spec, root) + " is missing from the tying group");
        }
      }
    }
  }

  return errors;
}

ModelSpec validated(ModelSpec spec) {
  auto errors = validate(spec);
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) {
      if (!joined.empty()) joined += "; ";
      joined += e;
    }
    throw Error(Error::Code::bad_model, joined);
  }
  // Normalize parent order so family layouts are deterministic.
  for (auto& ps : spec.parents) std::sort(ps.begin(), ps.end());
  return spec;
}

std::vector<int> topological_order(const ModelSpec& spec) {
  auto order = kahn_order(spec);
  if (order.empty() && spec.size() > 0) {
    throw Error(Error::Code::bad_model, "cycle-detected: the parent graph contains a directed cycle");
  }
  return order;
}

double alpha_family_cell(const ModelSpec& spec, const PriorSpec& prior, int n) {
  double cells = static_cast<double>(spec.nodes[n].card);
  for (int p : spec.parents[n]) cells *= static_cast<double>(spec.nodes[p].card);
  return prior.a / cells;
}

double alpha_parent_cell(const ModelSpec& spec, const PriorSpec& prior, int n) {
  return alpha_family_cell(spec, prior, n) * static_cast<double>(spec.nodes[n].card);
}

AlphaConstants bdeu_alpha(const ModelSpec& spec, const PriorSpec& prior) {
  AlphaConstants alpha;
  alpha.family_cell.resize(spec.size());
  for (int n = 0; n < spec.size(); ++n) alpha.family_cell[n] = alpha_family_cell(spec, prior, n);
  return alpha;
}

AlphaConstants flat_cell_alpha(const ModelSpec& spec, const PriorSpec& prior) {
  double cells = 1.0;
  for (const auto& node : spec.nodes) cells *= static_cast<double>(node.card);
  AlphaConstants alpha;
  alpha.family_cell.assign(spec.size(), prior.a / cells);
  return alpha;
}

std::optional<CatalogKind> catalog_kind(std::string_view name) {
  if (name == "klnmf") return CatalogKind::klnmf;
  if (name == "cp") return CatalogKind::cp;
  if (name == "tucker") return CatalogKind::tucker;
  if (name == "pachinko") return CatalogKind::pachinko;
  if (name == "mmb") return CatalogKind::mmb;
  if (name == "snmf") return CatalogKind::snmf;
  return std::nullopt;
}

std::string_view catalog_name(CatalogKind kind) {
  switch (kind) {
    case CatalogKind::klnmf: return "klnmf";
    case CatalogKind::cp: return "cp";
    case CatalogKind::tucker: return "tucker";
    case CatalogKind::pachinko: return "pachinko";
    case CatalogKind::mmb: return "mmb";
    case CatalogKind::snmf: return "snmf";
  }
  return "?";
}

namespace {

void require_dims(CatalogKind kind, const std::vector<int64_t>& dims, size_t lo, size_t hi) {
  if (dims.size() < lo || dims.size() > hi) {
    std::string want = (lo == hi) ? std::to_string(lo)
                                  : "between " + std::to_string(lo) + " and " + std::to_string(hi);
    throw Error(Error::Code::bad_argument,
                std::string(catalog_name(kind)) + " expects " + want + " cardinalities, got " +
                    std::to_string(dims.size()));
  }
  for (int64_t d : dims) {
    if (d <= 0) {
      throw Error(Error::Code::bad_argument,
                  std::string(catalog_name(kind)) + " cardinalities must be positive");
    }
  }
}

}  // namespace

ModelSpec build_catalog_model(CatalogKind kind, const std::vector<int64_t>& dims) {
  ModelSpec spec;
  auto add = [&spec](std::string name, int64_t card, std::vector<int> parents) {
    spec.nodes.push_back({std::move(name), card});
    spec.parents.push_back(std::move(parents));
    return spec.size() - 1;
  };
  switch (kind) {
    case CatalogKind::klnmf: {
      require_dims(kind, dims, 3, 3);
      int j = add("j", dims[2], {});
      int k = add("k", dims[1], {j});
      int i = add("i", dims[0], {k});
      spec.visible = {i, j};
      break;
    }
    case CatalogKind::cp: {
      require_dims(kind, dims, 2, 64);
      int r = add("r", dims[0], {});
      for (size_t t = 1; t < dims.size(); ++t) {
        int it = add("i" + std::to_string(t), dims[t], {r});
        spec.visible.push_back(it);
      }
      break;
    }
    case CatalogKind::tucker: {
      require_dims(kind, dims, 6, 6);
      // Order chosen so the core indices precede the leaves they condition.
      int j6 = add("j6", dims[5], {});
      int j5 = add("j5", dims[4], {j6});
      int j4 = add("j4", dims[3], {j5, j6});
      int i1 = add("i1", dims[0], {j4});
      int i2 = add("i2", dims[1], {j5});
      int i3 = add("i3", dims[2], {j6});
      spec.visible = {i1, i2, i3};
      break;
    }
    case CatalogKind::pachinko: {
      require_dims(kind, dims, 3, 64);
      const size_t L = dims.size() - 2;
      int prev = add("j", dims[dims.size() - 1], {});
      for (size_t l = 1; l <= L; ++l) {
        prev = add("k" + std::to_string(l), dims[l], {prev});
      }
      int i = add("i", dims[0], {prev});
      spec.visible = {i, spec.find("j")};
      break;
    }
    case CatalogKind::mmb: {
      require_dims(kind, dims, 5, 5);
      int i1 = add("i1", dims[0], {});
      int i2 = add("i2", dims[1], {});
      int k1 = add("k1", dims[3], {i1});
      int k2 = add("k2", dims[4], {i2});
      int s = add("s", dims[2], {k1, k2});
      spec.visible = {i1, i2, s};
      break;
    }
    case CatalogKind::snmf: {
      require_dims(kind, dims, 2, 2);
      int r = add("r", dims[0], {});
      int i1 = add("i1", dims[1], {r});
      int i2 = add("i2", dims[1], {r});
      spec.visible = {i1, i2};
      spec.tying = {{TyingBinding{i1, {r}}, TyingBinding{i2, {r}}}};
      break;
    }
  }
  return validated(std::move(spec));
}

namespace {

struct Edge {
  int a, b;  // a < b, undirected
  bool operator<(const Edge& o) const { return a != o.a ? a < o.a : b < o.b; }
  bool operator==(const Edge& o) const { return a == o.a && b == o.b; }
};

Edge normalize(int x, int y) { return x < y ? Edge{x, y} : Edge{y, x}; }

// Immoralities: unmarried parents sharing a child, as (parent-pair, child).
std::set<std::pair<Edge, int>> immoralities(const ModelSpec& spec,
                                            const std::set<Edge>& skeleton) {
  std::set<std::pair<Edge, int>> out;
  for (int n = 0; n < spec.size(); ++n) {
    const auto& ps = spec.parents[n];
    for (size_t x = 0; x < ps.size(); ++x) {
      for (size_t y = x + 1; y < ps.size(); ++y) {
        Edge pair = normalize(ps[x], ps[y]);
        if (!skeleton.count(pair)) out.insert({pair, n});
      }
    }
  }
  return out;
}

}  // namespace

ModelSpec markov_equivalent_reorder(const ModelSpec& spec, const std::vector<int>& order) {
  const int N = spec.size();
  if (static_cast<int>(order.size()) != N) {
    throw Error(Error::Code::bad_argument, "order must list every node exactly once");
  }
  std::vector<int> position(N, -1);
  for (int rank = 0; rank < N; ++rank) {
    int n = order[rank];
    if (n < 0 || n >= N || position[n] != -1) {
      throw Error(Error::Code::bad_argument, "order must be a permutation of node indices");
    }
    position[n] = rank;
  }
  if (!spec.tying.empty()) {
    throw Error(Error::Code::bad_model, "reordering a model with tied tables is not supported");
  }

  std::set<Edge> skeleton;
  for (int n = 0; n < N; ++n) {
    for (int p : spec.parents[n]) skeleton.insert(normalize(p, n));
  }

  ModelSpec out;
  out.nodes = spec.nodes;
  out.visible = spec.visible;
  out.parents.assign(N, {});
  for (const Edge& e : skeleton) {
    int parent = position[e.a] < position[e.b] ? e.a : e.b;
    int child = parent == e.a ? e.b : e.a;
    out.parents[child].push_back(parent);
  }
  for (auto& ps : out.parents) std::sort(ps.begin(), ps.end());

  if (immoralities(spec, skeleton) != immoralities(out, skeleton)) {
    throw Error(Error::Code::bad_model,
                "requested order changes the immoralities; the reordered graph is not Markov equivalent");
  }
  return validated(std::move(out));
}

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& origin, const std::string& what) {
  throw Error(Error::Code::parse, origin + ": " + what);
}

int lookup_node(const ModelSpec& spec, const json& j, const std::string& origin,
                const std::string& role) {
  if (!j.is_string()) parse_fail(origin, role + " must be a node name string");
  int n = spec.find(j.get<std::string>());
  if (n < 0) parse_fail(origin, role + " references unknown node " + j.get<std::string>());
  return n;
}

}  // namespace

ModelFile parse_model_json(const std::string& text, const std::string& origin) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) parse_fail(origin, "not valid JSON");
  if (!doc.is_object()) parse_fail(origin, "top level must be an object");

  ModelFile file;
  ModelSpec& spec = file.spec;

  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    parse_fail(origin, "missing \"nodes\" array");
  }
  for (const auto& jn : doc["nodes"]) {
    if (!jn.is_object() || !jn.contains("name") || !jn["name"].is_string() ||
        !jn.contains("card") || !jn["card"].is_number_integer()) {
      parse_fail(origin, "each node needs a string \"name\" and integer \"card\"");
    }
    spec.nodes.push_back({jn["name"].get<std::string>(), jn["card"].get<int64_t>()});
    spec.parents.emplace_back();
  }

  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) parse_fail(origin, "\"edges\" must be an array");
    for (const auto& je : doc["edges"]) {
      if (!je.is_array() || je.size() != 2) {
        parse_fail(origin, "each edge must be a [parent, child] pair");
      }
      int parent = lookup_node(spec, je[0], origin, "edge parent");
      int child = lookup_node(spec, je[1], origin, "edge child");
      spec.parents[child].push_back(parent);
    }
  }

  if (!doc.contains("visible") || !doc["visible"].is_array()) {
    parse_fail(origin, "missing \"visible\" array");
  }
  for (const auto& jv : doc["visible"]) {
    spec.visible.push_back(lookup_node(spec, jv, origin, "visible entry"));
  }

  if (doc.contains("tying")) {
    if (!doc["tying"].is_array()) parse_fail(origin, "\"tying\" must be an array of groups");
    for (const auto& jg : doc["tying"]) {
      if (!jg.is_array()) parse_fail(origin, "each tying group must be an array of bindings");
      std::vector<TyingBinding> group;
      for (const auto& jb : jg) {
        if (!jb.is_array() || jb.size() < 2) {
          parse_fail(origin, "each tying binding must be [child, parent, ...]");
        }
        TyingBinding binding;
        binding.child = lookup_node(spec, jb[0], origin, "tying child");
        for (size_t t = 1; t < jb.size(); ++t) {
          binding.parents.push_back(lookup_node(spec, jb[t], origin, "tying parent"));
        }
        group.push_back(std::move(binding));
      }
      spec.tying.push_back(std::move(group));
    }
  }

  if (doc.contains("prior")) {
    const auto& jp = doc["prior"];
    if (!jp.is_object() || !jp.contains("a") || !jp.contains("b") || !jp["a"].is_number() ||
        !jp["b"].is_number()) {
      parse_fail(origin, "\"prior\" must be an object with numeric a and b");
    }
    PriorSpec prior{jp["a"].get<double>(), jp["b"].get<double>()};
    if (!(prior.a > 0.0) || !(prior.b > 0.0)) {
      parse_fail(origin, "prior requires a > 0 and b > 0");
    }
    file.prior = prior;
  }

  file.spec = validated(std::move(spec));
  return file;
}

ModelFile read_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Code::parse, path + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str(), path);
}

}  // namespace bam
