#include "bam/tensor.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace bam {

std::vector<uint64_t> packing_strides(const std::vector<int64_t>& dims) {
  std::vector<uint64_t> strides(dims.size());
  uint64_t stride = 1;
  for (size_t t = 0; t < dims.size(); ++t) {
    if (dims[t] <= 0) throw Error(Error::Code::bad_argument, "dimensions must be positive");
    strides[t] = stride;
    uint64_t d = static_cast<uint64_t>(dims[t]);
    if (stride > std::numeric_limits<uint64_t>::max() / d) {
      throw Error(Error::Code::bad_argument, "index space exceeds 64-bit packing range");
    }
    stride *= d;
  }
  return strides;
}

uint64_t pack_index(std::span<const int64_t> tuple, std::span<const uint64_t> strides) {
  uint64_t key = 0;
  for (size_t t = 0; t < tuple.size(); ++t) key += static_cast<uint64_t>(tuple[t]) * strides[t];
  return key;
}

void unpack_index(uint64_t key, const std::vector<int64_t>& dims, std::span<int64_t> out) {
  for (size_t t = 0; t < dims.size(); ++t) {
    uint64_t d = static_cast<uint64_t>(dims[t]);
    out[t] = static_cast<int64_t>(key % d);
    key /= d;
  }
}

std::vector<uint64_t> sorted_keys(const CountMap& map) {
  std::vector<uint64_t> keys;
  keys.reserve(map.size());
  for (const auto& [k, v] : map) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

SparseCountTensor::SparseCountTensor(std::vector<int64_t> dims)
    : dims_(std::move(dims)), strides_(packing_strides(dims_)) {}

void SparseCountTensor::check_tuple(std::span<const int64_t> tuple) const {
  if (tuple.size() != dims_.size()) {
    throw Error(Error::Code::bad_argument, "index tuple arity does not match tensor order");
  }
  for (size_t t = 0; t < tuple.size(); ++t) {
    if (tuple[t] < 0 || tuple[t] >= dims_[t]) {
      throw Error(Error::Code::bad_argument,
                  "index " + std::to_string(tuple[t]) + " out of range for axis " +
                      std::to_string(t) + " (cardinality " + std::to_string(dims_[t]) + ")");
    }
  }
}

uint64_t SparseCountTensor::pack(std::span<const int64_t> tuple) const {
  check_tuple(tuple);
  return pack_index(tuple, strides_);
}

void SparseCountTensor::unpack(uint64_t key, std::span<int64_t> out) const {
  unpack_index(key, dims_, out);
}

int64_t SparseCountTensor::at(std::span<const int64_t> tuple) const { return at_key(pack(tuple)); }

int64_t SparseCountTensor::at_key(uint64_t key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second;
}

void SparseCountTensor::set(std::span<const int64_t> tuple, int64_t count) {
  uint64_t key = pack(tuple);
  if (count < 0) throw Error(Error::Code::bad_argument, "counts must be nonnegative");
  if (is_missing_key(key)) {
    throw Error(Error::Code::bad_argument, "cannot assign a count to a missing cell");
  }
  if (count == 0) {
    entries_.erase(key);
  } else {
    entries_[key] = count;
  }
}

void SparseCountTensor::add(std::span<const int64_t> tuple, int64_t delta) {
  uint64_t key = pack(tuple);
  if (is_missing_key(key)) {
    throw Error(Error::Code::bad_argument, "cannot add a count to a missing cell");
  }
  auto it = entries_.try_emplace(key, 0).first;
  it->second += delta;
  if (it->second < 0) {
    throw Error(Error::Code::underflow, "count would become negative");
  }
  if (it->second == 0) entries_.erase(it);
}

void SparseCountTensor::mark_missing(std::span<const int64_t> tuple) {
  uint64_t key = pack(tuple);
  if (entries_.count(key)) {
    throw Error(Error::Code::bad_argument, "cell with a stored count cannot be marked missing");
  }
  auto it = std::lower_bound(mask_.begin(), mask_.end(), key);
  if (it == mask_.end() || *it != key) mask_.insert(it, key);
}

bool SparseCountTensor::is_missing_key(uint64_t key) const {
  return std::binary_search(mask_.begin(), mask_.end(), key);
}

int64_t SparseCountTensor::total() const {
  int64_t sum = 0;
  for (const auto& [k, v] : entries_) sum += v;
  return sum;
}

std::vector<uint64_t> SparseCountTensor::sorted_entry_keys() const { return sorted_keys(entries_); }

SparseCountTensor contract(const SparseCountTensor& t, const std::vector<int>& keep) {
  std::vector<bool> seen(t.order(), false);
  std::vector<int64_t> out_dims;
  out_dims.reserve(keep.size());
  for (int axis : keep) {
    if (axis < 0 || axis >= t.order() || seen[axis]) {
      throw Error(Error::Code::bad_argument,
                  "bad-index-set: keep list must name distinct axes of the tensor");
    }
    seen[axis] = true;
    out_dims.push_back(t.dims()[axis]);
  }
  SparseCountTensor out(std::move(out_dims));
  std::vector<int64_t> cell(t.order());
  std::vector<int64_t> kept(keep.size());
  for (const auto& [key, count] : t.entries()) {
    t.unpack(key, cell);
    for (size_t u = 0; u < keep.size(); ++u) kept[u] = cell[keep[u]];
    out.add(kept, count);
  }
  return out;
}

namespace {

[[noreturn]] void tensor_fail(const std::string& origin, int line, const std::string& what) {
  throw Error(Error::Code::parse, origin + ":" + std::to_string(line) + ": " + what);
}

int64_t parse_count_token(const std::string& tok, const std::string& origin, int line) {
  size_t used = 0;
  int64_t value = 0;
  try {
    value = std::stoll(tok, &used);
  } catch (const std::exception&) {
    tensor_fail(origin, line, "parse-error: expected an integer, got \"" + tok + "\"");
  }
  if (used != tok.size()) {
    tensor_fail(origin, line, "parse-error: expected an integer, got \"" + tok + "\"");
  }
  return value;
}

}  // namespace

SparseCountTensor read_tensor(std::istream& in, const std::string& origin) {
  SparseCountTensor tensor;
  bool have_dims = false;
  std::string line;
  int lineno = 0;
  std::vector<int64_t> tuple;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;

    if (!have_dims) {
      if (tokens[0] != "dims") {
        tensor_fail(origin, lineno, "dims-line-missing: first significant line must be `dims ...`");
      }
      std::vector<int64_t> dims;
      for (size_t t = 1; t < tokens.size(); ++t) {
        int64_t d = parse_count_token(tokens[t], origin, lineno);
        if (d <= 0) tensor_fail(origin, lineno, "parse-error: cardinalities must be positive");
        dims.push_back(d);
      }
      if (dims.empty()) tensor_fail(origin, lineno, "parse-error: `dims` line lists no cardinalities");
      tensor = SparseCountTensor(std::move(dims));
      tuple.resize(tensor.order());
      have_dims = true;
      continue;
    }

    const size_t N = static_cast<size_t>(tensor.order());
    bool missing = tokens[0] == "missing";
    size_t first = missing ? 1 : 0;
    // Entries are `i1 ... iN count`; missing lines are `missing i1 ... iN`.
    if (tokens.size() != N + 1) {
      tensor_fail(origin, lineno, "parse-error: wrong number of fields");
    }
    for (size_t t = 0; t < N; ++t) {
      int64_t idx = parse_count_token(tokens[first + t], origin, lineno);
      if (idx < 0 || idx >= tensor.dims()[t]) {
        tensor_fail(origin, lineno,
                    "parse-error: index " + std::to_string(idx) + " out of range for axis " +
                        std::to_string(t));
      }
      tuple[t] = idx;
    }
    uint64_t key = tensor.pack(tuple);
    if (tensor.at_key(key) != 0 || tensor.is_missing_key(key)) {
      tensor_fail(origin, lineno, "duplicate-entry: index tuple already assigned");
    }
    if (missing) {
      tensor.mark_missing(tuple);
    } else {
      int64_t count = parse_count_token(tokens[N], origin, lineno);
      if (count <= 0) tensor_fail(origin, lineno, "parse-error: counts must be positive");
      tensor.set(tuple, count);
    }
  }
  if (!have_dims) {
    throw Error(Error::Code::parse, origin + ": dims-line-missing: no `dims` line found");
  }
  return tensor;
}

SparseCountTensor read_tensor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Code::parse, path + ": cannot open for reading");
  return read_tensor(in, path);
}

void write_tensor(const SparseCountTensor& t, std::ostream& out) {
  out << "dims";
  for (int64_t d : t.dims()) out << ' ' << d;
  out << '\n';
  std::vector<int64_t> tuple(t.order());
  for (uint64_t key : t.sorted_entry_keys()) {
    t.unpack(key, tuple);
    for (int64_t i : tuple) out << i << ' ';
    out << t.at_key(key) << '\n';
  }
  for (uint64_t key : t.mask()) {
    t.unpack(key, tuple);
    out << "missing";
    for (int64_t i : tuple) out << ' ' << i;
    out << '\n';
  }
}

void write_tensor_file(const SparseCountTensor& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Error::Code::parse, path + ": cannot open for writing");
  write_tensor(t, out);
  if (!out) throw Error(Error::Code::parse, path + ": write failed");
}

std::shared_ptr<const ModelLayout> ModelLayout::create(ModelSpec spec) {
  auto layout = std::make_shared<ModelLayout>();
  layout->spec_ = validated(std::move(spec));
  const ModelSpec& m = layout->spec_;
  const int N = m.size();
  layout->topo_ = topological_order(m);

  layout->family_.resize(N);
  layout->family_strides_.resize(N);
  layout->parent_strides_.resize(N);
  layout->family_cells_.resize(N);
  layout->parent_cells_.resize(N);
  for (int n = 0; n < N; ++n) {
    auto& fam = layout->family_[n];
    fam = m.parents[n];
    fam.push_back(n);
    std::sort(fam.begin(), fam.end());

    uint64_t stride = 1;
    double cells = 1.0;
    for (int member : fam) {
      layout->family_strides_[n].push_back(stride);
      stride *= static_cast<uint64_t>(m.nodes[member].card);
      cells *= static_cast<double>(m.nodes[member].card);
    }
    layout->family_cells_[n] = cells;

    stride = 1;
    cells = 1.0;
    for (int p : m.parents[n]) {
      layout->parent_strides_[n].push_back(stride);
      stride *= static_cast<uint64_t>(m.nodes[p].card);
      cells *= static_cast<double>(m.nodes[p].card);
    }
    layout->parent_cells_[n] = cells;
  }

  std::vector<bool> is_visible(N, false);
  for (int v : m.visible) {
    layout->visible_dims_.push_back(m.nodes[v].card);
    is_visible[v] = true;
  }
  layout->visible_strides_ = packing_strides(layout->visible_dims_);
  for (int n = 0; n < N; ++n) {
    if (!is_visible[n]) {
      layout->latent_.push_back(n);
      layout->latent_dims_.push_back(m.nodes[n].card);
    }
  }
  layout->latent_cells_ = 1;
  for (int64_t d : layout->latent_dims_) {
    if (layout->latent_cells_ > std::numeric_limits<int64_t>::max() / d) {
      layout->latent_cells_ = std::numeric_limits<int64_t>::max();
      break;
    }
    layout->latent_cells_ *= d;
  }
  layout->cell_strides_ = packing_strides(layout->full_dims());
  return layout;
}

uint64_t ModelLayout::family_key(int n, std::span<const int64_t> cell) const {
  uint64_t key = 0;
  const auto& fam = family_[n];
  const auto& strides = family_strides_[n];
  for (size_t t = 0; t < fam.size(); ++t) key += static_cast<uint64_t>(cell[fam[t]]) * strides[t];
  return key;
}

uint64_t ModelLayout::parent_key(int n, std::span<const int64_t> cell) const {
  uint64_t key = 0;
  const auto& pa = spec_.parents[n];
  const auto& strides = parent_strides_[n];
  for (size_t t = 0; t < pa.size(); ++t) key += static_cast<uint64_t>(cell[pa[t]]) * strides[t];
  return key;
}

uint64_t ModelLayout::visible_key(std::span<const int64_t> cell) const {
  uint64_t key = 0;
  for (size_t t = 0; t < spec_.visible.size(); ++t) {
    key += static_cast<uint64_t>(cell[spec_.visible[t]]) * visible_strides_[t];
  }
  return key;
}

uint64_t ModelLayout::cell_key(std::span<const int64_t> cell) const {
  return pack_index(cell, cell_strides_);
}

void ModelLayout::unpack_cell(uint64_t key, std::span<int64_t> out) const {
  unpack_index(key, full_dims(), out);
}

void ModelLayout::unpack_visible(uint64_t key, std::span<int64_t> out) const {
  unpack_index(key, visible_dims_, out);
}

void ModelLayout::scatter_visible(uint64_t vkey, std::span<int64_t> cell) const {
  for (size_t t = 0; t < spec_.visible.size(); ++t) {
    uint64_t d = static_cast<uint64_t>(visible_dims_[t]);
    cell[spec_.visible[t]] = static_cast<int64_t>(vkey % d);
    vkey /= d;
  }
}

void ModelLayout::scatter_latent(uint64_t lkey, std::span<int64_t> cell) const {
  for (size_t t = 0; t < latent_.size(); ++t) {
    uint64_t d = static_cast<uint64_t>(latent_dims_[t]);
    cell[latent_[t]] = static_cast<int64_t>(lkey % d);
    lkey /= d;
  }
}

std::vector<int64_t> ModelLayout::full_dims() const {
  std::vector<int64_t> dims(spec_.size());
  for (int n = 0; n < spec_.size(); ++n) dims[n] = spec_.nodes[n].card;
  return dims;
}

FamilyStats::FamilyStats(std::shared_ptr<const ModelLayout> layout, bool track_cells)
    : layout_(std::move(layout)),
      family_(layout_->size()),
      parent_(layout_->size()),
      track_cells_(track_cells) {}

namespace {

void bump(CountMap& map, uint64_t key, int64_t delta) {
  auto it = map.try_emplace(key, 0).first;
  it->second += delta;
  if (it->second == 0) map.erase(it);
}

int64_t lookup(const CountMap& map, uint64_t key) {
  auto it = map.find(key);
  return it == map.end() ? 0 : it->second;
}

}  // namespace

void FamilyStats::add(std::span<const int64_t> cell, int64_t delta) {
  if (delta == 0) return;
  const ModelLayout& L = *layout_;
  const int N = L.size();
  if (delta < 0) {
    // Check first so a failed decrement leaves the stats untouched.
    for (int n = 0; n < N; ++n) {
      if (lookup(family_[n], L.family_key(n, cell)) + delta < 0) {
        throw Error(Error::Code::underflow, "decrement below zero in family counts");
      }
    }
  }
  for (int n = 0; n < N; ++n) {
    bump(family_[n], L.family_key(n, cell), delta);
    if (!L.spec().parents[n].empty()) bump(parent_[n], L.parent_key(n, cell), delta);
  }
  bump(visible_, L.visible_key(cell), delta);
  if (track_cells_) bump(cells_, L.cell_key(cell), delta);
  total_ += delta;
}

int64_t FamilyStats::parent_count(int n, uint64_t pkey) const {
  if (layout_->spec().parents[n].empty()) return total_;
  return lookup(parent_[n], pkey);
}

const CountMap& FamilyStats::cells() const {
  if (!track_cells_) {
    throw Error(Error::Code::bad_argument, "stats were built without cell tracking");
  }
  return cells_;
}

FamilyStats stats_from_tensor(std::shared_ptr<const ModelLayout> layout,
                              const SparseCountTensor& S, bool track_cells) {
  if (S.dims() != layout->full_dims()) {
    throw Error(Error::Code::bad_argument,
                "dim-mismatch: tensor dimensions do not match the model's cardinalities");
  }
  if (!S.mask().empty()) {
    throw Error(Error::Code::bad_argument, "dim-mismatch: latent tensors cannot carry a mask");
  }
  FamilyStats stats(layout, track_cells);
  std::vector<int64_t> cell(S.order());
  for (uint64_t key : S.sorted_entry_keys()) {
    S.unpack(key, cell);
    stats.add(cell, S.at_key(key));
  }
  return stats;
}

bool stats_consistent(const FamilyStats& stats) {
  const ModelLayout& L = stats.layout();
  const ModelSpec& m = L.spec();
  for (int n = 0; n < L.size(); ++n) {
    CountMap parent_sums;
    int64_t family_total = 0;
    for (const auto& [fkey, count] : stats.family(n)) {
      if (count < 0) return false;
      family_total += count;
      // Decode the family tuple and re-encode the parent part.
      uint64_t rest = fkey;
      uint64_t pkey = 0;
      uint64_t pstride = 1;
      for (int member : L.family(n)) {
        uint64_t card = static_cast<uint64_t>(m.nodes[member].card);
        uint64_t coord = rest % card;
        rest /= card;
        if (member != n) {
          pkey += coord * pstride;
          pstride *= card;
        }
      }
      parent_sums[pkey] += count;
    }
    if (family_total != stats.total()) return false;
    if (m.parents[n].empty()) {
      if (!(parent_sums.empty() ? stats.total() == 0 : parent_sums.at(0) == stats.total())) {
        return false;
      }
    } else {
      if (parent_sums.size() != stats.parent(n).size()) return false;
      for (const auto& [pkey, count] : parent_sums) {
        auto it = stats.parent(n).find(pkey);
        if (it == stats.parent(n).end() || it->second != count) return false;
      }
    }
  }
  int64_t visible_total = 0;
  for (const auto& [k, v] : stats.visible()) {
    if (v < 0) return false;
    visible_total += v;
  }
  if (visible_total != stats.total()) return false;
  if (stats.tracks_cells()) {
    int64_t cell_total = 0;
    for (const auto& [k, v] : stats.cells()) cell_total += v;
    if (cell_total != stats.total()) return false;
  }
  return true;
}

double log_factorial_term(const SparseCountTensor& S) {
  double sum = 0.0;
  for (uint64_t key : S.sorted_entry_keys()) sum += lgam(static_cast<double>(S.at_key(key)) + 1.0);
  return sum;
}

double log_factorial_term(const CountMap& cells) {
  double sum = 0.0;
  for (uint64_t key : sorted_keys(cells)) {
    sum += lgam(static_cast<double>(cells.at(key)) + 1.0);
  }
  return sum;
}

}  // namespace bam
