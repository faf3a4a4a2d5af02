#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bam/model.hpp"
#include "bam/util.hpp"

namespace bam {

// Sparse maps are keyed by mixed-radix packed index tuples (first index
// fastest). Values are counts; zeros are never stored.
using CountMap = std::unordered_map<uint64_t, int64_t>;

// Strides for packing tuples over `dims`; throws when ∏dims overflows uint64.
std::vector<uint64_t> packing_strides(const std::vector<int64_t>& dims);

uint64_t pack_index(std::span<const int64_t> tuple, std::span<const uint64_t> strides);
void unpack_index(uint64_t key, const std::vector<int64_t>& dims, std::span<int64_t> out);

std::vector<uint64_t> sorted_keys(const CountMap& map);

// Nonnegative integer tensor stored as {index-tuple → count}. The mask flags
// cells whose value is unobserved — distinct from an observed zero.
class SparseCountTensor {
 public:
  SparseCountTensor() = default;
  explicit SparseCountTensor(std::vector<int64_t> dims);

  const std::vector<int64_t>& dims() const { return dims_; }
  int order() const { return static_cast<int>(dims_.size()); }
  const CountMap& entries() const { return entries_; }
  const std::vector<uint64_t>& mask() const { return mask_; }  // sorted keys

  uint64_t pack(std::span<const int64_t> tuple) const;
  void unpack(uint64_t key, std::span<int64_t> out) const;

  int64_t at(std::span<const int64_t> tuple) const;
  int64_t at_key(uint64_t key) const;
  void set(std::span<const int64_t> tuple, int64_t count);
  void add(std::span<const int64_t> tuple, int64_t delta);
  void mark_missing(std::span<const int64_t> tuple);
  bool is_missing_key(uint64_t key) const;

  int64_t total() const;                    // Σ counts
  std::vector<uint64_t> sorted_entry_keys() const;

 private:
  void check_tuple(std::span<const int64_t> tuple) const;

  std::vector<int64_t> dims_;
  std::vector<uint64_t> strides_;
  CountMap entries_;
  std::vector<uint64_t> mask_;
};

// Sums out every axis not listed in `keep` (given as axis positions, in the
// order the result's axes should take). Masked cells do not propagate.
SparseCountTensor contract(const SparseCountTensor& t, const std::vector<int>& keep);

// Text format (UTF-8, `#` starts a comment): first significant line
// `dims I1 ... IN`, then `i1 ... iN count` entries (0-based, count > 0) and
// optional `missing i1 ... iN` lines. Duplicate tuples are an error.
SparseCountTensor read_tensor(std::istream& in, const std::string& origin = "<stream>");
SparseCountTensor read_tensor_file(const std::string& path);
void write_tensor(const SparseCountTensor& t, std::ostream& out);
void write_tensor_file(const SparseCountTensor& t, const std::string& path);

// Precomputed indexing machinery for one validated model: topological order,
// per-node family/parent packing relative to full-cell tuples, and the
// visible/latent split. Shared immutably by stats, samplers, and scorers.
class ModelLayout {
 public:
  static std::shared_ptr<const ModelLayout> create(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  int size() const { return spec_.size(); }
  const std::vector<int>& topo() const { return topo_; }

  const std::vector<int>& family(int n) const { return family_[n]; }  // ascending, includes n
  double family_cells(int n) const { return family_cells_[n]; }
  double parent_cells(int n) const { return parent_cells_[n]; }

  const std::vector<int64_t>& visible_dims() const { return visible_dims_; }
  const std::vector<int>& latent() const { return latent_; }          // ascending
  const std::vector<int64_t>& latent_dims() const { return latent_dims_; }
  int64_t latent_cells() const { return latent_cells_; }              // saturates at INT64_MAX

  uint64_t family_key(int n, std::span<const int64_t> cell) const;
  uint64_t parent_key(int n, std::span<const int64_t> cell) const;
  uint64_t visible_key(std::span<const int64_t> cell) const;
  uint64_t cell_key(std::span<const int64_t> cell) const;
  void unpack_cell(uint64_t key, std::span<int64_t> out) const;
  void unpack_visible(uint64_t key, std::span<int64_t> out) const;

  // Writes the visible coordinates of `vkey` into the matching positions of
  // `cell` (other positions untouched).
  void scatter_visible(uint64_t vkey, std::span<int64_t> cell) const;
  void scatter_latent(uint64_t lkey, std::span<int64_t> cell) const;

  std::vector<int64_t> full_dims() const;

 private:
  ModelSpec spec_;
  std::vector<int> topo_;
  std::vector<std::vector<int>> family_;
  std::vector<std::vector<uint64_t>> family_strides_;   // aligned with family_[n]
  std::vector<std::vector<uint64_t>> parent_strides_;   // aligned with spec.parents[n]
  std::vector<double> family_cells_;
  std::vector<double> parent_cells_;
  std::vector<int64_t> visible_dims_;
  std::vector<uint64_t> visible_strides_;
  std::vector<int> latent_;
  std::vector<int64_t> latent_dims_;
  int64_t latent_cells_ = 1;
  std::vector<uint64_t> cell_strides_;
};

// The urn state: per-node family and parent-configuration counts, the visible
// contraction, the grand total, and (optionally) the full cell map. Owned by
// one writer at a time; cheap to copy for particle resampling.
class FamilyStats {
 public:
  explicit FamilyStats(std::shared_ptr<const ModelLayout> layout, bool track_cells = false);

  const ModelLayout& layout() const { return *layout_; }
  std::shared_ptr<const ModelLayout> layout_ptr() const { return layout_; }

  // Adds `delta` tokens at the full cell; updates every family, parent,
  // visible, and total count. Throws underflow when any count would go
  // negative.
  void add(std::span<const int64_t> cell, int64_t delta);
  void increment(std::span<const int64_t> cell) { add(cell, 1); }
  void decrement(std::span<const int64_t> cell) { add(cell, -1); }

  const CountMap& family(int n) const { return family_[n]; }
  // Root nodes have the empty parent configuration; their count is total().
  int64_t parent_count(int n, uint64_t pkey) const;
  const CountMap& parent(int n) const { return parent_[n]; }
  const CountMap& visible() const { return visible_; }
  const CountMap& cells() const;  // throws unless track_cells
  bool tracks_cells() const { return track_cells_; }
  int64_t total() const { return total_; }

 private:
  std::shared_ptr<const ModelLayout> layout_;
  std::vector<CountMap> family_;
  std::vector<CountMap> parent_;
  CountMap visible_;
  CountMap cells_;
  int64_t total_ = 0;
  bool track_cells_ = false;
};

// Builds stats from a full latent tensor S (dims must equal the node
// cardinalities in node order; S must be unmasked).
FamilyStats stats_from_tensor(std::shared_ptr<const ModelLayout> layout,
                              const SparseCountTensor& S, bool track_cells = false);

// Checks every FamilyStats invariant (family sums vs parent configurations,
// per-family totals, visible total).
bool stats_consistent(const FamilyStats& stats);

// Σ_i log S(i)! over stored cells.
double log_factorial_term(const SparseCountTensor& S);
double log_factorial_term(const CountMap& cells);

}  // namespace bam
