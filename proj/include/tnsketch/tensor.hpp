#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnsketch/errors.hpp"

namespace tnsketch {

using index_t = std::int64_t;

// Process-wide ceiling on dense tensor entries. Initialized from the
// TNSKETCH_DENSE_CAP environment variable when set, otherwise 10^8.
index_t dense_cap();
void set_dense_cap(index_t cap);

// Ordered list of modes selecting the row block of a grouped matricization.
// The order given here is the row-major order of the fused row index.
struct ModeGroup {
  std::vector<int> modes;
};

// Product of dims with overflow checking; throws invalid_input on overflow.
index_t volume_of(const std::vector<index_t>& dims);

index_t flat_index(const std::vector<index_t>& dims,
                   const std::vector<index_t>& idx);
std::vector<index_t> unflatten_index(const std::vector<index_t>& dims,
                                     index_t flat);

// Dense tensor with row-major storage. Immutable after construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<index_t> dims, std::vector<double> data);
  static Tensor zeros(std::vector<index_t> dims);
  static Tensor scalar(double v);  // 1-mode, size-1

  int order() const { return static_cast<int>(dims_.size()); }
  const std::vector<index_t>& dims() const { return dims_; }
  index_t size() const { return static_cast<index_t>(data_.size()); }
  const std::vector<double>& data() const { return data_; }
  double value_at(index_t flat) const { return data_[static_cast<size_t>(flat)]; }
  double at(const std::vector<index_t>& idx) const;
  bool defined() const { return !dims_.empty(); }

 private:
  std::vector<index_t> dims_;
  std::vector<double> data_;
};

// Sparse tensor in coordinate form, stored as sorted row-major flat indices.
// Construction canonicalizes: duplicate coordinates are summed, exact zeros
// dropped. Immutable after construction.
class SparseTensor {
 public:
  SparseTensor() = default;
  SparseTensor(std::vector<index_t> dims, std::vector<index_t> flat_coords,
               std::vector<double> values);
  static SparseTensor from_entries(std::vector<index_t> dims,
                                   const std::vector<std::vector<index_t>>& coords,
                                   const std::vector<double>& values);

  int order() const { return static_cast<int>(dims_.size()); }
  const std::vector<index_t>& dims() const { return dims_; }
  index_t volume() const { return volume_; }
  index_t nnz() const { return static_cast<index_t>(values_.size()); }
  const std::vector<index_t>& flat_coords() const { return flat_coords_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<index_t> coord(index_t entry) const;
  bool defined() const { return !dims_.empty(); }

 private:
  std::vector<index_t> dims_;
  std::vector<index_t> flat_coords_;
  std::vector<double> values_;
  index_t volume_ = 0;
};

// a (x) b: dims are the concatenation, entry = a[i] * b[j].
Tensor outer_product(const Tensor& a, const Tensor& b);

// Sum over the shared index of mode_a of a and mode_b of b. Result modes are
// a's remaining modes (original order) followed by b's. A scalar result is
// returned as a 1-mode, size-1 tensor.
Tensor contract(const Tensor& a, int mode_a, const Tensor& b, int mode_b);

// a o b: contract a's last mode with b's first mode.
Tensor contract(const Tensor& a, const Tensor& b);

// Mode-t matricization: 2-mode tensor of shape (dims[t], volume / dims[t]);
// row j is the row-major vectorization of the slice with mode-t index j.
Tensor matricize(const Tensor& a, int t);

// Grouped matricization: rows indexed row-major over `rows` in the given
// order, columns over the remaining modes in their original order.
Tensor matricize_group(const Tensor& a, const ModeGroup& rows);

// Kronecker product of two matrices (2-mode tensors):
// entry ((i,j),(k,l)) = a(i,k) * b(j,l).
Tensor kronecker(const Tensor& a, const Tensor& b);

// Merge the first two modes into one of size dims[0]*dims[1]. Metadata-only
// on row-major storage.
Tensor fuse_first_two(const Tensor& a);
SparseTensor fuse_first_two(const SparseTensor& a);

double frobenius_norm(const Tensor& a);
double frobenius_norm(const SparseTensor& a);

Tensor densify(const SparseTensor& s);  // guarded by dense_cap
SparseTensor sparsify(const Tensor& a, double tol);

// Rearranged copy: new mode i is old mode perm[i].
Tensor permute_modes(const Tensor& a, const std::vector<int>& perm);

// Same data, new dims; volume must match (row-major reinterpretation).
Tensor reshape(const Tensor& a, std::vector<index_t> dims);
SparseTensor reshape(const SparseTensor& a, std::vector<index_t> dims);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace tnsketch
