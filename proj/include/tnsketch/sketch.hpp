#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tnsketch/tensor.hpp"

namespace tnsketch {

using json = nlohmann::json;

class TensorTrain;  // defined in tt.hpp

struct SketchParams {
  double eps = 0.5;
  double delta = 0.1;
  int q = 3;        // number of modes / sequential sketching steps
  index_t k = 1;    // target rank
  double c_cs = 4.0;
  double c_sign = 4.0;
  double c_sv = 4.0;

  void validate() const;
  // copy with per-step error and failure budgets eps/q, delta/q
  SketchParams per_step() const;
  json to_json() const;
  static SketchParams from_json(const json& j);
};

// ceil(c_cs * d^2 / (eps^2 * delta)): affine-embedding row count for a
// d-dimensional subspace.
index_t rows_countsketch_affine(const SketchParams& p, index_t d);

// ceil(c_sign * q * k * log(q / delta) / eps): sign-sketch row count that
// preserves approximate regression solutions across q sequential solves.
index_t rows_sign_regression(const SketchParams& p);

// ceil(extra * c_sv * t^2 / (eps^2 * delta)): countsketch row count for the
// stages that re-compress a partially contracted suffix of rank at most t.
index_t rows_suffix_stage(const SketchParams& p, index_t t, double extra = 1.0);

enum class SketchKind { countsketch, sign, gaussian, composed, kron_identity };

// Which side of the Kronecker product the identity block sits on:
// identity_left is I_d (x) S, identity_right is S (x) I_d.
enum class KronSide { identity_left, identity_right };

// A randomized linear map held as a descriptor (kind, shape, seed); entries
// are generated on demand from a counter-based stream, never stored.
class SketchOp {
 public:
  static SketchOp countsketch(index_t rows, index_t cols, std::uint64_t seed);
  static SketchOp sign(index_t rows, index_t cols, std::uint64_t seed);
  static SketchOp gaussian_k(index_t rows, index_t cols, std::uint64_t seed);
  static SketchOp composed(std::vector<SketchOp> stages);
  static SketchOp identity(index_t n);  // empty composition with fixed shape
  static SketchOp kron_with_identity(SketchOp inner, index_t d, KronSide side);

  SketchKind kind() const { return kind_; }
  // -1 when the shape adapts to the input (an empty composition)
  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<SketchOp>& stages() const { return stages_; }
  const SketchOp& inner() const;
  index_t kron_d() const { return kron_d_; }
  KronSide kron_side() const { return kron_side_; }
  bool is_identity() const;
  // true when applying the op keeps a sparse input sparse
  bool preserves_sparsity() const;

  // countsketch column j: (destination row, sign)
  std::pair<index_t, double> countsketch_column(index_t j) const;
  double sign_entry(index_t i, index_t j) const;
  double gaussian_entry(index_t i, index_t j) const;

  Tensor dense_matrix() const;  // cap-guarded materialization
  json descriptor() const;
  static SketchOp from_descriptor(const json& j);

 private:
  SketchOp() = default;
  SketchKind kind_ = SketchKind::composed;
  index_t rows_ = -1;
  index_t cols_ = -1;
  std::uint64_t seed_ = 0;
  std::vector<SketchOp> stages_;
  std::shared_ptr<SketchOp> inner_;
  index_t kron_d_ = 0;
  KronSide kron_side_ = KronSide::identity_right;
};

// S * M for a 2-mode tensor M with M.dims[0] == S.cols.
Tensor apply_left(const SketchOp& s, const Tensor& m);
// Sparse variant; requires preserves_sparsity().
SparseTensor apply_left(const SketchOp& s, const SparseTensor& m);

// Replace mode `mode` (size S.cols) by the sketched mode (size S.rows),
// leaving its position unchanged.
Tensor apply_mode(const SketchOp& s, const Tensor& t, int mode);
SparseTensor apply_mode(const SketchOp& s, const SparseTensor& t, int mode);
// Densifying variant for sketch kinds that break sparsity (sign, gaussian).
Tensor apply_mode_dense(const SketchOp& s, const SparseTensor& t, int mode);

// Fuse the ordered mode group into one virtual mode (row-major in group
// order), sketch it, and place the result first (front=true) or last.
Tensor apply_group(const SketchOp& s, const Tensor& t, const ModeGroup& g,
                   bool front);
SparseTensor apply_group(const SketchOp& s, const SparseTensor& t,
                         const ModeGroup& g, bool front);

// Mode-by-mode composed sketch over a q-mode shape: stages[0] is s_1 x n_1,
// stages[i] is s_{i+1} x (s_i * n_{i+1}), consuming mode i+1 fused after the
// previous sketched output (sketched index major).
struct TTSketch {
  std::vector<index_t> dims;
  std::vector<SketchOp> stages;

  json descriptor() const;
  static TTSketch from_descriptor(const json& j);
};

// Countsketch stages sized rows_countsketch_affine(params, k), each clamped
// to its column count (a clamped stage is the exact identity).
TTSketch make_tt_sketch(const std::vector<index_t>& dims,
                        const SketchParams& params, std::uint64_t seed);

// Applies the staged sketch by the fuse-then-sketch recursion; the result is
// the final s_q-dimensional vector. Never materializes more than one stage.
Tensor tt_sketch_apply_dense(const TTSketch& L, const Tensor& a);
Tensor tt_sketch_apply_dense(const TTSketch& L, const SparseTensor& a);

// Applies the staged sketch to a tensor in train form core by core, in
// O(q * s * n * k * (s + k)) time, without materializing the full tensor.
Tensor tt_sketch_apply_tt(const TTSketch& L, const TensorTrain& x);

}  // namespace tnsketch
