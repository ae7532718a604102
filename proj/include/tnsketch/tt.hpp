#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnsketch/sketch.hpp"
#include "tnsketch/tensor.hpp"

namespace tnsketch {

// Tensor-train decomposition with q >= 2 cores:
//   cores[0]   : (n_1, r_1)
//   cores[i]   : (r_i, n_{i+1}, r_{i+1})     for 0 < i < q-1
//   cores[q-1] : (r_{q-1}, n_q)
// The represented tensor is the chain contraction of the cores.
class TensorTrain {
 public:
  TensorTrain() = default;
  explicit TensorTrain(std::vector<Tensor> cores);

  int order() const { return static_cast<int>(cores_.size()); }
  const std::vector<Tensor>& cores() const { return cores_; }
  std::vector<index_t> dims() const;
  std::vector<index_t> ranks() const;  // r_1 .. r_{q-1}

 private:
  std::vector<Tensor> cores_;
};

// Full dense contraction of the chain; guarded by dense_cap.
Tensor tt_materialize(const TensorTrain& x);

// Frobenius distance between the materialized train and a reference tensor.
double tt_error(const TensorTrain& x, const Tensor& a);
double tt_error(const TensorTrain& x, const SparseTensor& a);

// Directory layout: manifest.json plus one text tensor file per core.
void tt_save(const TensorTrain& x, const std::string& dir);
TensorTrain tt_load(const std::string& dir);

// One recursion step of the chain embedding of a partially contracted train:
// given W (s x r) embedding the chain so far and a 3-mode core (r, n, r'),
// returns stage * fuse(W o core), an (s' x r') matrix. The fused index is
// sketch-major: (s, n) -> s*n_count... fused as s*n + j.
Tensor extend_embedding(const SketchOp& stage, const Tensor& w,
                        const Tensor& core);

struct TTResult {
  TensorTrain train;
  json ledger;  // per-step sketch sizes and resulting ranks
};

// Streaming bicriteria tensor-train approximation. Sweeps right to left,
// compressing the suffix with countsketch stages and solving each core from a
// sketched regression. Output ranks are bounded by the sign-sketch row count
// recorded in the ledger.
TTResult tt_bicriteria(const SparseTensor& a, const SketchParams& params,
                       std::uint64_t seed);
TTResult tt_bicriteria(const Tensor& a, const SketchParams& params,
                       std::uint64_t seed);

}  // namespace tnsketch
