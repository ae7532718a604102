#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tnsketch/linalg.hpp"
#include "tnsketch/sketch.hpp"
#include "tnsketch/tensor.hpp"

namespace tnsketch {

// Parameters of the exact-rank Tucker search. The first p factors are
// restricted to k columns, the remaining q - p modes are left untouched.
// trials is the number of Gaussian guesses drawn per mode; all trials^p
// tuples are evaluated (lazily, with early exit on a numerically zero cost).
struct FptParams {
  int p = 3;
  int q = 3;
  index_t k = 1;
  double eps = 0.5;
  double delta = 0.1;
  int trials = 200;
  std::uint64_t seed = 0;
  std::string eval_mode = "exact";     // "exact" | "pcp"
  index_t enum_cap = 10'000'000;       // max candidate tuples trials^p
  double c_cs = 4.0;
  double c_sign = 4.0;

  void validate() const;
  json to_json() const;
  static FptParams from_json(const json& j);
};

// One evaluated factor tuple: exactly k columns per factor, the trial
// indices that produced it, and its estimated squared residual.
struct TuckerCandidate {
  std::vector<Matrix> factors;  // p matrices, dims[m] x k
  std::vector<int> tuple;       // chosen trial index per mode
  double cost = 0.0;            // estimated squared residual, >= 0
  json manifest;
};

// One draw of the exactly-k-row Gaussian sketched regression
// argmin_X |R A X - R B| with R a k x n N(0, 1/k) matrix. Success
// probability is tiny by design; a numerically singular RA returns nullopt
// (retry with another seed) rather than an error.
std::optional<Matrix> gaussian_exact_k_regress(const Matrix& a,
                                               const Matrix& b,
                                               std::uint64_t seed);

// Kronecker variant: argmin_X |(I (x) R)(A1 (x) A2) X - (I (x) R) B| with R
// a k x n N(0, 1/k) matrix drawn exactly as in gaussian_exact_k_regress
// (so the m=1, scalar-A1 case coincides with it). B has A1.rows * A2.rows
// rows. Returns nullopt when the sketched system is singular.
std::optional<Matrix> kron_gaussian_regress(const Matrix& a1, const Matrix& a2,
                                            const Matrix& b,
                                            std::uint64_t seed);

// Squared residual min_G |(U^1 x ... x U^p x I x ... x I) vec(G) - vec(T)|^2
// for the given target tensor, computed exactly as |T|^2 minus the squared
// norm of T projected onto the per-mode column spans (factors are
// orthonormalized internally; a zero factor contributes the zero span).
double evaluate_candidate(const std::vector<Matrix>& factors,
                          const Tensor& target);

// Guess-and-verify search: per mode m < p, compress the mode-m
// matricization once with a countsketch and a sign sketch, draw `trials`
// exactly-k-row Gaussian guesses from it, and return the tuple minimizing
// the evaluated cost (exact on the dense tensor, or on a countsketch
// proxy of the trailing modes in "pcp" mode). Deterministic in params.seed;
// ties break toward the lexicographically first tuple.
TuckerCandidate fpt_tucker(const SparseTensor& a, const FptParams& params);

// Fraction of `draws` k x n N(0, 1/k) matrices R whose products RU with a
// fixed orthonormal U keep every singular value inside [2/3, 4/3]; used to
// calibrate the exactly-k-row embedding success rate.
double exact_k_embedding_rate(index_t k, index_t n, int draws,
                              std::uint64_t seed);

}  // namespace tnsketch
