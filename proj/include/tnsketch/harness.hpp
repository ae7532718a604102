#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnsketch/network.hpp"
#include "tnsketch/tensor.hpp"
#include "tnsketch/tree.hpp"
#include "tnsketch/tt.hpp"

namespace tnsketch {

// A generated problem instance: the (possibly noisy) tensor, the exact
// planted signal, and a manifest describing how both were built. The noise
// parameter of generate() is relative: the added Gaussian noise is rescaled
// to Frobenius norm exactly noise * |signal|_F, recorded as noise_abs.
struct Instance {
  SparseTensor tensor;
  Tensor signal;
  json manifest;
};

// kinds: "tt" (tensor train), "tree" (balanced binary tree network),
// "ring" (cycle network), "tucker" (all-modes Tucker core), "random".
// dims gives one entry per tensor mode; rank is the planted edge/core rank.
Instance generate(const std::string& kind, const std::vector<index_t>& dims,
                  index_t rank, double noise, std::uint64_t seed);

// Deterministic sequential truncated-SVD sweep; every train rank is at most
// k (exact zeros are dropped, so ranks can be smaller). Serves as the
// comparison oracle for the sketched decompositions.
TensorTrain tt_svd_oracle(const Tensor& a, index_t k);

// Balanced binary tree over the given open mode sizes: leaves own the modes
// in order, internal vertices are closed.
TreeNetwork balanced_tree_shape(const std::vector<index_t>& dims);

// Cycle network shape: vertex i owns mode i, edges (i, i+1 mod q) of the
// given rank.
json ring_shape_json(const std::vector<index_t>& dims, index_t rank);

// The factored cycle network behind generate("ring", ...): same seed, same
// factors, so its contraction equals the generated noiseless signal.
GeneralNetwork planted_ring(const std::vector<index_t>& dims, index_t rank,
                            std::uint64_t seed);

// Directory layout: manifest.json with the (self-loop-free) shape plus one
// text tensor per factor. Factors are stored in the normalized mode order
// (edge instances ascending, open mode last), which is exactly the declared
// order of the saved shape, so save/load round-trips.
void net_save(const GeneralNetwork& g, const std::string& dir);
GeneralNetwork net_load(const std::string& dir);

// The JSON payload every CLI command prints to stdout.
struct RunReport {
  std::string command;
  json params;
  json results;

  json to_json() const {
    return json{{"command", command}, {"params", params}, {"results", results}};
  }
};

}  // namespace tnsketch
