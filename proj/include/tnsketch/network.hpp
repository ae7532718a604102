#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tnsketch/sketch.hpp"
#include "tnsketch/tensor.hpp"
#include "tnsketch/tree.hpp"

namespace tnsketch {

// One declared edge of a general (possibly cyclic) network. Self-loops are
// traced out of the factors at ingest; parallel edges are kept as separate
// instances and fused only when their endpoints are contracted.
struct NetEdge {
  int u = -1;  // vertex indices (not external ids)
  int v = -1;
  index_t rank = 1;
};

struct NetVertex {
  int id = -1;
  index_t open_dim = 0;
  Tensor factor;  // normalized: (edge modes by edge index, open mode last)
};

// A connected undirected multigraph of tensor factors. Factor mode
// convention at set_factor: one mode per declared incident edge in edge
// declaration order (a self-loop contributes two consecutive modes), then the
// open mode last if the vertex has one. Open-mode owners in increasing id
// order own the contraction's modes 0, 1, 2, ...
class GeneralNetwork {
 public:
  // shape json: {"vertices": [{id, open_mode_size?}], "edges": [{u,v,rank}]}
  static GeneralNetwork from_json(const json& shape);
  json to_json() const;  // self-loops omitted (they are traced at ingest)

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  const NetVertex& vertex(int v) const {
    return vertices_[static_cast<size_t>(v)];
  }
  int index_of(int id) const;
  // surviving edge instances (self-loops removed)
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const NetEdge& edge(int e) const { return edges_[static_cast<size_t>(e)]; }
  // mode index of the vertex's factor carrying edge instance e
  const std::vector<int>& edge_modes(int v) const {
    return edge_modes_[static_cast<size_t>(v)];
  }

  int degree(int v) const;  // distinct neighbors (parallel edges fused)
  int max_degree() const;
  int open_mode_count() const;
  std::vector<index_t> open_dims() const;  // in owner id order
  index_t max_edge_rank() const;

  void set_factor(int id, const Tensor& f);
  bool has_factors() const;

 private:
  std::vector<NetVertex> vertices_;
  std::vector<NetEdge> edges_;
  // per vertex: declared edges in declaration order (self-loops twice)
  std::vector<std::vector<int>> declared_;
  std::vector<std::vector<index_t>> declared_rank_;
  std::vector<std::vector<int>> edge_modes_;
};

// An edge-contraction schedule. Steps name surviving external vertex ids;
// contracting (u, v) merges v into u (u keeps the smaller id) and consumes
// every parallel edge between them at once. degree_log records the maximum
// vertex degree (parallel edges counted once) after each step; t_deg is the
// maximum over the initial graph and the whole log.
struct ContractionPlan {
  std::vector<std::pair<int, int>> steps;
  std::vector<int> degree_log;
  int t_deg = 0;

  json to_json() const;
  static ContractionPlan from_json(const json& j);
};

// Greedy schedule: repeatedly contract the pair whose merged vertex has the
// fewest distinct neighbors, breaking ties toward lexicographically smaller
// id pairs.
ContractionPlan plan_contraction(const GeneralNetwork& g);

// Recompute the degree log of a given step order on g's shape; throws
// invalid_input if the steps do not contract g to a single vertex.
ContractionPlan replay_plan(const GeneralNetwork& g,
                            const std::vector<std::pair<int, int>>& steps);

// Full contraction of the network; result modes are the open modes in owner
// id order (a 1-element vector when the network is fully closed).
Tensor general_contract(const GeneralNetwork& g);
Tensor general_contract(const GeneralNetwork& g, const ContractionPlan& plan);

struct CompileResult {
  TreeNetwork tree;
  json ledger;  // per-step split ranks and normalization log
};

// Rewrites the network as a tree network with identical contraction. Each
// contraction step splits the endpoint factors with an exact zero-truncated
// SVD so that dangling subtrees carry the open modes; the spliced tree is
// normalized at the end (multi-open vertices split exactly, closed vertices
// of tree degree <= 2 absorbed into a neighbor).
CompileResult contract_to_tree(const GeneralNetwork& g,
                               const ContractionPlan& plan);

struct NetApproxResult {
  TreeNetwork net;
  ContractionPlan plan;
  json ledger;
};

// Plans a contraction order on the shape alone, derives the tree topology
// that contract_to_tree would produce, and decomposes a against it with
// target rank k^t_deg.
NetApproxResult approx_by_tree(const SparseTensor& a,
                               const GeneralNetwork& shape, index_t k,
                               const SketchParams& params, std::uint64_t seed);

}  // namespace tnsketch
