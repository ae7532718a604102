#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tnsketch/sketch.hpp"
#include "tnsketch/tensor.hpp"

namespace tnsketch {

// One vertex of a rooted tree network. Vertices are stored sorted by their
// external id; parent/children refer to positions in that array. A vertex may
// own at most one open (tensor) mode; open-mode owners, taken in increasing id
// order, own the tensor's modes 0, 1, 2, ... in that order.
//
// Factor mode order: (child edges in child order, parent edge if not root,
// open mode if present).
struct TreeVertex {
  int id = -1;
  int parent = -1;                // index into vertices, -1 at the root
  std::vector<int> children;      // indices into vertices, sorted by id
  index_t open_dim = 0;           // 0 when the vertex has no open mode
  Tensor factor;                  // undefined until solved
};

class TreeNetwork {
 public:
  TreeNetwork() = default;
  // vertices as (id, parent id or -1, open mode size or 0); exactly one root;
  // open-mode-free vertices of degree <= 2 are spliced out during validation.
  static TreeNetwork from_links(
      const std::vector<std::array<index_t, 3>>& links);
  static TreeNetwork from_json(const json& shape);
  json shape_json() const;

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  const TreeVertex& vertex(int v) const {
    return vertices_[static_cast<size_t>(v)];
  }
  int root() const { return root_; }
  bool is_leaf(int v) const {
    return vertices_[static_cast<size_t>(v)].children.empty();
  }
  int max_degree() const;        // tree edges incident to a vertex
  int open_mode_count() const;
  // tensor mode owned by vertex v, or -1; inverse lookup of mode -> vertex
  int mode_of(int v) const;
  int owner_of(int mode) const;
  std::vector<index_t> open_dims() const;  // in mode order
  // children-before-parent order with children visited in id order
  std::vector<int> postorder() const;
  bool has_factors() const;

  void set_factor(int v, Tensor f);

 private:
  void finalize();  // sort, link, splice, validate
  std::vector<TreeVertex> vertices_;
  int root_ = -1;
  friend TreeNetwork tree_load(const std::string& dir);
};

// Sketch of a solved subtree: m = s_v o (fused non-parent modes of the
// factor's child-sketched stand-in), an (s x t) matrix mapping the parent
// edge's rank coordinates into sketched subtree coordinates.
struct SubtreeSketch {
  int vertex = -1;
  Tensor m;      // (s x t)
  SketchOp s_v;  // the stage that produced it
};

// Least-squares factor solve for one vertex. a_v carries the already-sketched
// context: mode 0 is the fused above-the-vertex index (size 1 at the root),
// then one sketched mode per child in child order, then the vertex's open
// mode if has_open. child_sketches[i] is the (s_i x t_i) subtree sketch of
// child i; its pseudo-inverse maps the sketched mode back to rank
// coordinates. Returns (child t-modes in child order, above, open?).
Tensor solve_factor(const Tensor& a_v,
                    const std::vector<Tensor>& child_sketches, bool has_open);

struct TreeResult {
  TreeNetwork net;
  json ledger;  // per-vertex sketch sizes and edge ranks
};

// Leaf-to-root bicriteria decomposition of a against the given tree shape.
// Every output edge rank is bounded by the sign-sketch row count.
TreeResult tree_bicriteria(const SparseTensor& a, const TreeNetwork& shape,
                           const SketchParams& params, std::uint64_t seed);

// Full contraction of a solved network; result modes are ordered by owner id
// (i.e. the original tensor mode order). Guarded by dense_cap.
Tensor tree_contract(const TreeNetwork& net);
double tree_error(const TreeNetwork& net, const Tensor& a);
double tree_error(const TreeNetwork& net, const SparseTensor& a);

void tree_save(const TreeNetwork& net, const std::string& dir);
TreeNetwork tree_load(const std::string& dir);

}  // namespace tnsketch
