#include "tnsketch/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tnsketch/errors.hpp"
#include "tnsketch/linalg.hpp"

namespace tnsketch {

namespace {

// sum over the diagonal of two equal-sized modes
Tensor trace_modes(const Tensor& t, int i, int j) {
  if (i > j) std::swap(i, j);
  require(i != j, "cannot trace a mode against itself");
  const std::vector<index_t>& dims = t.dims();
  index_t d = dims[static_cast<size_t>(i)];
  require(d == dims[static_cast<size_t>(j)],
          "traced modes must have equal size");
  std::vector<index_t> rdims;
  for (size_t m = 0; m < dims.size(); ++m)
    if (static_cast<int>(m) != i && static_cast<int>(m) != j)
      rdims.push_back(dims[m]);
  if (rdims.empty()) {
    double acc = 0.0;
    std::vector<index_t> coord(dims.size(), 0);
    for (index_t c = 0; c < d; ++c) {
      coord[static_cast<size_t>(i)] = c;
      coord[static_cast<size_t>(j)] = c;
      acc += t.at(coord);
    }
    return Tensor({1}, {acc});
  }
  index_t vol = volume_of(rdims);
  std::vector<double> out(static_cast<size_t>(vol), 0.0);
  std::vector<index_t> coord(dims.size());
  for (index_t r = 0; r < vol; ++r) {
    std::vector<index_t> rc = unflatten_index(rdims, r);
    size_t at = 0;
    for (size_t m = 0; m < dims.size(); ++m)
      if (static_cast<int>(m) != i && static_cast<int>(m) != j)
        coord[m] = rc[at++];
    double acc = 0.0;
    for (index_t c = 0; c < d; ++c) {
      coord[static_cast<size_t>(i)] = c;
      coord[static_cast<size_t>(j)] = c;
      acc += t.value_at(flat_index(dims, coord));
    }
    out[static_cast<size_t>(r)] = acc;
  }
  return Tensor(rdims, std::move(out));
}

struct SplitParts {
  Tensor keep;  // (kept modes..., r)
  Tensor away;  // (r, other modes...)
  index_t rank = 0;
};

// exact rank factorization separating `keep_modes` from the rest; only
// singular values at relative level <= 1e-12 are truncated
SplitParts split_factor(const Tensor& f, const std::vector<int>& keep_modes) {
  Tensor m2 = matricize_group(f, ModeGroup{keep_modes});
  Matrix m = to_matrix(m2);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cutoff = sv.size() > 0 ? sv(0) * 1e-12 : 0.0;
  index_t r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  if (r == 0) r = 1;  // keep a zero edge of width one for an all-zero factor
  Matrix p = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
  Matrix q = svd.matrixV().leftCols(r).transpose();

  const std::vector<index_t>& dims = f.dims();
  std::vector<index_t> keep_dims;
  for (int km : keep_modes) keep_dims.push_back(dims[static_cast<size_t>(km)]);
  keep_dims.push_back(r);
  std::vector<index_t> away_dims{r};
  for (size_t mm = 0; mm < dims.size(); ++mm)
    if (std::find(keep_modes.begin(), keep_modes.end(), static_cast<int>(mm)) ==
        keep_modes.end())
      away_dims.push_back(dims[mm]);
  SplitParts out;
  out.keep = reshape(from_matrix(p), keep_dims);
  out.away = reshape(from_matrix(q), away_dims);
  out.rank = r;
  return out;
}

enum MetaKind { meta_graph = 0, meta_child = 1, meta_open = 2, meta_up = 3 };

struct Meta {
  int kind;
  int ref;  // edge instance / node index / open owner id, per kind
};

struct LiveVertex {
  int id = -1;
  bool alive = true;
  Tensor f;
  std::vector<Meta> metas;
};

struct TreeNode {
  bool alive = true;
  Tensor f;
  std::vector<Meta> metas;
  int assigned_id = -1;
};

int meta_index(const std::vector<Meta>& metas, int kind, int ref) {
  for (size_t i = 0; i < metas.size(); ++i)
    if (metas[i].kind == kind && metas[i].ref == ref)
      return static_cast<int>(i);
  throw invalid_input("internal network bookkeeping error: mode not found");
}

int up_index(const std::vector<Meta>& metas) {
  for (size_t i = 0; i < metas.size(); ++i)
    if (metas[i].kind == meta_up) return static_cast<int>(i);
  throw invalid_input("internal network bookkeeping error: no parent edge");
}

// shared multigraph replay used by planning, contraction and compilation
struct GraphState {
  std::vector<int> ids;          // external id per slot, -1 when dead
  std::vector<std::pair<int, int>> ends;  // live slots per edge, (-1,-1) dead

  explicit GraphState(const GeneralNetwork& g) {
    for (int v = 0; v < g.vertex_count(); ++v) ids.push_back(g.vertex(v).id);
    for (int e = 0; e < g.edge_count(); ++e)
      ends.push_back({g.edge(e).u, g.edge(e).v});
  }
  int slot_of(int id) const {
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return static_cast<int>(i);
    throw invalid_input("contraction step names an unknown or dead vertex: " +
                        std::to_string(id));
  }
  std::set<int> neighbors(int slot) const {
    std::set<int> out;
    for (const auto& [a, b] : ends) {
      if (a == slot && b != slot) out.insert(b);
      if (b == slot && a != slot) out.insert(a);
    }
    return out;
  }
  int degree(int slot) const { return static_cast<int>(neighbors(slot).size()); }
  int max_degree() const {
    int d = 0;
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != -1) d = std::max(d, degree(static_cast<int>(i)));
    return d;
  }
  int live_count() const {
    int n = 0;
    for (int id : ids) n += id != -1;
    return n;
  }
  // all edge instances between the two slots, ascending
  std::vector<int> bundle(int a, int b) const {
    std::vector<int> out;
    for (size_t e = 0; e < ends.size(); ++e)
      if ((ends[e].first == a && ends[e].second == b) ||
          (ends[e].first == b && ends[e].second == a))
        out.push_back(static_cast<int>(e));
    return out;
  }
  // merge b into a (a keeps its id); consumes the connecting bundle
  void contract_pair(int a, int b) {
    for (auto& [x, y] : ends) {
      if ((x == a && y == b) || (x == b && y == a)) {
        x = -1;
        y = -1;
        continue;
      }
      if (x == b) x = a;
      if (y == b) y = a;
    }
    ids[static_cast<size_t>(b)] = -1;
  }
};

}  // namespace

GeneralNetwork GeneralNetwork::from_json(const json& shape) {
  GeneralNetwork g;
  require(shape.contains("vertices"), "network shape needs a vertices array");
  for (const auto& v : shape.at("vertices")) {
    NetVertex nv;
    nv.id = v.at("id").get<int>();
    nv.open_dim = v.value("open_mode_size", index_t{0});
    require(nv.open_dim >= 0, "open mode size cannot be negative");
    g.vertices_.push_back(std::move(nv));
  }
  require(!g.vertices_.empty(), "network shape has no vertices");
  std::sort(g.vertices_.begin(), g.vertices_.end(),
            [](const NetVertex& a, const NetVertex& b) { return a.id < b.id; });
  for (size_t i = 1; i < g.vertices_.size(); ++i)
    require(g.vertices_[i].id != g.vertices_[i - 1].id,
            "duplicate vertex id in network shape");
  g.declared_.resize(g.vertices_.size());
  g.declared_rank_.resize(g.vertices_.size());
  g.edge_modes_.resize(g.vertices_.size());

  if (shape.contains("edges")) {
    for (const auto& e : shape.at("edges")) {
      int u = g.index_of(e.at("u").get<int>());
      int v = g.index_of(e.at("v").get<int>());
      index_t rank = e.at("rank").get<index_t>();
      require(rank >= 1, "edge rank must be at least 1");
      if (u == v) {
        // self-loop: two factor modes, traced away at set_factor
        g.declared_[static_cast<size_t>(u)].push_back(-1);
        g.declared_[static_cast<size_t>(u)].push_back(-1);
        g.declared_rank_[static_cast<size_t>(u)].push_back(rank);
        g.declared_rank_[static_cast<size_t>(u)].push_back(rank);
        continue;
      }
      int inst = static_cast<int>(g.edges_.size());
      g.edges_.push_back(NetEdge{std::min(u, v), std::max(u, v), rank});
      g.declared_[static_cast<size_t>(u)].push_back(inst);
      g.declared_rank_[static_cast<size_t>(u)].push_back(rank);
      g.declared_[static_cast<size_t>(v)].push_back(inst);
      g.declared_rank_[static_cast<size_t>(v)].push_back(rank);
    }
  }

  // connectivity over the surviving instances
  std::vector<bool> seen(g.vertices_.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (const NetEdge& e : g.edges_) {
      int other = e.u == v ? e.v : e.v == v ? e.u : -1;
      if (other != -1 && !seen[static_cast<size_t>(other)]) {
        seen[static_cast<size_t>(other)] = true;
        stack.push_back(other);
      }
    }
  }
  for (bool s : seen) require(s, "network shape is not connected");
  return g;
}

json GeneralNetwork::to_json() const {
  json verts = json::array();
  for (const NetVertex& v : vertices_) {
    json e;
    e["id"] = v.id;
    if (v.open_dim > 0) e["open_mode_size"] = v.open_dim;
    verts.push_back(e);
  }
  json edges = json::array();
  for (const NetEdge& e : edges_)
    edges.push_back(json{{"u", vertices_[static_cast<size_t>(e.u)].id},
                         {"v", vertices_[static_cast<size_t>(e.v)].id},
                         {"rank", e.rank}});
  return json{{"vertices", verts}, {"edges", edges}};
}

int GeneralNetwork::index_of(int id) const {
  for (size_t i = 0; i < vertices_.size(); ++i)
    if (vertices_[i].id == id) return static_cast<int>(i);
  throw invalid_input("network shape references unknown vertex id " +
                      std::to_string(id));
}

int GeneralNetwork::degree(int v) const {
  std::set<int> n;
  for (const NetEdge& e : edges_) {
    if (e.u == v) n.insert(e.v);
    if (e.v == v) n.insert(e.u);
  }
  return static_cast<int>(n.size());
}

int GeneralNetwork::max_degree() const {
  int d = 0;
  for (int v = 0; v < vertex_count(); ++v) d = std::max(d, degree(v));
  return d;
}

int GeneralNetwork::open_mode_count() const {
  int n = 0;
  for (const NetVertex& v : vertices_) n += v.open_dim > 0 ? 1 : 0;
  return n;
}

std::vector<index_t> GeneralNetwork::open_dims() const {
  std::vector<index_t> out;
  for (const NetVertex& v : vertices_)
    if (v.open_dim > 0) out.push_back(v.open_dim);
  return out;
}

index_t GeneralNetwork::max_edge_rank() const {
  index_t r = 1;
  for (const NetEdge& e : edges_) r = std::max(r, e.rank);
  return r;
}

void GeneralNetwork::set_factor(int id, const Tensor& f) {
  int v = index_of(id);
  NetVertex& vx = vertices_[static_cast<size_t>(v)];
  const std::vector<int>& decl = declared_[static_cast<size_t>(v)];
  const std::vector<index_t>& decl_rank = declared_rank_[static_cast<size_t>(v)];
  int expected = static_cast<int>(decl.size()) + (vx.open_dim > 0 ? 1 : 0);
  require(f.order() == expected,
          "factor mode count does not match the vertex's declared edges");
  for (size_t m = 0; m < decl.size(); ++m)
    require(f.dims()[m] == decl_rank[m],
            "factor mode size does not match the declared edge rank");
  if (vx.open_dim > 0)
    require(f.dims().back() == vx.open_dim,
            "factor open mode does not match the vertex open mode size");

  // trace self-loop mode pairs (tagged -1), then record the instance layout
  Tensor cur = f;
  std::vector<int> tags = decl;
  if (vx.open_dim > 0) tags.push_back(-2);
  for (size_t m = 0; m < tags.size(); ++m) {
    if (tags[m] != -1) continue;
    size_t other = m + 1;
    while (other < tags.size() && tags[other] != -1) ++other;
    require(other < tags.size(), "unmatched self-loop mode");
    cur = trace_modes(cur, static_cast<int>(m), static_cast<int>(other));
    tags.erase(tags.begin() + static_cast<std::ptrdiff_t>(other));
    tags.erase(tags.begin() + static_cast<std::ptrdiff_t>(m));
    if (tags.empty() && cur.order() == 1) {
      // fully traced closed vertex: keep the scalar as a 1-entry mode-less
      // stand-in by treating the single dummy mode as absent downstream
      break;
    }
    --m;
  }
  std::vector<int>& modes = edge_modes_[static_cast<size_t>(v)];
  modes.clear();
  for (int t : tags)
    if (t >= 0) modes.push_back(t);
  vx.factor = cur;
}

bool GeneralNetwork::has_factors() const {
  for (const NetVertex& v : vertices_)
    if (!v.factor.defined()) return false;
  return true;
}

json ContractionPlan::to_json() const {
  json s = json::array();
  for (const auto& [u, v] : steps) s.push_back(json::array({u, v}));
  return json{{"steps", s}, {"degree_log", degree_log}, {"t_deg", t_deg}};
}

ContractionPlan ContractionPlan::from_json(const json& j) {
  ContractionPlan p;
  for (const auto& s : j.at("steps"))
    p.steps.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  p.degree_log = j.at("degree_log").get<std::vector<int>>();
  p.t_deg = j.at("t_deg").get<int>();
  return p;
}

ContractionPlan plan_contraction(const GeneralNetwork& g) {
  GraphState st(g);
  ContractionPlan plan;
  plan.t_deg = st.max_degree();
  while (st.live_count() > 1) {
    // candidate pairs with at least one connecting edge
    int best_deg = -1;
    std::pair<int, int> best_ids{-1, -1};
    std::pair<int, int> best_slots{-1, -1};
    for (size_t e = 0; e < st.ends.size(); ++e) {
      auto [a, b] = st.ends[static_cast<size_t>(e)];
      if (a == -1) continue;
      std::set<int> merged = st.neighbors(a);
      for (int nb : st.neighbors(b)) merged.insert(nb);
      merged.erase(a);
      merged.erase(b);
      int deg = static_cast<int>(merged.size());
      int lo = std::min(st.ids[static_cast<size_t>(a)],
                        st.ids[static_cast<size_t>(b)]);
      int hi = std::max(st.ids[static_cast<size_t>(a)],
                        st.ids[static_cast<size_t>(b)]);
      if (best_deg == -1 || deg < best_deg ||
          (deg == best_deg && std::pair(lo, hi) < best_ids)) {
        best_deg = deg;
        best_ids = {lo, hi};
        best_slots = {a, b};
      }
    }
    require(best_deg != -1, "network shape is not connected");
    auto [a, b] = best_slots;
    if (st.ids[static_cast<size_t>(a)] > st.ids[static_cast<size_t>(b)])
      std::swap(a, b);
    plan.steps.push_back(best_ids);
    st.contract_pair(a, b);
    int d = st.max_degree();
    plan.degree_log.push_back(d);
    plan.t_deg = std::max(plan.t_deg, d);
  }
  return plan;
}

ContractionPlan replay_plan(const GeneralNetwork& g,
                            const std::vector<std::pair<int, int>>& steps) {
  GraphState st(g);
  ContractionPlan plan;
  plan.steps = steps;
  plan.t_deg = st.max_degree();
  for (const auto& [uid, vid] : steps) {
    int a = st.slot_of(uid);
    int b = st.slot_of(vid);
    require(a != b, "contraction step joins a vertex with itself");
    require(!st.bundle(a, b).empty(),
            "contraction step joins vertices with no connecting edge");
    if (st.ids[static_cast<size_t>(a)] > st.ids[static_cast<size_t>(b)])
      std::swap(a, b);
    st.contract_pair(a, b);
    int d = st.max_degree();
    plan.degree_log.push_back(d);
    plan.t_deg = std::max(plan.t_deg, d);
  }
  require(st.live_count() == 1,
          "contraction plan does not reduce the network to a single vertex");
  return plan;
}

namespace {

// initial numeric state: factors with per-mode metadata
std::vector<LiveVertex> initial_live(const GeneralNetwork& g) {
  require(g.has_factors(), "network factors missing; set or load them first");
  std::vector<LiveVertex> live(static_cast<size_t>(g.vertex_count()));
  for (int v = 0; v < g.vertex_count(); ++v) {
    LiveVertex& lv = live[static_cast<size_t>(v)];
    lv.id = g.vertex(v).id;
    lv.f = g.vertex(v).factor;
    for (int inst : g.edge_modes(v)) lv.metas.push_back({meta_graph, inst});
    if (g.vertex(v).open_dim > 0)
      lv.metas.push_back({meta_open, g.vertex(v).id});
  }
  return live;
}

// fuse all bundle modes of lv into one leading mode
void bundle_front(LiveVertex& lv, const std::vector<int>& bundle) {
  std::vector<int> perm;
  for (int inst : bundle)
    perm.push_back(meta_index(lv.metas, meta_graph, inst));
  std::vector<Meta> rest;
  for (size_t m = 0; m < lv.metas.size(); ++m)
    if (std::find(perm.begin(), perm.end(), static_cast<int>(m)) == perm.end())
      rest.push_back(lv.metas[m]);
  std::vector<int> full = perm;
  for (size_t m = 0; m < lv.metas.size(); ++m)
    if (std::find(perm.begin(), perm.end(), static_cast<int>(m)) == perm.end())
      full.push_back(static_cast<int>(m));
  lv.f = permute_modes(lv.f, full);
  index_t bvol = 1;
  for (size_t i = 0; i < bundle.size(); ++i) bvol *= lv.f.dims()[i];
  std::vector<index_t> nd{bvol};
  for (size_t i = bundle.size(); i < lv.f.dims().size(); ++i)
    nd.push_back(lv.f.dims()[i]);
  lv.f = reshape(lv.f, nd);
  lv.metas.clear();
  lv.metas.push_back({meta_graph, -1});  // consumed below
  for (const Meta& m : rest) lv.metas.push_back(m);
}

// contract two lives over their (already fused, leading) bundle mode
LiveVertex contract_live(LiveVertex&& a, LiveVertex&& b) {
  LiveVertex w;
  w.id = std::min(a.id, b.id);
  w.f = contract(a.f, 0, b.f, 0);
  for (size_t m = 1; m < a.metas.size(); ++m) w.metas.push_back(a.metas[m]);
  for (size_t m = 1; m < b.metas.size(); ++m) w.metas.push_back(b.metas[m]);
  if (w.metas.empty())
    require(w.f.order() == 1 && w.f.dims()[0] == 1,
            "internal network bookkeeping error: stray modes after closure");
  return w;
}

}  // namespace

Tensor general_contract(const GeneralNetwork& g, const ContractionPlan& plan) {
  GraphState st(g);
  std::vector<LiveVertex> live = initial_live(g);
  for (size_t step = 0; step < plan.steps.size(); ++step) {
    auto [uid, vid] = plan.steps[step];
    int a = st.slot_of(uid);
    int b = st.slot_of(vid);
    require(a != b, "contraction step joins a vertex with itself");
    std::vector<int> bundle = st.bundle(a, b);
    require(!bundle.empty(),
            "contraction step joins vertices with no connecting edge");
    if (st.ids[static_cast<size_t>(a)] > st.ids[static_cast<size_t>(b)])
      std::swap(a, b);
    bundle_front(live[static_cast<size_t>(a)], bundle);
    bundle_front(live[static_cast<size_t>(b)], bundle);
    live[static_cast<size_t>(a)] =
        contract_live(std::move(live[static_cast<size_t>(a)]),
                      std::move(live[static_cast<size_t>(b)]));
    live[static_cast<size_t>(b)].alive = false;
    st.contract_pair(a, b);
  }
  require(st.live_count() == 1,
          "contraction plan does not reduce the network to a single vertex");
  int last = -1;
  for (size_t i = 0; i < st.ids.size(); ++i)
    if (st.ids[i] != -1) last = static_cast<int>(i);
  LiveVertex& w = live[static_cast<size_t>(last)];
  if (w.metas.empty()) return w.f;  // fully closed network: a single value
  std::vector<std::pair<int, int>> opens;  // (owner, mode)
  for (size_t m = 0; m < w.metas.size(); ++m) {
    require(w.metas[m].kind == meta_open,
            "internal network bookkeeping error: unresolved edge mode");
    opens.push_back({w.metas[m].ref, static_cast<int>(m)});
  }
  std::sort(opens.begin(), opens.end());
  std::vector<int> perm;
  for (const auto& [owner, mode] : opens) perm.push_back(mode);
  return permute_modes(w.f, perm);
}

Tensor general_contract(const GeneralNetwork& g) {
  return general_contract(g, plan_contraction(g));
}

namespace {

struct NodeForest {
  std::vector<TreeNode> nodes;
  int root = -1;

  int parent_of(int n) const {
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i].alive) continue;
      for (const Meta& m : nodes[i].metas)
        if (m.kind == meta_child && m.ref == n) return static_cast<int>(i);
    }
    return -1;
  }
  int tree_degree(int n) const {
    int d = static_cast<int>(n) == root ? 0 : 1;
    for (const Meta& m : nodes[static_cast<size_t>(n)].metas)
      d += m.kind == meta_child;
    return d;
  }
  std::vector<int> open_mode_indices(int n) const {
    std::vector<int> out;
    const auto& metas = nodes[static_cast<size_t>(n)].metas;
    for (size_t m = 0; m < metas.size(); ++m)
      if (metas[m].kind == meta_open) out.push_back(static_cast<int>(m));
    return out;
  }
};

// split extra open modes into leaf children, keeping the smallest owner
void split_multi_open(NodeForest& forest, json* log) {
  for (size_t n = 0; n < forest.nodes.size(); ++n) {
    if (!forest.nodes[n].alive) continue;
    while (true) {
      std::vector<int> opens = forest.open_mode_indices(static_cast<int>(n));
      if (opens.size() <= 1) break;
      int keep_mode = opens[0];
      for (int om : opens)
        if (forest.nodes[n].metas[static_cast<size_t>(om)].ref <
            forest.nodes[n].metas[static_cast<size_t>(keep_mode)].ref)
          keep_mode = om;
      int victim = -1;
      for (int om : opens)
        if (om != keep_mode &&
            (victim == -1 ||
             forest.nodes[n].metas[static_cast<size_t>(om)].ref <
                 forest.nodes[n].metas[static_cast<size_t>(victim)].ref))
          victim = om;
      std::vector<int> keep_modes;
      for (size_t m = 0; m < forest.nodes[n].metas.size(); ++m)
        if (static_cast<int>(m) != victim) keep_modes.push_back(static_cast<int>(m));
      SplitParts parts = split_factor(forest.nodes[n].f, keep_modes);
      int owner = forest.nodes[n].metas[static_cast<size_t>(victim)].ref;
      TreeNode leaf;
      leaf.f = parts.away;
      leaf.metas = {{meta_up, 0}, {meta_open, owner}};
      int leaf_idx = static_cast<int>(forest.nodes.size());
      std::vector<Meta> metas;
      for (int km : keep_modes)
        metas.push_back(forest.nodes[n].metas[static_cast<size_t>(km)]);
      metas.push_back({meta_child, leaf_idx});
      forest.nodes[n].f = parts.keep;
      forest.nodes[n].metas = std::move(metas);
      forest.nodes.push_back(std::move(leaf));
      if (log)
        log->push_back(json{{"phase", "normalize"},
                            {"kind", "open_split"},
                            {"owner", owner},
                            {"rank", parts.rank}});
    }
  }
}

// absorb open-free vertices of tree degree <= 2 into a neighbor
void absorb_closed(NodeForest& forest, json* log) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t n = 0; n < forest.nodes.size(); ++n) {
      TreeNode& nd = forest.nodes[n];
      if (!nd.alive || !forest.open_mode_indices(static_cast<int>(n)).empty())
        continue;
      int deg = forest.tree_degree(static_cast<int>(n));
      if (deg > 2) continue;
      std::vector<int> children;
      for (const Meta& m : nd.metas)
        if (m.kind == meta_child) children.push_back(m.ref);
      bool is_root = static_cast<int>(n) == forest.root;
      require(is_root || !children.empty() || deg <= 1,
              "internal network bookkeeping error");
      if (is_root) {
        require(!children.empty(),
                "compiled network has no open modes anywhere");
        std::sort(children.begin(), children.end(),
                  [&](int a, int b) {
                    return forest.nodes[static_cast<size_t>(a)].assigned_id <
                           forest.nodes[static_cast<size_t>(b)].assigned_id;
                  });
        int c = children[0];
        TreeNode& cn = forest.nodes[static_cast<size_t>(c)];
        int i_n = meta_index(nd.metas, meta_child, c);
        int i_c = up_index(cn.metas);
        Tensor merged = contract(nd.f, i_n, cn.f, i_c);
        std::vector<Meta> metas;
        for (size_t m = 0; m < nd.metas.size(); ++m)
          if (static_cast<int>(m) != i_n) metas.push_back(nd.metas[m]);
        for (size_t m = 0; m < cn.metas.size(); ++m)
          if (static_cast<int>(m) != i_c) metas.push_back(cn.metas[m]);
        cn.f = std::move(merged);
        cn.metas = std::move(metas);
        nd.alive = false;
        forest.root = c;
      } else if (children.empty()) {
        // closed leaf: fold its vector into the parent factor
        int p = forest.parent_of(static_cast<int>(n));
        TreeNode& pn = forest.nodes[static_cast<size_t>(p)];
        int i_p = meta_index(pn.metas, meta_child, static_cast<int>(n));
        int i_n = up_index(nd.metas);
        Tensor merged = contract(pn.f, i_p, nd.f, i_n);
        std::vector<Meta> metas;
        for (size_t m = 0; m < pn.metas.size(); ++m)
          if (static_cast<int>(m) != i_p) metas.push_back(pn.metas[m]);
        pn.f = std::move(merged);
        pn.metas = std::move(metas);
        nd.alive = false;
      } else {
        int c = children[0];
        TreeNode& cn = forest.nodes[static_cast<size_t>(c)];
        int i_n = meta_index(nd.metas, meta_child, c);
        int i_c = up_index(cn.metas);
        Tensor merged = contract(nd.f, i_n, cn.f, i_c);
        std::vector<Meta> metas;
        for (size_t m = 0; m < nd.metas.size(); ++m)
          if (static_cast<int>(m) != i_n) metas.push_back(nd.metas[m]);
        for (size_t m = 0; m < cn.metas.size(); ++m)
          if (static_cast<int>(m) != i_c) metas.push_back(cn.metas[m]);
        cn.f = std::move(merged);
        cn.metas = std::move(metas);
        nd.alive = false;
      }
      if (log) log->push_back(json{{"phase", "normalize"}, {"kind", "absorb"}});
      changed = true;
      break;
    }
  }
}

void assign_ids(NodeForest& forest, int max_owner_id) {
  int next = max_owner_id + 1;
  for (size_t n = 0; n < forest.nodes.size(); ++n) {
    if (!forest.nodes[n].alive) continue;
    std::vector<int> opens = forest.open_mode_indices(static_cast<int>(n));
    if (opens.size() == 1)
      forest.nodes[n].assigned_id =
          forest.nodes[n].metas[static_cast<size_t>(opens[0])].ref;
    else
      forest.nodes[n].assigned_id = next++;
  }
}

TreeNetwork forest_to_tree(NodeForest& forest, const GeneralNetwork& g) {
  std::vector<std::array<index_t, 3>> links;
  std::map<int, int> node_of_id;
  for (size_t n = 0; n < forest.nodes.size(); ++n) {
    if (!forest.nodes[n].alive) continue;
    const TreeNode& nd = forest.nodes[n];
    int parent = forest.parent_of(static_cast<int>(n));
    index_t open = 0;
    std::vector<int> opens = forest.open_mode_indices(static_cast<int>(n));
    if (!opens.empty())
      open = g.vertex(g.index_of(nd.metas[static_cast<size_t>(opens[0])].ref))
                 .open_dim;
    int parent_id =
        parent == -1 ? -1
                     : forest.nodes[static_cast<size_t>(parent)].assigned_id;
    links.push_back({nd.assigned_id, parent_id, open});
    node_of_id[nd.assigned_id] = static_cast<int>(n);
  }
  TreeNetwork net = TreeNetwork::from_links(links);
  require(net.vertex_count() == static_cast<int>(links.size()),
          "internal network bookkeeping error: normalization incomplete");
  for (int v = 0; v < net.vertex_count(); ++v) {
    const TreeNode& nd =
        forest.nodes[static_cast<size_t>(node_of_id.at(net.vertex(v).id))];
    // factor order: child edges ascending by child id, parent edge, open mode
    std::vector<std::pair<int, int>> children;  // (child id, mode)
    int up = -1, open = -1;
    for (size_t m = 0; m < nd.metas.size(); ++m) {
      const Meta& mm = nd.metas[m];
      if (mm.kind == meta_child)
        children.push_back(
            {forest.nodes[static_cast<size_t>(mm.ref)].assigned_id,
             static_cast<int>(m)});
      else if (mm.kind == meta_up)
        up = static_cast<int>(m);
      else if (mm.kind == meta_open)
        open = static_cast<int>(m);
    }
    std::sort(children.begin(), children.end());
    std::vector<int> perm;
    for (const auto& [cid, mode] : children) perm.push_back(mode);
    if (up != -1) perm.push_back(up);
    if (open != -1) perm.push_back(open);
    net.set_factor(v, permute_modes(nd.f, perm));
  }
  return net;
}

}  // namespace

CompileResult contract_to_tree(const GeneralNetwork& g,
                               const ContractionPlan& plan) {
  require(g.open_mode_count() >= 1,
          "cannot compile a network with no open modes into a tree");
  GraphState st(g);
  std::vector<LiveVertex> live = initial_live(g);
  NodeForest forest;
  json splits = json::array();
  int max_owner = 0;
  for (int v = 0; v < g.vertex_count(); ++v)
    max_owner = std::max(max_owner, g.vertex(v).id);

  for (size_t step = 0; step < plan.steps.size(); ++step) {
    auto [uid, vid] = plan.steps[step];
    try {
      int a = st.slot_of(uid);
      int b = st.slot_of(vid);
      require(a != b, "contraction step joins a vertex with itself");
      std::vector<int> bundle = st.bundle(a, b);
      require(!bundle.empty(),
              "contraction step joins vertices with no connecting edge");
      if (st.ids[static_cast<size_t>(a)] > st.ids[static_cast<size_t>(b)])
        std::swap(a, b);
      for (int side : {a, b}) {
        LiveVertex& lv = live[static_cast<size_t>(side)];
        std::vector<int> graph_modes, side_modes;
        for (size_t m = 0; m < lv.metas.size(); ++m)
          (lv.metas[m].kind == meta_graph ? graph_modes : side_modes)
              .push_back(static_cast<int>(m));
        if (side_modes.size() < 2) continue;
        SplitParts parts = split_factor(lv.f, graph_modes);
        TreeNode nd;
        nd.f = parts.away;
        nd.metas.push_back({meta_up, 0});
        for (int sm : side_modes)
          nd.metas.push_back(lv.metas[static_cast<size_t>(sm)]);
        int node_idx = static_cast<int>(forest.nodes.size());
        forest.nodes.push_back(std::move(nd));
        std::vector<Meta> metas;
        for (int gm : graph_modes)
          metas.push_back(lv.metas[static_cast<size_t>(gm)]);
        metas.push_back({meta_child, node_idx});
        lv.f = parts.keep;
        lv.metas = std::move(metas);
        splits.push_back(json{{"step", step},
                              {"vertex", lv.id},
                              {"graph_cols", parts.keep.size() / parts.rank},
                              {"side_cols", parts.away.size() / parts.rank},
                              {"rank", parts.rank}});
      }
      bundle_front(live[static_cast<size_t>(a)], bundle);
      bundle_front(live[static_cast<size_t>(b)], bundle);
      live[static_cast<size_t>(a)] =
          contract_live(std::move(live[static_cast<size_t>(a)]),
                        std::move(live[static_cast<size_t>(b)]));
      live[static_cast<size_t>(b)].alive = false;
      st.contract_pair(a, b);
    } catch (const resource_limit& e) {
      throw resource_limit("compilation step " + std::to_string(step) +
                           " contracting (" + std::to_string(uid) + ", " +
                           std::to_string(vid) + "): " + e.what());
    }
  }
  require(st.live_count() == 1,
          "contraction plan does not reduce the network to a single vertex");
  int last = -1;
  for (size_t i = 0; i < st.ids.size(); ++i)
    if (st.ids[i] != -1) last = static_cast<int>(i);
  LiveVertex& w = live[static_cast<size_t>(last)];
  for (const Meta& m : w.metas)
    require(m.kind != meta_graph,
            "internal network bookkeeping error: unresolved edge mode");
  TreeNode root;
  root.f = w.f;
  root.metas = w.metas;
  forest.root = static_cast<int>(forest.nodes.size());
  forest.nodes.push_back(std::move(root));

  try {
    split_multi_open(forest, &splits);
    assign_ids(forest, max_owner);
    absorb_closed(forest, &splits);
  } catch (const resource_limit& e) {
    throw resource_limit(
        std::string("while normalizing the compiled tree: ") + e.what());
  }

  CompileResult out{forest_to_tree(forest, g), json()};
  out.ledger["plan"] = plan.to_json();
  out.ledger["splits"] = splits;
  out.ledger["t_deg"] = plan.t_deg;
  out.ledger["vertices_out"] = out.tree.vertex_count();
  return out;
}

namespace {

// shape-only rerun of the compilation bookkeeping: which tree vertices would
// exist, who parents whom, and which open modes they carry
std::vector<std::array<index_t, 3>> symbolic_topology(
    const GeneralNetwork& g, const ContractionPlan& plan) {
  GraphState st(g);
  struct SymLive {
    std::vector<Meta> metas;  // meta_child / meta_open only
  };
  struct SymNode {
    std::vector<Meta> metas;
    int assigned_id = -1;
  };
  std::vector<SymLive> live(static_cast<size_t>(g.vertex_count()));
  for (int v = 0; v < g.vertex_count(); ++v)
    if (g.vertex(v).open_dim > 0)
      live[static_cast<size_t>(v)].metas.push_back(
          {meta_open, g.vertex(v).id});
  std::vector<SymNode> nodes;
  int max_owner = 0;
  for (int v = 0; v < g.vertex_count(); ++v)
    max_owner = std::max(max_owner, g.vertex(v).id);

  for (const auto& [uid, vid] : plan.steps) {
    int a = st.slot_of(uid);
    int b = st.slot_of(vid);
    require(a != b && !st.bundle(a, b).empty(), "invalid contraction plan");
    if (st.ids[static_cast<size_t>(a)] > st.ids[static_cast<size_t>(b)])
      std::swap(a, b);
    for (int side : {a, b}) {
      SymLive& lv = live[static_cast<size_t>(side)];
      if (lv.metas.size() < 2) continue;
      SymNode nd;
      nd.metas = lv.metas;
      int idx = static_cast<int>(nodes.size());
      nodes.push_back(std::move(nd));
      lv.metas = {{meta_child, idx}};
    }
    for (const Meta& m : live[static_cast<size_t>(b)].metas)
      live[static_cast<size_t>(a)].metas.push_back(m);
    live[static_cast<size_t>(b)].metas.clear();
    st.contract_pair(a, b);
  }
  int last = -1;
  for (size_t i = 0; i < st.ids.size(); ++i)
    if (st.ids[i] != -1) last = static_cast<int>(i);
  int root = static_cast<int>(nodes.size());
  nodes.push_back(SymNode{live[static_cast<size_t>(last)].metas, -1});

  // split extra open modes into leaf children (smallest owner stays)
  for (size_t n = 0; n < nodes.size(); ++n) {
    std::vector<int> opens;
    for (size_t m = 0; m < nodes[n].metas.size(); ++m)
      if (nodes[n].metas[m].kind == meta_open)
        opens.push_back(static_cast<int>(m));
    if (opens.size() <= 1) continue;
    std::sort(opens.begin(), opens.end(), [&](int x, int y) {
      return nodes[n].metas[static_cast<size_t>(x)].ref <
             nodes[n].metas[static_cast<size_t>(y)].ref;
    });
    std::vector<Meta> metas;
    for (size_t m = 0; m < nodes[n].metas.size(); ++m)
      if (std::find(opens.begin() + 1, opens.end(), static_cast<int>(m)) ==
          opens.end())
        metas.push_back(nodes[n].metas[m]);
    for (size_t e = 1; e < opens.size(); ++e) {
      int owner = nodes[n].metas[static_cast<size_t>(opens[e])].ref;
      int idx = static_cast<int>(nodes.size());
      nodes.push_back(SymNode{{{meta_open, owner}}, -1});
      metas.push_back({meta_child, idx});
    }
    nodes[n].metas = std::move(metas);
  }

  int next = max_owner + 1;
  for (auto& nd : nodes) {
    int owner = -1;
    for (const Meta& m : nd.metas)
      if (m.kind == meta_open) owner = m.ref;
    nd.assigned_id = owner != -1 ? owner : next++;
  }
  std::vector<int> parent(nodes.size(), -1);
  for (size_t n = 0; n < nodes.size(); ++n)
    for (const Meta& m : nodes[n].metas)
      if (m.kind == meta_child) parent[static_cast<size_t>(m.ref)] = static_cast<int>(n);

  std::vector<std::array<index_t, 3>> links;
  for (size_t n = 0; n < nodes.size(); ++n) {
    index_t open = 0;
    for (const Meta& m : nodes[n].metas)
      if (m.kind == meta_open)
        open = g.vertex(g.index_of(m.ref)).open_dim;
    int pid = parent[n] == -1
                  ? -1
                  : nodes[static_cast<size_t>(parent[n])].assigned_id;
    (void)root;
    links.push_back({nodes[n].assigned_id, pid, open});
  }
  return links;
}

}  // namespace

NetApproxResult approx_by_tree(const SparseTensor& a,
                               const GeneralNetwork& shape, index_t k,
                               const SketchParams& params, std::uint64_t seed) {
  require(k >= 1, "target rank must be at least 1");
  require(shape.open_mode_count() == a.order(),
          "network open modes do not match the tensor's mode count");
  require(shape.open_dims() == a.dims(),
          "network open mode sizes do not match the tensor's shape");
  ContractionPlan plan = plan_contraction(shape);
  TreeNetwork tree_shape =
      TreeNetwork::from_links(symbolic_topology(shape, plan));

  index_t target = 1;
  for (int i = 0; i < plan.t_deg; ++i) {
    if (target > dense_cap() / std::max<index_t>(k, 1))
      throw resource_limit("target rank k^t_deg exceeds the dense cap");
    target *= k;
  }
  target = std::max<index_t>(target, 1);

  SketchParams p = params;
  p.q = a.order();
  p.k = target;
  TreeResult res = tree_bicriteria(a, tree_shape, p, seed);

  NetApproxResult out{std::move(res.net), std::move(plan), json()};
  out.ledger["plan"] = out.plan.to_json();
  out.ledger["t_deg"] = out.plan.t_deg;
  out.ledger["target_rank"] = target;
  out.ledger["tree"] = res.ledger;
  return out;
}

}  // namespace tnsketch
